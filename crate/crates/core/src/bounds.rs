//! Quantitative verification of the pointwise kernel estimates: envelope
//! fitting for the Gaussian/time-decay bounds of `H`, the max-form bounds of
//! `Htilde`/`Gtilde`, the Szego and relative-inverse envelopes, cancellation
//! probes against bump functions, and the preliminary coefficient
//! inequalities.
//!
//! Every estimate has the shape `lhs <= C * prefactor * exp(-c * gain)` with
//! unknown constants `(C, c)`. The fit maximizes `c` subject to the bound
//! holding at every sample with `C <= C_CAP`; since the minimal feasible `C`
//! is nondecreasing in `c`, a bisection finds the sharpest witness. A report
//! passes when some `c >= 0.01` is feasible.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::operator::{assemble_box, assemble_first_order, OperatorForm, OperatorKind};
use crate::semigroup::{cg_solve, delta_field, LanczosDecomp, KRYLOV_MAX_DIM, KRYLOV_TOL};
use crate::weights::{
    binom, delta_scale, lambda_big, mu, twist_t, WeightPolynomial,
};

pub type C64 = Complex64;

pub const LOG_C_CAP: f64 = 13.815510557964274; // ln(1e6)
pub const C_MIN: f64 = 0.01;
pub const C_SEARCH_MAX: f64 = 8.0;
pub const MIN_SAMPLES: usize = 20;

// ---------------------------------------------------------------------------
// derivative bookkeeping

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum DerivOp {
    Zbar,
    Z,
    Wbar,
    W,
    M,
}

/// An `(n, ell)`-derivative: `n` twisted tau-derivatives and `ell` space
/// derivatives, listed first-applied first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct DerivativeSpec {
    pub order: Vec<DerivOp>,
}

impl DerivativeSpec {
    pub fn new(order: Vec<DerivOp>) -> Self {
        Self { order }
    }

    /// Canonical `(n, ell)` representative: `ell` copies of `Zbar` applied
    /// after `n` twisted derivatives.
    pub fn from_counts(n: usize, ell: usize) -> Self {
        let mut order = vec![DerivOp::M; n];
        order.extend(std::iter::repeat(DerivOp::Zbar).take(ell));
        Self { order }
    }

    pub fn n_tau(&self) -> usize {
        self.order.iter().filter(|o| **o == DerivOp::M).count()
    }

    pub fn ell(&self) -> usize {
        self.order.len() - self.n_tau()
    }
}

// ---------------------------------------------------------------------------
// twisted tau-derivative stencils

pub struct TauDerivative {
    pub values: Vec<C64>,
    /// Set when halving the step changed the result by more than 10%.
    pub untrusted: bool,
}

/// Central-stencil twisted derivative `M^m` of a tau-dependent field, with
/// phases `e^{-i (tau' - tau) T(anchor, z_i)}` anchored at the kernel source.
/// The step is Richardson-checked by halving.
pub fn twisted_tau_derivative(
    field_at: &mut dyn FnMut(f64) -> Result<Vec<C64>>,
    p: &WeightPolynomial,
    grid: &GridSpec,
    anchor: C64,
    tau: f64,
    m: usize,
    dtau: f64,
) -> Result<TauDerivative> {
    if m == 0 {
        return Ok(TauDerivative {
            values: field_at(tau)?,
            untrusted: false,
        });
    }
    if m > 2 {
        return Err(Error::Precondition(format!(
            "twisted stencils support order <= 2, got {m}"
        )));
    }
    let twists: Vec<f64> = (0..grid.len())
        .map(|i| twist_t(p, anchor, grid.point(i)))
        .collect();
    let mut eval = |step: f64| -> Result<Vec<C64>> {
        let phase = |field: Vec<C64>, t: f64| -> Vec<C64> {
            field
                .into_iter()
                .enumerate()
                .map(|(i, v)| (C64::new(0.0, -(t - tau) * twists[i])).exp() * v)
                .collect()
        };
        let up = phase(field_at(tau + step)?, tau + step);
        let dn = phase(field_at(tau - step)?, tau - step);
        Ok(match m {
            1 => up
                .iter()
                .zip(&dn)
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect(),
            _ => {
                let mid = field_at(tau)?;
                up.iter()
                    .zip(&dn)
                    .zip(&mid)
                    .map(|((a, b), c)| (a + b - 2.0 * c) / (step * step))
                    .collect()
            }
        })
    };
    let coarse = eval(dtau)?;
    let fine = eval(0.5 * dtau)?;
    let diff: f64 = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale: f64 = fine.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    Ok(TauDerivative {
        values: fine,
        untrusted: diff > 0.1 * scale.max(1e-300),
    })
}

pub fn default_dtau(tau: f64) -> f64 {
    (1e-3_f64).max(1e-3 * tau.abs())
}

// ---------------------------------------------------------------------------
// envelope fitting

/// `log_env(c) = log_prefactor - c * gain + max(log_a - c * gain_a, log_b)`
/// (the max pair is absent for pure-exponential envelopes).
#[derive(Clone, Debug, Serialize)]
pub struct EnvTerms {
    pub log_prefactor: f64,
    pub gain: f64,
    pub max_pair: Option<(f64, f64, f64)>,
}

impl EnvTerms {
    pub fn log_env(&self, c: f64) -> f64 {
        let mut v = self.log_prefactor - c * self.gain;
        if let Some((log_a, gain_a, log_b)) = self.max_pair {
            v += (log_a - c * gain_a).max(log_b);
        }
        v
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSample {
    pub log_lhs: f64,
    pub env: EnvTerms,
    pub location: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub location: String,
    pub log_lhs: f64,
    pub log_env_at_cmin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Serialize)]
pub struct BoundReport {
    pub estimate_id: String,
    #[serde(rename = "fitted_C")]
    pub fitted_big_c: f64,
    pub fitted_c: f64,
    /// Alternative fit with the anchor swapped to `w`, when applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_c_alt_anchor: Option<f64>,
    pub n_samples: usize,
    pub violations: Vec<Violation>,
    pub verdict: Verdict,
    #[serde(skip)]
    pub samples: Vec<FitSample>,
}

impl BoundReport {
    pub fn passes(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Per-sample `(lhs, envelope)` pairs at the fitted constants.
    pub fn write_samples_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "location,log_lhs,log_env_at_fit")?;
        for s in &self.samples {
            writeln!(out, "{},{:.17e},{:.17e}", s.location, s.log_lhs, s.env.log_env(self.fitted_c))?;
        }
        Ok(())
    }
}

/// Largest `c` with `max_i (log_lhs_i - log_env_i(c)) <= LOG_C_CAP`.
pub fn fit_envelope(estimate_id: &str, samples: Vec<FitSample>) -> Result<BoundReport> {
    let usable: Vec<&FitSample> = samples.iter().filter(|s| s.log_lhs.is_finite()).collect();
    if usable.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            need: MIN_SAMPLES,
            got: usable.len(),
        });
    }
    let residual = |c: f64| -> f64 {
        usable
            .iter()
            .map(|s| s.log_lhs - s.env.log_env(c))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    if residual(C_MIN) > LOG_C_CAP {
        let violations = usable
            .iter()
            .filter(|s| s.log_lhs - s.env.log_env(C_MIN) > LOG_C_CAP)
            .take(16)
            .map(|s| Violation {
                location: s.location.clone(),
                log_lhs: s.log_lhs,
                log_env_at_cmin: s.env.log_env(C_MIN),
            })
            .collect();
        return Ok(BoundReport {
            estimate_id: estimate_id.into(),
            fitted_big_c: f64::INFINITY,
            fitted_c: 0.0,
            fitted_c_alt_anchor: None,
            n_samples: usable.len(),
            violations,
            verdict: Verdict::Fail,
            samples,
        });
    }
    let (mut lo, mut hi) = (C_MIN, C_SEARCH_MAX);
    if residual(hi) <= LOG_C_CAP {
        lo = hi;
    } else {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) <= LOG_C_CAP {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let fitted_c = lo;
    Ok(BoundReport {
        estimate_id: estimate_id.into(),
        fitted_big_c: residual(fitted_c).exp(),
        fitted_c,
        fitted_c_alt_anchor: None,
        n_samples: usable.len(),
        violations: Vec::new(),
        verdict: Verdict::Pass,
        samples,
    })
}

// ---------------------------------------------------------------------------
// kernel sample machinery

/// Which kernel family a fit draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum EstimateKernel {
    HeatH,
    Htilde,
    Gtilde,
    Szego,
    RelativeInverse,
}

#[derive(Clone, Debug)]
pub struct KernelFitConfig {
    pub weight: WeightPolynomial,
    pub tau: f64,
    pub grid: GridSpec,
    pub w_point: C64,
    pub s_values: Vec<f64>,
    pub n_z_samples: usize,
    pub z_sample_radius: f64,
    pub seed: u64,
    pub spec: DerivativeSpec,
    pub k_time: usize,
    /// Replace `Lambda(z, Delta)^n` by `tau^{-n}` (the parameter-decay
    /// corollary form).
    pub tau_decay_form: bool,
    /// Long-time horizon approximating the Szego projection spectrally.
    pub szego_horizon: f64,
    /// Dirichlet margin requirement `R >= |z|,|w| + factor * sqrt(s_max)`.
    /// The default 6 is sized for the free-Gaussian tail; strongly confining
    /// weights decay much faster and admit a smaller factor (which also
    /// keeps the confining potential, and with it the spectral radius, in a
    /// Krylov-friendly range).
    pub boundary_margin_factor: f64,
}

impl KernelFitConfig {
    pub fn new(weight: WeightPolynomial, tau: f64, grid: GridSpec) -> Self {
        Self {
            weight,
            tau,
            grid,
            w_point: C64::new(0.5, 0.0),
            s_values: vec![0.35, 0.5, 0.7, 1.0],
            n_z_samples: 260,
            z_sample_radius: 2.0,
            seed: 1,
            spec: DerivativeSpec::from_counts(0, 0),
            k_time: 0,
            tau_decay_form: false,
            szego_horizon: 64.0,
            boundary_margin_factor: 6.0,
        }
    }
}

/// Seeded interior sample indices within `|z| <= radius`.
fn sample_indices(grid: &GridSpec, radius: f64, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<usize> = (0..grid.len())
        .filter(|&i| !grid.is_boundary(i) && grid.point(i).norm() <= radius)
        .collect();
    (0..count)
        .map(|_| candidates[rng.random_range(0..candidates.len())])
        .collect()
}

struct ColumnFamily {
    /// Column fields keyed by the requested evolution times.
    by_s: BTreeMap<u64, Vec<C64>>,
}

impl ColumnFamily {
    fn get(&self, s: f64) -> &Vec<C64> {
        &self.by_s[&s.to_bits()]
    }
}

/// Kernel columns of the stated family at one tau, shared across all `s`
/// through a single Lanczos decomposition.
fn kernel_columns(
    kind: EstimateKernel,
    p: &WeightPolynomial,
    grid: &GridSpec,
    tau: f64,
    w_index: usize,
    s_values: &[f64],
    szego_horizon: f64,
) -> Result<ColumnFamily> {
    let delta = delta_field(grid, w_index);
    let matrix = match kind {
        EstimateKernel::HeatH => {
            assemble_box(p, grid, tau, OperatorKind::Box, OperatorForm::Schrodinger)?.matrix
        }
        _ => assemble_box(p, grid, tau, OperatorKind::BoxTilde, OperatorForm::Factored)?.matrix,
    };
    let max_s = s_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(match kind {
            EstimateKernel::Gtilde | EstimateKernel::Szego => szego_horizon,
            _ => 0.0,
        });
    // sharp resolution of the near-null cluster at long horizons is slow;
    // envelope fits only need a few digits, so retry with a looser target
    // before giving up
    let mut lan = LanczosDecomp::build(&matrix, &delta, max_s, KRYLOV_TOL, KRYLOV_MAX_DIM)?;
    for (tol, dim) in [(1e-9, 700), (1e-7, 900)] {
        if lan.converged {
            break;
        }
        lan = LanczosDecomp::build(&matrix, &delta, max_s, tol, dim)?;
    }
    if !lan.converged {
        return Err(Error::NoConvergence("kernel column Lanczos did not converge".into()));
    }
    let mut by_s = BTreeMap::new();
    match kind {
        EstimateKernel::Szego => {
            by_s.insert(0f64.to_bits(), lan.apply_exp(szego_horizon));
        }
        EstimateKernel::Gtilde => {
            let tail = lan.apply_exp(szego_horizon);
            for &s in s_values {
                let col = lan.apply_exp(s);
                by_s.insert(
                    s.to_bits(),
                    col.iter().zip(&tail).map(|(a, b)| a - b).collect(),
                );
            }
        }
        _ => {
            for &s in s_values {
                by_s.insert(s.to_bits(), lan.apply_exp(s));
            }
        }
    }
    Ok(ColumnFamily { by_s })
}

/// Applies the space-derivative part of a spec to a column (z-side
/// operators only; `W` derivatives belong to the source side and are
/// rejected here).
fn apply_space_ops(
    p: &WeightPolynomial,
    grid: &GridSpec,
    tau: f64,
    spec: &DerivativeSpec,
    field: Vec<C64>,
) -> Result<Vec<C64>> {
    let mut out = field;
    for op in &spec.order {
        match op {
            DerivOp::M => {}
            DerivOp::Zbar => {
                out = assemble_first_order(p, grid, tau, OperatorKind::Zbar)?
                    .matrix
                    .apply(&out);
            }
            DerivOp::Z => {
                out = assemble_first_order(p, grid, tau, OperatorKind::Z)?
                    .matrix
                    .apply(&out);
            }
            DerivOp::Wbar | DerivOp::W => {
                return Err(Error::Precondition(
                    "source-side derivatives are not supported in column fits".into(),
                ));
            }
        }
    }
    Ok(out)
}

fn heat_h_derived_columns(cfg: &KernelFitConfig, kind: EstimateKernel) -> Result<ColumnFamily> {
    let grid = &cfg.grid;
    let w_index = grid.nearest_index(cfg.w_point)?;
    let m = cfg.spec.n_tau();
    let columns_at = |tau: f64| -> Result<ColumnFamily> {
        kernel_columns(
            kind,
            &cfg.weight,
            grid,
            tau,
            w_index,
            &cfg.s_values,
            cfg.szego_horizon,
        )
    };
    let s_keys: Vec<f64> = match kind {
        EstimateKernel::Szego => vec![0.0],
        _ => cfg.s_values.clone(),
    };
    let mut by_s = BTreeMap::new();
    if m == 0 {
        let fam = columns_at(cfg.tau)?;
        for &s in &s_keys {
            by_s.insert(s.to_bits(), fam.get(s).clone());
        }
    } else {
        // one column family per stencil node, reused for every s
        let dtau = default_dtau(cfg.tau);
        let mut cache: BTreeMap<u64, ColumnFamily> = BTreeMap::new();
        for &s in &s_keys {
            let mut field_at = |t: f64| -> Result<Vec<C64>> {
                if !cache.contains_key(&t.to_bits()) {
                    cache.insert(t.to_bits(), columns_at(t)?);
                }
                Ok(cache[&t.to_bits()].get(s).clone())
            };
            let d = twisted_tau_derivative(
                &mut field_at,
                &cfg.weight,
                grid,
                cfg.w_point,
                cfg.tau,
                m,
                dtau,
            )?;
            by_s.insert(s.to_bits(), d.values);
        }
    }
    // time derivatives then space derivatives
    let boxm = assemble_box(
        &cfg.weight,
        grid,
        cfg.tau,
        OperatorKind::Box,
        OperatorForm::Schrodinger,
    )?
    .matrix;
    let mut out = BTreeMap::new();
    for (k, col) in by_s {
        let mut v = col;
        for _ in 0..cfg.k_time {
            v = boxm.apply(&v).iter().map(|x| -x).collect();
        }
        v = apply_space_ops(&cfg.weight, grid, cfg.tau, &cfg.spec, v)?;
        out.insert(k, v);
    }
    Ok(ColumnFamily { by_s: out })
}

/// Fits the Gaussian/time-decay envelope of the `Box` heat kernel:
/// `|d_s^k Y^J H(s,z,w)| <= C Lambda(z,Delta)^n s^{-1-k-ell/2}
///  exp(-c(|z-w|^2/s + s/mu(z,1/tau)^2 + s/mu(w,1/tau)^2))`,
/// plus the `tau^{-n}` corollary form on request. Both the `z`- and
/// `w`-anchored prefactors are fitted; the report carries the alternative.
pub fn fit_gaussian_bound(cfg: &KernelFitConfig) -> Result<BoundReport> {
    let grid = &cfg.grid;
    let p = &cfg.weight;
    let n = cfg.spec.n_tau();
    let ell = cfg.spec.ell();
    let factor = cfg.boundary_margin_factor;
    let required =
        grid.radius - factor * cfg.s_values.iter().cloned().fold(0.0f64, f64::max).sqrt();
    if cfg.w_point.norm() > required || cfg.z_sample_radius > required {
        return Err(Error::Precondition(format!(
            "Dirichlet truncation margin violated: need |z|,|w| <= R - {factor} sqrt(s_max) = {required:.2}"
        )));
    }
    let fam = heat_h_derived_columns(cfg, EstimateKernel::HeatH)?;
    let w_snapped = grid.point(grid.nearest_index(cfg.w_point)?);
    let z_idx = sample_indices(grid, cfg.z_sample_radius, cfg.n_z_samples, cfg.seed);
    let mu_w = mu(p, w_snapped, 1.0 / cfg.tau)?;
    let mut samples = Vec::new();
    let mut samples_alt = Vec::new();
    for &s in &cfg.s_values {
        let col = fam.get(s);
        for &zi in &z_idx {
            let z = grid.point(zi);
            let lhs = col[zi].norm();
            let mu_z = mu(p, z, 1.0 / cfg.tau)?;
            let gain = (z - w_snapped).norm_sqr() / s + s / (mu_z * mu_z) + s / (mu_w * mu_w);
            let power = -(1.0 + cfg.k_time as f64 + 0.5 * ell as f64) * s.ln();
            let pref = |anchor: C64| -> Result<f64> {
                Ok(if cfg.tau_decay_form {
                    -(n as f64) * cfg.tau.ln() + power
                } else {
                    let d = delta_scale(p, anchor, cfg.tau, s)?;
                    (n as f64) * lambda_big(p, anchor, d).max(1e-300).ln() + power
                })
            };
            let location = format!("s={s},z=({:.3},{:.3})", z.re, z.im);
            samples.push(FitSample {
                log_lhs: lhs.max(0.0).ln(),
                env: EnvTerms {
                    log_prefactor: pref(z)?,
                    gain,
                    max_pair: None,
                },
                location: location.clone(),
            });
            samples_alt.push(FitSample {
                log_lhs: lhs.max(0.0).ln(),
                env: EnvTerms {
                    log_prefactor: pref(w_snapped)?,
                    gain,
                    max_pair: None,
                },
                location,
            });
        }
    }
    let id = if cfg.tau_decay_form {
        format!("heat_H_tau_decay_n{n}_l{ell}_k{}", cfg.k_time)
    } else {
        format!("heat_H_n{n}_l{ell}_k{}", cfg.k_time)
    };
    let mut report = fit_envelope(&id, samples)?;
    if !cfg.tau_decay_form && n > 0 {
        if let Ok(alt) = fit_envelope(&id, samples_alt) {
            report.fitted_c_alt_anchor = Some(alt.fitted_c);
        }
    }
    Ok(report)
}

/// Fits the `Htilde` / `Gtilde` max-form envelopes, the Szego envelope, or
/// the relative-inverse envelope.
pub fn fit_gtilde_bound(cfg: &KernelFitConfig, which: EstimateKernel) -> Result<BoundReport> {
    let grid = &cfg.grid;
    let p = &cfg.weight;
    let n = cfg.spec.n_tau();
    let ell = cfg.spec.ell();
    let w_index = grid.nearest_index(cfg.w_point)?;
    let w_snapped = grid.point(w_index);
    let mu_w = mu(p, w_snapped, 1.0 / cfg.tau)?;
    let z_idx = sample_indices(grid, cfg.z_sample_radius, cfg.n_z_samples, cfg.seed);
    let mut samples = Vec::new();
    let mut push = |s_label: f64, zi: usize, lhs: f64, env: EnvTerms| {
        let z = grid.point(zi);
        samples.push(FitSample {
            log_lhs: lhs.max(0.0).ln(),
            env,
            location: format!("s={s_label},z=({:.3},{:.3})", z.re, z.im),
        });
    };
    match which {
        EstimateKernel::Htilde => {
            let fam = heat_h_derived_columns(cfg, EstimateKernel::Htilde)?;
            for &s in &cfg.s_values {
                let col = fam.get(s);
                for &zi in &z_idx {
                    let z = grid.point(zi);
                    let mu_z = mu(p, z, 1.0 / cfg.tau)?;
                    let d = (z - w_snapped).norm();
                    let dl = delta_scale(p, z, cfg.tau, s)?;
                    let pref = (n as f64) * lambda_big(p, z, dl).max(1e-300).ln()
                        - (2.0 + ell as f64) * dl.ln();
                    let gain = d * d / s + d / mu_z + d / mu_w;
                    push(
                        s,
                        zi,
                        col[zi].norm(),
                        EnvTerms {
                            log_prefactor: pref,
                            gain,
                            max_pair: None,
                        },
                    );
                }
            }
        }
        EstimateKernel::Gtilde => {
            let fam = heat_h_derived_columns(cfg, EstimateKernel::Gtilde)?;
            for &s in &cfg.s_values {
                let col = fam.get(s);
                for &zi in &z_idx {
                    let z = grid.point(zi);
                    let mu_z = mu(p, z, 1.0 / cfg.tau)?;
                    let d = (z - w_snapped).norm();
                    let gain = s / (mu_w * mu_w) + s / (mu_z * mu_z) + d / mu_z + d / mu_w;
                    let env = EnvTerms {
                        log_prefactor: -(n as f64) * cfg.tau.ln(),
                        gain,
                        max_pair: Some((
                            -(1.0 + 0.5 * ell as f64) * s.ln(),
                            d * d / s,
                            -(2.0 + ell as f64) * mu_w.ln(),
                        )),
                    };
                    push(s, zi, col[zi].norm(), env);
                }
            }
        }
        EstimateKernel::Szego => {
            let fam = heat_h_derived_columns(cfg, EstimateKernel::Szego)?;
            let col = fam.get(0.0);
            for &zi in &z_idx {
                let z = grid.point(zi);
                let mu_z = mu(p, z, 1.0 / cfg.tau)?;
                let d = (z - w_snapped).norm();
                let pref = -(n as f64) * cfg.tau.ln() - (2.0 + ell as f64) * mu_z.ln();
                push(
                    0.0,
                    zi,
                    col[zi].norm(),
                    EnvTerms {
                        log_prefactor: pref,
                        gain: d / mu_z + d / mu_w,
                        max_pair: None,
                    },
                );
            }
        }
        EstimateKernel::RelativeInverse => {
            // column of R = -Z Box^{-1} through the Schrodinger form
            let boxm = assemble_box(p, grid, cfg.tau, OperatorKind::Box, OperatorForm::Schrodinger)?;
            let zm = assemble_first_order(p, grid, cfg.tau, OperatorKind::Z)?;
            let (u, _) = cg_solve(&boxm.matrix, &delta_field(grid, w_index), 1e-10, 100_000, None)?;
            let col: Vec<C64> = zm.matrix.apply(&u).iter().map(|v| -v).collect();
            let col = apply_space_ops(p, grid, cfg.tau, &cfg.spec, col)?;
            for &zi in &z_idx {
                let z = grid.point(zi);
                if (z - w_snapped).norm() < 1e-12 {
                    continue;
                }
                let mu_z = mu(p, z, 1.0 / cfg.tau)?;
                let d = (z - w_snapped).norm();
                let (pref, gain) = if d <= mu_z {
                    (
                        -(n as f64) * cfg.tau.ln() - (ell as f64) * d.ln(),
                        0.0,
                    )
                } else {
                    (
                        -(n as f64) * cfg.tau.ln()
                            - (1.0 + (n + ell) as f64) * mu_z.ln(),
                        d / mu_z + d / mu_w,
                    )
                };
                push(
                    0.0,
                    zi,
                    col[zi].norm(),
                    EnvTerms {
                        log_prefactor: pref,
                        gain,
                        max_pair: None,
                    },
                );
            }
        }
        EstimateKernel::HeatH => {
            return Err(Error::Precondition(
                "use fit_gaussian_bound for the heat kernel".into(),
            ));
        }
    }
    fit_envelope(
        &format!("{:?}_n{n}_l{ell}", which).to_lowercase(),
        samples,
    )
}

/// Numerical check of `min_{s>0} (d^2/s + s/mu^2) = 2 d / mu` over a log
/// grid in `s`; returns `(min_found, 2 d / mu)`.
pub fn min_gaussian_time_tradeoff(d: f64, mu_val: f64, s_points: usize) -> (f64, f64) {
    let s_star = d * mu_val;
    let mut best = f64::INFINITY;
    for i in 0..s_points {
        let t = -4.0 + 8.0 * i as f64 / (s_points - 1) as f64;
        let s = s_star * (10f64).powf(t);
        best = best.min(d * d / s + s / (mu_val * mu_val));
    }
    (best, 2.0 * d / mu_val)
}

// ---------------------------------------------------------------------------
// cancellation probe

/// The standard interior bump `exp(-1/(1-r^2))` scaled to `D(z, delta)`.
pub fn bump_field(grid: &GridSpec, center: C64, delta: f64) -> Vec<C64> {
    (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) {
                return C64::new(0.0, 0.0);
            }
            let r2 = (grid.point(i) - center).norm_sqr() / (delta * delta);
            if r2 >= 1.0 {
                C64::new(0.0, 0.0)
            } else {
                C64::new((-1.0 / (1.0 - r2)).exp(), 0.0)
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CancellationSample {
    pub delta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct CancellationConfig {
    pub weight: WeightPolynomial,
    pub tau: f64,
    pub grid: GridSpec,
    pub z: C64,
    pub s: f64,
    pub spec: DerivativeSpec,
    /// Multiples of `min(mu(z, 1/tau), sqrt(s))` swept as bump radii.
    pub delta_fractions: Vec<f64>,
}

/// `|Y^J H^s[phi](z)|` against the cancellation envelope
/// `Lambda(z,Delta)^n / delta * (even: |Box^{l/2} phi| + d^2 |Box^{l/2+1} phi|,
///  odd: d |Box^{(l+1)/2} phi| + d^3 |Box^{(l+3)/2} phi|)`.
/// Pass criterion (checked by the caller): the ratio stays within a
/// delta-independent band over the sweep.
pub fn cancellation_probe(cfg: &CancellationConfig) -> Result<Vec<CancellationSample>> {
    let p = &cfg.weight;
    let grid = &cfg.grid;
    let n = cfg.spec.n_tau();
    let ell = cfg.spec.ell();
    if cfg
        .spec
        .order
        .iter()
        .any(|o| matches!(o, DerivOp::Wbar | DerivOp::W))
    {
        return Err(Error::Precondition(
            "cancellation probe supports z-side and twisted derivatives".into(),
        ));
    }
    let mu_z = mu(p, cfg.z, 1.0 / cfg.tau)?;
    let cap = mu_z.max(cfg.s.sqrt());
    let base = mu_z.min(cfg.s.sqrt());
    let z_index = grid.nearest_index(cfg.z)?;
    let boxm = assemble_box(p, grid, cfg.tau, OperatorKind::Box, OperatorForm::Schrodinger)?.matrix;
    let l2 = |f: &[C64]| grid.spacing * f.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let mut out = Vec::new();
    for &frac in &cfg.delta_fractions {
        let delta = frac * base;
        if delta > cap {
            return Err(Error::Precondition(format!(
                "bump radius {delta} exceeds max(mu, sqrt(s)) = {cap}"
            )));
        }
        let phi = bump_field(grid, cfg.z, delta);
        let support = phi.iter().filter(|v| v.norm() > 0.0).count();
        if support < 9 {
            return Err(Error::Precondition(format!(
                "bump of radius {delta} unresolved: {support} grid nodes"
            )));
        }
        // lhs = |Y^J e^{-s Box} phi (z)| with the twisted part by stencil
        let field_at = |t: f64| -> Result<Vec<C64>> {
            let m = assemble_box(p, grid, t, OperatorKind::Box, OperatorForm::Schrodinger)?.matrix;
            let lan = LanczosDecomp::build(&m, &phi, cfg.s, KRYLOV_TOL, KRYLOV_MAX_DIM)?;
            if !lan.converged {
                return Err(Error::NoConvergence("cancellation probe Lanczos".into()));
            }
            Ok(lan.apply_exp(cfg.s))
        };
        let u = if n == 0 {
            field_at(cfg.tau)?
        } else {
            // phases anchored at the evaluation point: the twist enters as
            // T(w_node, z)
            let twists: Vec<f64> = (0..grid.len())
                .map(|i| twist_t(p, grid.point(i), cfg.z))
                .collect();
            let dtau = default_dtau(cfg.tau);
            let apply_at = |t: f64| -> Result<Vec<C64>> {
                let phased: Vec<C64> = phi
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (C64::new(0.0, -(t - cfg.tau) * twists[i])).exp() * v)
                    .collect();
                let m =
                    assemble_box(p, grid, t, OperatorKind::Box, OperatorForm::Schrodinger)?.matrix;
                let lan = LanczosDecomp::build(&m, &phased, cfg.s, KRYLOV_TOL, KRYLOV_MAX_DIM)?;
                Ok(lan.apply_exp(cfg.s))
            };
            match n {
                1 => {
                    let up = apply_at(cfg.tau + dtau)?;
                    let dn = apply_at(cfg.tau - dtau)?;
                    up.iter()
                        .zip(&dn)
                        .map(|(a, b)| (a - b) / (2.0 * dtau))
                        .collect()
                }
                2 => {
                    let up = apply_at(cfg.tau + dtau)?;
                    let dn = apply_at(cfg.tau - dtau)?;
                    let mid = field_at(cfg.tau)?;
                    up.iter()
                        .zip(&dn)
                        .zip(&mid)
                        .map(|((a, b), c)| (a + b - 2.0 * c) / (dtau * dtau))
                        .collect()
                }
                _ => {
                    return Err(Error::Precondition(
                        "cancellation probe supports at most two twisted derivatives".into(),
                    ));
                }
            }
        };
        let u = apply_space_ops(p, grid, cfg.tau, &cfg.spec, u)?;
        let lhs = u[z_index].norm();
        let dl = delta_scale(p, cfg.z, cfg.tau, cfg.s)?;
        let lam_n = lambda_big(p, cfg.z, dl).powi(n as i32);
        let box_pow = |f: &[C64], k: usize| -> Vec<C64> {
            let mut v = f.to_vec();
            for _ in 0..k {
                v = boxm.apply(&v);
            }
            v
        };
        let rhs = if ell % 2 == 0 {
            lam_n / delta
                * (l2(&box_pow(&phi, ell / 2)) + delta * delta * l2(&box_pow(&phi, ell / 2 + 1)))
        } else {
            lam_n / delta
                * (delta * l2(&box_pow(&phi, (ell + 1) / 2))
                    + delta.powi(3) * l2(&box_pow(&phi, (ell + 3) / 2)))
        };
        out.push(CancellationSample {
            delta,
            lhs,
            rhs,
            ratio: lhs / rhs.max(1e-300),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// preliminary coefficient inequalities

/// Polynomial in `(w, wbar, xi, xibar)` with exact Wirtinger derivatives;
/// carries the symbolic side of the coefficient inequalities.
#[derive(Clone, Debug, Default)]
pub struct Poly4 {
    terms: BTreeMap<[u8; 4], C64>,
}

impl Poly4 {
    pub fn add_term(&mut self, exps: [u8; 4], v: C64) {
        if v.norm() > 0.0 {
            let slot = self.terms.entry(exps).or_insert(C64::new(0.0, 0.0));
            *slot += v;
            if slot.norm() == 0.0 {
                self.terms.remove(&exps);
            }
        }
    }

    /// d/d(var) with var indexing (w, wbar, xi, xibar).
    pub fn derivative(&self, var: usize) -> Poly4 {
        let mut out = Poly4::default();
        for (&e, &v) in &self.terms {
            if e[var] > 0 {
                let mut f = e;
                f[var] -= 1;
                out.add_term(f, v * e[var] as f64);
            }
        }
        out
    }

    pub fn eval(&self, w: C64, xi: C64) -> C64 {
        let vars = [w, w.conj(), xi, xi.conj()];
        let mut acc = C64::new(0.0, 0.0);
        for (&e, &v) in &self.terms {
            let mut term = v;
            for (x, &p) in vars.iter().zip(&e) {
                term *= x.powu(p as u32);
            }
            acc += term;
        }
        acc
    }

    /// `e(w, xi) = sum_{j>=1} A_j1(xi) (w - xi)^j` expanded over the
    /// coefficient table.
    pub fn build_e(p: &WeightPolynomial) -> Poly4 {
        let mut out = Poly4::default();
        let deg = p.degree();
        for j in 1..=deg {
            // A_j1(xi) = sum_{m>=j, n>=1} C(m,j) n a_mn xi^{m-j} xibar^{n-1}
            for (&(m, nn), &a) in p.coefficients() {
                if m < j || nn < 1 {
                    continue;
                }
                let coeff = binom(m, j) * nn as f64;
                // (w - xi)^j = sum_t C(j,t) w^t (-xi)^{j-t}
                for t in 0..=j {
                    let sign = if (j - t) % 2 == 0 { 1.0 } else { -1.0 };
                    out.add_term(
                        [t as u8, 0, (m - j + (j - t)) as u8, (nn - 1) as u8],
                        a * coeff * binom(j, t) * sign,
                    );
                }
            }
        }
        out
    }

    /// `Lap p (xi) = 4 sum_{m,n>=1} m n a_mn xi^{m-1} xibar^{n-1}`.
    pub fn build_laplacian(p: &WeightPolynomial) -> Poly4 {
        let mut out = Poly4::default();
        for (&(m, n), &a) in p.coefficients() {
            if m >= 1 && n >= 1 {
                out.add_term([0, 0, (m - 1) as u8, (n - 1) as u8], a * (4.0 * m as f64 * n as f64));
            }
        }
        out
    }
}

/// Max modulus over all Wirtinger derivative words of total order `order`
/// drawn from `vars`; stands in for `|grad^order|` up to an absorbed
/// constant.
pub fn wirtinger_sup(poly: &Poly4, order: usize, vars: &[usize], w: C64, xi: C64) -> f64 {
    fn rec(p: &Poly4, left: usize, vars: &[usize], w: C64, xi: C64) -> f64 {
        if left == 0 {
            return p.eval(w, xi).norm();
        }
        let mut best = 0.0f64;
        for &v in vars {
            best = best.max(rec(&p.derivative(v), left - 1, vars, w, xi));
        }
        best
    }
    rec(poly, order, vars, w, xi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PreliminaryItem {
    /// `|grad^l e(w,xi)| <= C/tau min(s^{-l/2-1/2}, mu(xi,1/tau)^{-l-1})`
    /// under the Gaussian weights.
    A,
    /// `|grad^l Lap p(xi)| <= C/tau min(s^{-l/2-1}, mu(xi,1/tau)^{-l-2})`.
    B,
    /// As B with the min anchored at `w` and both Gaussian weights.
    C,
    /// As A with the min anchored at `w`.
    D,
    /// `|e^{-c|z-xi|^2/s} grad^m e(w,xi)| <= C e^{-c...} s^{-(m+1)/2}
    /// Lambda(z, sqrt s)` when `|z-w| <= sqrt s`.
    I,
    /// `e^{-c|z-xi|^2/s} Lambda(xi, sqrt s) <= C e^{-c...} Lambda(z, sqrt s)`.
    II,
}

/// Envelope fits for the preliminary inequalities over a seeded sample
/// cloud; one report per item.
pub fn preliminary_inequalities(
    p: &WeightPolynomial,
    tau: f64,
    seed: u64,
    n_samples: usize,
) -> Result<Vec<BoundReport>> {
    let e_poly = Poly4::build_e(p);
    let lap_poly = Poly4::build_laplacian(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fn pt(rng: &mut ChaCha8Rng, r: f64) -> C64 {
        C64::new(rng.random_range(-r..r), rng.random_range(-r..r))
    }
    struct Cloud {
        s: f64,
        z: C64,
        w: C64,
        xi: C64,
        ell: usize,
    }
    let mut clouds = Vec::new();
    for i in 0..n_samples {
        let s = 10f64.powf(rng.random_range(-1.3..0.6));
        let z = pt(&mut rng, 3.0);
        // side condition |z - w| <= sqrt(s) for item I
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let rad = rng.random_range(0.0..1.0f64) * s.sqrt();
        let w = z + C64::new(rad * angle.cos(), rad * angle.sin());
        let xi = pt(&mut rng, 3.0);
        clouds.push(Cloud {
            s,
            z,
            w,
            xi,
            ell: i % 3,
        });
    }
    let mut reports = Vec::new();
    for item in [
        PreliminaryItem::A,
        PreliminaryItem::B,
        PreliminaryItem::C,
        PreliminaryItem::D,
        PreliminaryItem::I,
        PreliminaryItem::II,
    ] {
        let mut samples = Vec::new();
        for (i, c) in clouds.iter().enumerate() {
            let mu_xi = mu(p, c.xi, 1.0 / tau)?;
            let mu_w = mu(p, c.w, 1.0 / tau)?;
            let location = format!("sample{i}");
            let (lhs, pref, gain) = match item {
                PreliminaryItem::A | PreliminaryItem::D => {
                    let lhs = wirtinger_sup(&e_poly, c.ell, &[0, 1, 2, 3], c.w, c.xi);
                    let anchor = if item == PreliminaryItem::A { mu_xi } else { mu_w };
                    let env = (1.0 / tau)
                        * (c.s.powf(-(c.ell as f64) / 2.0 - 0.5))
                            .min(anchor.powi(-(c.ell as i32) - 1));
                    let mut gain = (c.xi - c.w).norm_sqr() / c.s + c.s / (mu_xi * mu_xi);
                    if item == PreliminaryItem::D {
                        gain += c.s / (mu_w * mu_w);
                    }
                    (lhs, env, gain)
                }
                PreliminaryItem::B | PreliminaryItem::C => {
                    let lhs = wirtinger_sup(&lap_poly, c.ell, &[2, 3], c.w, c.xi);
                    let anchor = if item == PreliminaryItem::B { mu_xi } else { mu_w };
                    let env = (1.0 / tau)
                        * (c.s.powf(-(c.ell as f64) / 2.0 - 1.0))
                            .min(anchor.powi(-(c.ell as i32) - 2));
                    let gain = if item == PreliminaryItem::B {
                        c.s / (mu_xi * mu_xi)
                    } else {
                        (c.xi - c.w).norm_sqr() / c.s
                            + c.s / (mu_xi * mu_xi)
                            + c.s / (mu_w * mu_w)
                    };
                    (lhs, env, gain)
                }
                PreliminaryItem::I => {
                    let m = c.ell;
                    let lhs = wirtinger_sup(&e_poly, m, &[0, 1, 2, 3], c.w, c.xi);
                    let env = c.s.powf(-((m + 1) as f64) / 2.0) * lambda_big(p, c.z, c.s.sqrt());
                    let gain = (c.z - c.xi).norm_sqr() / c.s;
                    (lhs, env, gain)
                }
                PreliminaryItem::II => {
                    let lhs = lambda_big(p, c.xi, c.s.sqrt());
                    let env = lambda_big(p, c.z, c.s.sqrt());
                    let gain = (c.z - c.xi).norm_sqr() / c.s;
                    (lhs, env, gain)
                }
            };
            // the left side carries the same weights at full strength c0 = 1;
            // folding them into log_lhs leaves the fit linear in the reduced c
            samples.push(FitSample {
                log_lhs: lhs.max(0.0).ln() - gain,
                env: EnvTerms {
                    log_prefactor: pref.max(1e-300).ln(),
                    gain,
                    max_pair: None,
                },
                location,
            });
        }
        reports.push(fit_envelope(&format!("preliminary_{item:?}"), samples)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::e_fn;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn poly4_e_matches_direct_series() {
        for name in ["abs2", "abs4", "nonradial"] {
            let p = WeightPolynomial::preset(name).unwrap();
            let poly = Poly4::build_e(&p);
            for (w, xi) in [
                (c(0.3, 0.7), c(-0.2, 0.4)),
                (c(1.5, -1.0), c(0.6, 0.9)),
                (c(0.0, 0.0), c(2.0, -1.5)),
            ] {
                let a = poly.eval(w, xi);
                let b = e_fn(&p, w, xi);
                assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()), "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn poly4_laplacian_matches_weight() {
        let p = WeightPolynomial::preset("nonradial").unwrap();
        let poly = Poly4::build_laplacian(&p);
        for z in [c(0.2, 0.1), c(-1.4, 2.0)] {
            let a = poly.eval(c(0.0, 0.0), z).re;
            assert!((a - p.laplacian(z)).abs() < 1e-12 * (1.0 + p.laplacian(z).abs()));
        }
    }

    #[test]
    fn envelope_fitter_recovers_known_decay() {
        // synthetic data lhs = 3 exp(-0.37 g): expect c* ~ capped value and
        // feasibility
        let samples: Vec<FitSample> = (0..40)
            .map(|i| {
                let g = i as f64;
                FitSample {
                    log_lhs: (3.0f64).ln() - 0.37 * g,
                    env: EnvTerms {
                        log_prefactor: 0.0,
                        gain: g,
                        max_pair: None,
                    },
                    location: format!("i{i}"),
                }
            })
            .collect();
        let report = fit_envelope("synthetic", samples).unwrap();
        assert!(report.passes());
        // with C capped at 1e6, c can exceed 0.37 only until the worst
        // sample hits the cap; for g up to 39 that allows
        // 0.37 + ln(1e6 / 3) / 39
        let limit = 0.37 + (LOG_C_CAP - (3.0f64).ln()) / 39.0;
        assert!(report.fitted_c <= limit + 1e-6);
        assert!(report.fitted_c >= 0.37 - 1e-6);
    }

    #[test]
    fn envelope_fitter_rejects_nondecay() {
        // lhs constant but envelope demands decay with tiny C cap margin:
        // violation expected at large gains
        let samples: Vec<FitSample> = (0..40)
            .map(|i| FitSample {
                log_lhs: 20.0,
                env: EnvTerms {
                    log_prefactor: 0.0,
                    gain: i as f64 * 100.0,
                    max_pair: None,
                },
                location: format!("i{i}"),
            })
            .collect();
        let report = fit_envelope("synthetic_fail", samples).unwrap();
        assert!(!report.passes());
        assert!(!report.violations.is_empty());
    }

    #[test]
    fn insufficient_samples_rejected() {
        let samples: Vec<FitSample> = (0..5)
            .map(|i| FitSample {
                log_lhs: 0.0,
                env: EnvTerms {
                    log_prefactor: 0.0,
                    gain: i as f64,
                    max_pair: None,
                },
                location: String::new(),
            })
            .collect();
        assert!(matches!(
            fit_envelope("few", samples),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn min_identity_matches_two_d_over_mu() {
        for (d, m) in [(0.5, 1.0), (2.0, 0.3), (1.0, 1.0)] {
            let (found, expect) = min_gaussian_time_tradeoff(d, m, 4001);
            assert!((found - expect).abs() <= 1e-5 * expect, "{found} vs {expect}");
        }
    }

    #[test]
    fn twisted_stencil_kills_pure_phase() {
        let grid = GridSpec::new(3.0, 12).unwrap();
        let p = WeightPolynomial::preset("abs2").unwrap();
        let anchor = c(0.4, -0.3);
        let tau = 1.0;
        // f(tau') = e^{i tau' T(anchor, z)}: M f = 0 exactly at stencil level
        let mut field_at = |t: f64| -> Result<Vec<C64>> {
            Ok((0..grid.len())
                .map(|i| (C64::new(0.0, t * twist_t(&p, anchor, grid.point(i)))).exp())
                .collect())
        };
        let d = twisted_tau_derivative(&mut field_at, &p, &grid, anchor, tau, 1, 1e-3).unwrap();
        let max = d.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(max < 1e-10, "pure phase should vanish, got {max}");
        // constant field with T = 0 anchor at z: M f = 0
        let mut const_field = |_t: f64| -> Result<Vec<C64>> {
            Ok(vec![c(2.0, 0.0); grid.len()])
        };
        let d = twisted_tau_derivative(&mut const_field, &p, &grid, c(0.0, 0.0), tau, 1, 1e-3);
        // T(0, z) != 0 in general; use anchor = z pattern instead: here just
        // check the m = 0 passthrough
        let d0 = twisted_tau_derivative(&mut const_field, &p, &grid, c(0.0, 0.0), tau, 0, 1e-3).unwrap();
        assert!(!d0.untrusted);
        assert_eq!(d0.values[0], c(2.0, 0.0));
        drop(d);
    }

    #[test]
    fn twisted_stencil_reproduces_linear_tau_dependence() {
        // the analytic value is M f = df/dtau - i T f; the stencil must
        // reproduce it at second order in the step
        let grid = GridSpec::new(1.5, 10).unwrap();
        let p = WeightPolynomial::preset("abs4").unwrap();
        let anchor = c(0.5, 0.2);
        let tau = 0.7;
        let field_at = |t: f64| -> Result<Vec<C64>> {
            Ok((0..grid.len()).map(|i| c(t, 0.0) * p.ajk(grid.point(i), 1, 1)).collect())
        };
        let err_at = |dtau: f64| -> f64 {
            let mut field = |t: f64| field_at(t);
            let d = twisted_tau_derivative(&mut field, &p, &grid, anchor, tau, 1, dtau).unwrap();
            assert!(!d.untrusted);
            (0..grid.len())
                .map(|i| {
                    let z = grid.point(i);
                    let f = tau * p.ajk(z, 1, 1);
                    let expect = p.ajk(z, 1, 1) - C64::new(0.0, twist_t(&p, anchor, z)) * f;
                    (d.values[i] - expect).norm()
                })
                .fold(0.0, f64::max)
        };
        let e1 = err_at(2e-2);
        let e2 = err_at(1e-2);
        assert!(e2 <= 1e-2, "stencil error too large: {e2}");
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "expected O(dtau^2), got order {order} ({e1} -> {e2})");
    }

    #[test]
    fn bump_is_supported_in_disk() {
        let grid = GridSpec::new(2.0, 41).unwrap();
        let phi = bump_field(&grid, c(0.3, -0.1), 0.5);
        for i in 0..grid.len() {
            let inside = (grid.point(i) - c(0.3, -0.1)).norm() < 0.5;
            if !inside {
                assert_eq!(phi[i], c(0.0, 0.0));
            }
        }
        assert!(phi.iter().any(|v| v.norm() > 0.1));
    }

    #[test]
    fn preliminary_items_feasible_smoke() {
        let p = WeightPolynomial::preset("abs4").unwrap();
        let reports = preliminary_inequalities(&p, 1.0, 42, 120).unwrap();
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert!(r.passes(), "{} failed: {:?}", r.estimate_id, r.violations);
            assert!(r.fitted_c >= C_MIN);
        }
    }
}
