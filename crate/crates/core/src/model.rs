//! Reconstruction of the model heat kernel on the hypersurface
//! `Im w = p(z)` by partial inverse Fourier transform in the parameter:
//! `H(s, z, w, t) = (2 pi)^{-1/2} int e^{-i t tau} H_tau(s, z, w) d tau`,
//! with the negative-parameter slices reached through the reflection
//! relation, plus the decay checks against the model metric.
//!
//! With this transform convention each twisted derivative produced by
//! integration by parts contributes a factor `i (t - T(w, z))`, so the dual
//! time variable of the oscillation is `t - T(w,z) = t + T(z,w)`; the decay
//! envelopes use it through `mu_p(z, |t + T(z,w)|)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{fit_envelope, BoundReport, EnvTerms, FitSample};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::operator::{assemble_box, OperatorForm, OperatorKind};
use crate::semigroup::{delta_field, LanczosDecomp, KRYLOV_MAX_DIM, KRYLOV_TOL};
use crate::weights::{lambda_big, mu_or_zero, twist_t, WeightPolynomial};

pub type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    Trapezoid,
    GaussLegendre,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperWindow {
    None,
    CosineTaper,
}

/// Symmetric quadrature over `[-tau_max, tau_max]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TauQuadrature {
    pub tau_max: f64,
    pub nodes: usize,
    pub rule: QuadRule,
    pub window: TaperWindow,
}

const GL4_NODES: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.3478548451374538,
    0.6521451548625461,
    0.6521451548625461,
    0.3478548451374538,
];

impl TauQuadrature {
    pub fn new(tau_max: f64, nodes: usize, rule: QuadRule, window: TaperWindow) -> Result<Self> {
        if !(tau_max > 0.0) {
            return Err(Error::Precondition(format!("tau_max must be positive, got {tau_max}")));
        }
        if nodes < 16 {
            return Err(Error::Precondition(format!("need at least 16 nodes, got {nodes}")));
        }
        Ok(Self {
            tau_max,
            nodes,
            rule,
            window,
        })
    }

    /// Node/weight pairs; the set is symmetric about zero (trapezoid uses an
    /// odd count including zero, composite Gauss-Legendre an even panel
    /// count).
    pub fn nodes_weights(&self) -> Vec<(f64, f64)> {
        match self.rule {
            QuadRule::Trapezoid => {
                let n = if self.nodes % 2 == 0 { self.nodes + 1 } else { self.nodes };
                let h = 2.0 * self.tau_max / (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        let tau = -self.tau_max + i as f64 * h;
                        let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                        (tau, w)
                    })
                    .collect()
            }
            QuadRule::GaussLegendre => {
                let mut panels = self.nodes.div_ceil(4);
                if panels % 2 == 1 {
                    panels += 1;
                }
                let width = 2.0 * self.tau_max / panels as f64;
                let mut out = Vec::with_capacity(4 * panels);
                for p in 0..panels {
                    let left = -self.tau_max + p as f64 * width;
                    for (x, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                        out.push((left + 0.5 * width * (x + 1.0), 0.5 * width * w));
                    }
                }
                out
            }
        }
    }

    /// Taper factor: 1 inside `0.75 tau_max`, cosine-squared roll-off
    /// outside.
    pub fn window_at(&self, tau: f64) -> f64 {
        match self.window {
            TaperWindow::None => 1.0,
            TaperWindow::CosineTaper => {
                let a = tau.abs() / self.tau_max;
                if a <= 0.75 {
                    1.0
                } else if a >= 1.0 {
                    0.0
                } else {
                    let x = (a - 0.75) / 0.25;
                    (0.5 * std::f64::consts::PI * x).cos().powi(2)
                }
            }
        }
    }
}

/// Truncation point `8 / Lambda(z, sqrt s)`, the splitting scale of the
/// two-regime estimate, with the safety factor 8.
pub fn default_tau_max(p: &WeightPolynomial, z: C64, s: f64) -> f64 {
    8.0 / lambda_big(p, z, s.sqrt()).max(1e-6)
}

fn pairwise_sum(values: &[C64]) -> C64 {
    match values.len() {
        0 => C64::new(0.0, 0.0),
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Spectral shift making the Schrodinger `BoxTilde` safely positive
/// semidefinite (its near-null cluster smears a little below zero at finite
/// resolution); the propagated column is rescaled by `e^{+s gamma}` exactly.
const TILDE_SHIFT: f64 = 0.5;

/// Parameter slices `H_tau(s, ., w)` for every quadrature node, cached for
/// reuse across `t` and across evaluation points. Positive slices come from
/// the Schrodinger `Box`, negative ones via the reflection relation
/// `H_{-tau, p}(s, z, w) = conj(Htilde_{tau, p~}(s, -z, -w))`, also in the
/// Schrodinger form: the factored form carries checkerboard near-null
/// artifacts of the wide centered-difference product that decay too slowly
/// in `tau` for quadrature work.
pub struct TauSlices {
    pub grid: GridSpec,
    pub w_index: usize,
    pub s: f64,
    columns: BTreeMap<u64, Vec<C64>>,
}

impl TauSlices {
    pub fn build(
        p: &WeightPolynomial,
        grid: &GridSpec,
        s: f64,
        w_index: usize,
        taus: &[f64],
    ) -> Result<Self> {
        if s <= 0.0 {
            return Err(Error::Precondition(format!("slices need s > 0, got {s}")));
        }
        let reflected = p.reflect();
        let w_flip = grid.flip_index(w_index);
        let mut jobs: Vec<f64> = taus.to_vec();
        jobs.sort_by(f64::total_cmp);
        jobs.dedup();
        let columns: Result<Vec<(u64, Vec<C64>)>> = jobs
            .par_iter()
            .map(|&tau| -> Result<(u64, Vec<C64>)> {
                let col = if tau >= 0.0 {
                    let op = assemble_box(p, grid, tau, OperatorKind::Box, OperatorForm::Schrodinger)?;
                    let lan = LanczosDecomp::build(
                        &op.matrix,
                        &delta_field(grid, w_index),
                        s,
                        KRYLOV_TOL,
                        KRYLOV_MAX_DIM,
                    )?;
                    if !lan.converged {
                        return Err(Error::NoConvergence(format!("tau slice {tau}")));
                    }
                    lan.apply_exp(s)
                } else {
                    let op = assemble_box(
                        &reflected,
                        grid,
                        -tau,
                        OperatorKind::BoxTilde,
                        OperatorForm::Schrodinger,
                    )?;
                    let shift: Vec<(u32, u32, C64)> = (0..grid.len())
                        .map(|i| (i as u32, i as u32, C64::new(TILDE_SHIFT, 0.0)))
                        .collect();
                    let shifted = op
                        .matrix
                        .add(&crate::operator::CsrMatrix::from_triplets(grid.len(), shift));
                    let lan = LanczosDecomp::build(
                        &shifted,
                        &delta_field(grid, w_flip),
                        s,
                        KRYLOV_TOL,
                        KRYLOV_MAX_DIM,
                    )?;
                    if !lan.converged {
                        return Err(Error::NoConvergence(format!("tau slice {tau}")));
                    }
                    let rescale = (s * TILDE_SHIFT).exp();
                    let tilde = lan.apply_exp(s);
                    (0..grid.len())
                        .map(|i| (tilde[grid.flip_index(i)] * rescale).conj())
                        .collect()
                };
                Ok((tau.to_bits(), col))
            })
            .collect();
        Ok(Self {
            grid: *grid,
            w_index,
            s,
            columns: columns?.into_iter().collect(),
        })
    }

    pub fn value(&self, tau: f64, z_index: usize) -> C64 {
        self.columns[&tau.to_bits()][z_index]
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoxbValue {
    pub t: f64,
    pub re: f64,
    pub im: f64,
    pub tail_estimate: f64,
}

impl BoxbValue {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

/// `H(s, z, w, t)` for each requested `t`, by windowed quadrature of the
/// cached parameter slices. The truncation tail on each side is estimated
/// by extrapolating the local exponential decay rate fitted from the two
/// outermost nodes, floored at the `tau^{-2}` integrability heuristic
/// `|H(+-tau_max)| tau_max`; a tail above 1% of the value is an error.
pub fn boxb_kernel(
    slices: &TauSlices,
    quad: &TauQuadrature,
    z_index: usize,
    ts: &[f64],
) -> Result<Vec<BoxbValue>> {
    let nw = quad.nodes_weights();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let side_tail = |outer: (f64, f64), inner: (f64, f64)| -> f64 {
        let (tau_o, h_o) = outer;
        let (tau_i, h_i) = inner;
        let fallback = h_o * quad.tau_max;
        if h_o <= 0.0 {
            return 0.0;
        }
        if h_i <= h_o {
            return fallback;
        }
        let rate = (h_i / h_o).ln() / (tau_o - tau_i).abs();
        if rate <= 1.0 / quad.tau_max {
            fallback
        } else {
            h_o / rate
        }
    };
    let edge = {
        let lo = side_tail(
            (nw[0].0, slices.value(nw[0].0, z_index).norm()),
            (nw[1].0, slices.value(nw[1].0, z_index).norm()),
        );
        let hi = side_tail(
            (
                nw[nw.len() - 1].0,
                slices.value(nw[nw.len() - 1].0, z_index).norm(),
            ),
            (
                nw[nw.len() - 2].0,
                slices.value(nw[nw.len() - 2].0, z_index).norm(),
            ),
        );
        (lo + hi) * norm
    };
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        let terms: Vec<C64> = nw
            .iter()
            .map(|&(tau, w)| {
                let phase = C64::new(0.0, -t * tau).exp();
                slices.value(tau, z_index) * phase * (w * quad.window_at(tau) * norm)
            })
            .collect();
        let value = pairwise_sum(&terms);
        if edge > 0.01 * value.norm() {
            return Err(Error::QuadratureTail {
                tail: edge,
                value: value.norm(),
            });
        }
        out.push(BoxbValue {
            t,
            re: value.re,
            im: value.im,
            tail_estimate: edge,
        });
    }
    Ok(out)
}

/// Uniform node set over `[tau_lo, tau_hi]` together with the `+-dtau`
/// stencil companions every node needs for the twisted derivative.
pub fn ibp_node_set(tau_lo: f64, tau_hi: f64, nodes: usize, dtau: f64) -> Vec<f64> {
    let h = (tau_hi - tau_lo) / (nodes - 1) as f64;
    let base: Vec<f64> = (0..nodes).map(|i| tau_lo + i as f64 * h).collect();
    let mut all = base.clone();
    for &t in &base {
        all.push(t + dtau);
        all.push(t - dtau);
    }
    all
}

/// Quadrature invariance under one twisted integration by parts: with a
/// smooth window `win` supported in `0 < tau_lo < tau < tau_hi` (parts are
/// taken only away from `tau = 0`, where the slice family is smooth),
/// `int e^{-i t tau} M(win H) d tau = i (t - T(w,z)) int e^{-i t tau} win H`.
/// Returns `(direct, via_parts)`; the twisted derivative uses dedicated
/// `+-dtau` slice evaluations.
pub fn ibp_invariance(
    p: &WeightPolynomial,
    slices: &TauSlices,
    z_index: usize,
    t: f64,
    tau_lo: f64,
    tau_hi: f64,
    nodes: usize,
    dtau: f64,
) -> Result<(C64, C64)> {
    if !(0.0 < tau_lo && tau_lo < tau_hi) {
        return Err(Error::Precondition(
            "integration by parts runs over a window with tau away from zero".into(),
        ));
    }
    let z = slices.grid.point(z_index);
    let w = slices.grid.point(slices.w_index);
    let twist = twist_t(p, w, z);
    if (t - twist).abs() < 1e-8 {
        return Err(Error::Precondition(
            "t coincides with the twist; the parts factor degenerates".into(),
        ));
    }
    let h_tau = (tau_hi - tau_lo) / (nodes - 1) as f64;
    let win = |tau: f64| -> f64 {
        let x = (tau - tau_lo) / (tau_hi - tau_lo);
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            (std::f64::consts::PI * x).sin().powi(2)
        }
    };
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let g = |tau: f64| -> C64 { slices.value(tau, z_index) * win(tau) };
    let mut plain = Vec::new();
    let mut twisted = Vec::new();
    for i in 0..nodes {
        let tau = tau_lo + i as f64 * h_tau;
        let weight = h_tau * norm;
        let phase = C64::new(0.0, -t * tau).exp();
        plain.push(g(tau) * phase * weight);
        let up = g(tau + dtau) * C64::new(0.0, -dtau * twist).exp();
        let dn = g(tau - dtau) * C64::new(0.0, dtau * twist).exp();
        twisted.push((up - dn) / (2.0 * dtau) * phase * weight);
    }
    let direct = pairwise_sum(&plain);
    let via_parts = pairwise_sum(&twisted) / C64::new(0.0, t - twist);
    Ok((direct, via_parts))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ModelSample {
    pub s: f64,
    pub z: C64,
    pub w: C64,
    pub t: f64,
}

/// Decay fits `|H(s,z,w,t)| <= C e^{-c |z-w|^2/s} d_M^{-2}
/// Lambda(z, d_M)^{-1} s^N / mu(z, t_dual)^{2N}` for each requested `N`,
/// plus the rational (non-Gaussian) comparison form. Samples with
/// `|t_dual| < 1e-6` are excluded: the envelope degenerates there.
pub fn model_decay_check(
    p: &WeightPolynomial,
    slices_by_s: &BTreeMap<u64, TauSlices>,
    quad: &TauQuadrature,
    samples: &[ModelSample],
    n_exponents: &[u32],
) -> Result<Vec<BoundReport>> {
    struct Evaluated {
        sample: ModelSample,
        lhs: f64,
        t_dual: f64,
        d_m: f64,
    }
    let mut evaluated = Vec::new();
    for sample in samples {
        let slices = slices_by_s
            .get(&sample.s.to_bits())
            .ok_or_else(|| Error::Precondition(format!("no slices for s={}", sample.s)))?;
        let z_index = slices.grid.nearest_index(sample.z)?;
        let t_dual = sample.t + twist_t(p, sample.z, sample.w);
        if t_dual.abs() < 1e-6 {
            continue;
        }
        let value = boxb_kernel(slices, quad, z_index, &[sample.t])?[0].value();
        let d_m = (sample.z - sample.w).norm() + mu_or_zero(p, sample.z, t_dual);
        evaluated.push(Evaluated {
            sample: *sample,
            lhs: value.norm(),
            t_dual,
            d_m,
        });
    }
    let mut reports = Vec::new();
    for &n in n_exponents {
        let mut gaussian = Vec::new();
        let mut rational = Vec::new();
        for e in &evaluated {
            let mu_t = mu_or_zero(p, e.sample.z, e.t_dual);
            let lam = lambda_big(p, e.sample.z, e.d_m).max(1e-300);
            let base = -2.0 * e.d_m.ln() - lam.ln();
            let location = format!(
                "s={},z=({:.2},{:.2}),t={:.2}",
                e.sample.s, e.sample.z.re, e.sample.z.im, e.sample.t
            );
            gaussian.push(FitSample {
                log_lhs: e.lhs.max(0.0).ln(),
                env: EnvTerms {
                    log_prefactor: base + (n as f64) * (e.sample.s.ln() - 2.0 * mu_t.ln()),
                    gain: (e.sample.z - e.sample.w).norm_sqr() / e.sample.s,
                    max_pair: None,
                },
                location: location.clone(),
            });
            let sn = e.sample.s.powi(n as i32);
            rational.push(FitSample {
                log_lhs: e.lhs.max(0.0).ln(),
                env: EnvTerms {
                    log_prefactor: base + (sn / (sn + e.d_m.powi(2 * n as i32))).ln(),
                    gain: 0.0,
                    max_pair: None,
                },
                location,
            });
        }
        reports.push(fit_envelope(&format!("model_decay_N{n}"), gaussian)?);
        reports.push(fit_envelope(&format!("model_decay_rational_N{n}"), rational)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_nodes_are_symmetric() {
        for rule in [QuadRule::Trapezoid, QuadRule::GaussLegendre] {
            let q = TauQuadrature::new(5.0, 33, rule, TaperWindow::None).unwrap();
            let nw = q.nodes_weights();
            let sum_tau: f64 = nw.iter().map(|(t, _)| t).sum();
            assert!(sum_tau.abs() < 1e-12, "{rule:?}");
            let total: f64 = nw.iter().map(|(_, w)| w).sum();
            assert!((total - 10.0).abs() < 1e-10, "{rule:?}: weights sum to {total}");
        }
        assert!(TauQuadrature::new(5.0, 8, QuadRule::Trapezoid, TaperWindow::None).is_err());
        assert!(TauQuadrature::new(-1.0, 32, QuadRule::Trapezoid, TaperWindow::None).is_err());
    }

    #[test]
    fn quadrature_integrates_gaussian() {
        // int e^{-tau^2} e^{-i t tau} dtau = sqrt(pi) e^{-t^2/4}
        for (rule, nodes, tol) in [
            (QuadRule::GaussLegendre, 129, 1e-7),
            (QuadRule::Trapezoid, 129, 1e-10),
        ] {
            let q = TauQuadrature::new(8.0, nodes, rule, TaperWindow::None).unwrap();
            for t in [0.0, 0.7, 2.0] {
                let acc: C64 = q
                    .nodes_weights()
                    .iter()
                    .map(|&(tau, w)| C64::new(0.0, -t * tau).exp() * ((-tau * tau).exp() * w))
                    .sum();
                let expect = std::f64::consts::PI.sqrt() * (-t * t / 4.0).exp();
                assert!(
                    (acc - C64::new(expect, 0.0)).norm() < tol,
                    "{rule:?} at t={t}: {acc} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn taper_is_one_inside_and_zero_at_edge() {
        let q = TauQuadrature::new(4.0, 33, QuadRule::Trapezoid, TaperWindow::CosineTaper).unwrap();
        assert_eq!(q.window_at(0.0), 1.0);
        assert_eq!(q.window_at(2.9), 1.0);
        assert!(q.window_at(3.9) < 0.04);
        assert!(q.window_at(4.0) < 1e-15);
    }

    #[test]
    fn default_tau_max_matches_splitting_scale() {
        let p = WeightPolynomial::preset("abs2").unwrap();
        // Lambda(z, sqrt s) = s for |z|^2
        let got = default_tau_max(&p, C64::new(0.3, -0.8), 0.5);
        assert!((got - 16.0).abs() < 1e-12);
    }
}
