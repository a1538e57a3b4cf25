//! Heat semigroup evaluation `e^{-s Box}` and the derived objects: kernel
//! columns, the Szego projector, `Gtilde = e^{-s BoxTilde}(I - S)`, the
//! relative inverse of `Zbar`, and the Duhamel solver for the
//! nonhomogeneous problem.
//!
//! Three evaluation paths: a dense Hermitian eigendecomposition (the oracle
//! for small grids, cached per operator), restart-free Lanczos with full
//! reorthogonalization, and Crank-Nicolson stepping with step-doubling
//! control. All paths are contractions for positive semidefinite operators.

use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::operator::{CsrMatrix, DiscreteOperator};

pub type C64 = Complex64;

pub const MAX_DENSE_DIM: usize = 2600;

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HeatMethod {
    Krylov,
    CrankNicolson,
    Dense,
}

/// Cached dense Hermitian eigendecomposition.
pub struct DenseEig {
    pub eigenvalues: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl DenseEig {
    pub fn new(m: &CsrMatrix) -> Result<Self> {
        if m.n > MAX_DENSE_DIM {
            return Err(Error::MemoryGuard(format!(
                "dense eigendecomposition capped at dim {MAX_DENSE_DIM}, got {}",
                m.n
            )));
        }
        let mut dense = DMatrix::<C64>::zeros(m.n, m.n);
        for (r, c, v) in m.triplets() {
            dense[(r as usize, c as usize)] = v;
        }
        // enforce exact Hermitian symmetry before factorizing
        let herm = (dense.clone() + dense.adjoint()) * C64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let mut order: Vec<usize> = (0..m.n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::<C64>::zeros(m.n, m.n);
        for (new, &old) in order.iter().enumerate() {
            vectors.set_column(new, &eig.eigenvectors.column(old));
        }
        Ok(DenseEig {
            eigenvalues,
            vectors,
        })
    }

    /// Applies `phi(A) f` through the spectral decomposition.
    pub fn apply_function(&self, phi: impl Fn(f64) -> f64, f: &[C64]) -> Vec<C64> {
        let n = f.len();
        let fv = DVector::from_column_slice(f);
        let coeff = self.vectors.adjoint() * fv;
        let mut scaled = coeff;
        for i in 0..n {
            scaled[i] *= C64::new(phi(self.eigenvalues[i]), 0.0);
        }
        let out = &self.vectors * scaled;
        out.as_slice().to_vec()
    }

    pub fn apply_heat(&self, s: f64, f: &[C64]) -> Vec<C64> {
        self.apply_function(|lam| (-s * lam).exp(), f)
    }

    pub fn eigenvector(&self, i: usize) -> Vec<C64> {
        self.vectors.column(i).iter().copied().collect()
    }
}

/// Lanczos decomposition with full reorthogonalization, reusable across
/// evolution times.
pub struct LanczosDecomp {
    basis: Vec<Vec<C64>>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    v_norm: f64,
    pub converged: bool,
    pub steps: usize,
}

pub const KRYLOV_TOL: f64 = 1e-10;
pub const KRYLOV_MAX_DIM: usize = 400;

impl LanczosDecomp {
    /// Grows the subspace until `e^{-s A}v` is converged at `s_probe` (the
    /// largest time the decomposition will be used for, plus a small one to
    /// pin the high end of the spectrum).
    pub fn build(m: &CsrMatrix, v: &[C64], s_probe: f64, tol: f64, max_dim: usize) -> Result<Self> {
        let n = m.n;
        let v_norm = norm2(v);
        if v_norm == 0.0 {
            return Ok(LanczosDecomp {
                basis: vec![vec![C64::new(0.0, 0.0); n]],
                alphas: vec![0.0],
                betas: vec![],
                v_norm,
                converged: true,
                steps: 1,
            });
        }
        let mut basis: Vec<Vec<C64>> = Vec::new();
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let q0: Vec<C64> = v.iter().map(|x| x / v_norm).collect();
        basis.push(q0);
        let mut prev_probe: Option<Vec<C64>> = None;
        let mut probe_hits = 0usize;
        let mut converged = false;
        let cap = max_dim.min(n);
        // guard against convergence plateaus: interior near-degeneracies can
        // stall the probe while the bottom Ritz value is still wrong
        let min_steps = 96.min(cap);
        let mut w = vec![C64::new(0.0, 0.0); n];
        while basis.len() <= cap && !converged {
            let q = basis.last().unwrap();
            m.matvec(q, &mut w);
            let alpha = dot(q, &w).re;
            alphas.push(alpha);
            axpy(&mut w, C64::new(-alpha, 0.0), q);
            if basis.len() >= 2 {
                let beta_prev = betas[betas.len() - 1];
                axpy(
                    &mut w,
                    C64::new(-beta_prev, 0.0),
                    &basis[basis.len() - 2],
                );
            }
            // full reorthogonalization, two passes
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    axpy(&mut w, -c, q);
                }
            }
            let beta = norm2(&w);
            // convergence probe every few steps; accept after two
            // consecutive small differences past the minimum depth
            if basis.len() % 5 == 0 || beta <= 1e-14 * v_norm || basis.len() == cap {
                let probe = Self::tridiag_exp_apply(&basis, &alphas, &betas, v_norm, s_probe);
                if let Some(prev) = &prev_probe {
                    let diff = probe
                        .iter()
                        .zip(prev)
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    if diff <= tol * v_norm {
                        probe_hits += 1;
                        if probe_hits >= 2 && basis.len() >= min_steps {
                            converged = true;
                        }
                    } else {
                        probe_hits = 0;
                    }
                }
                prev_probe = Some(probe);
            }
            if beta <= 1e-14 * v_norm {
                converged = true;
                break;
            }
            if converged || basis.len() == cap {
                break;
            }
            betas.push(beta);
            basis.push(w.iter().map(|x| x / beta).collect());
        }
        let steps = alphas.len();
        Ok(LanczosDecomp {
            basis: basis.into_iter().take(steps).collect(),
            alphas,
            betas: betas.into_iter().take(steps.saturating_sub(1)).collect(),
            v_norm,
            converged,
            steps,
        })
    }

    fn tridiag_exp_apply(
        basis: &[Vec<C64>],
        alphas: &[f64],
        betas: &[f64],
        v_norm: f64,
        s: f64,
    ) -> Vec<C64> {
        let m = alphas.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = t.symmetric_eigen();
        // y = U exp(-s L) U^T (v_norm e1)
        let mut y = vec![0.0f64; m];
        for col in 0..m {
            let u0 = eig.eigenvectors[(0, col)];
            let scale = v_norm * u0 * (-s * eig.eigenvalues[col]).exp();
            for row in 0..m {
                y[row] += scale * eig.eigenvectors[(row, col)];
            }
        }
        let n = basis[0].len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (j, q) in basis.iter().enumerate().take(m) {
            axpy(&mut out, C64::new(y[j], 0.0), q);
        }
        out
    }

    pub fn apply_exp(&self, s: f64) -> Vec<C64> {
        Self::tridiag_exp_apply(&self.basis, &self.alphas, &self.betas, self.v_norm, s)
    }
}

/// Conjugate gradient for Hermitian positive definite systems, with an
/// optional orthonormal deflation basis spanning a near-null invariant
/// subspace that the solve skips.
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn cg_solve(
    m: &CsrMatrix,
    b: &[C64],
    tol: f64,
    max_iter: usize,
    deflation: Option<&[Vec<C64>]>,
) -> Result<(Vec<C64>, CgStats)> {
    let n = m.n;
    let project = |v: &mut Vec<C64>| {
        if let Some(basis) = deflation {
            for q in basis {
                let c = dot(q, v);
                axpy(v, -c, q);
            }
        }
    };
    let mut b_eff = b.to_vec();
    project(&mut b_eff);
    let b_norm = norm2(&b_eff);
    if b_norm == 0.0 {
        return Ok((
            vec![C64::new(0.0, 0.0); n],
            CgStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut r = b_eff.clone();
    let mut p = r.clone();
    let mut ap = vec![C64::new(0.0, 0.0); n];
    let mut rs_old = dot(&r, &r).re;
    for it in 0..max_iter {
        m.matvec(&p, &mut ap);
        if deflation.is_some() {
            project(&mut ap);
        }
        let alpha = rs_old / dot(&p, &ap).re;
        axpy(&mut x, C64::new(alpha, 0.0), &p);
        axpy(&mut r, C64::new(-alpha, 0.0), &ap);
        if deflation.is_some() && it % 16 == 15 {
            project(&mut r);
        }
        let rs_new = dot(&r, &r).re;
        if rs_new.sqrt() <= tol * b_norm {
            return Ok((
                x,
                CgStats {
                    iterations: it + 1,
                    relative_residual: rs_new.sqrt() / b_norm,
                },
            ));
        }
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + C64::new(beta, 0.0) * p[i];
        }
        rs_old = rs_new;
    }
    Err(Error::NoConvergence(format!(
        "CG reached {max_iter} iterations with relative residual {:.3e}",
        rs_old.sqrt() / b_norm
    )))
}

/// A discrete operator together with its cached dense decomposition.
pub struct Propagator {
    pub op: DiscreteOperator,
    dense: OnceLock<DenseEig>,
}

impl Propagator {
    pub fn new(op: DiscreteOperator) -> Self {
        Propagator {
            op,
            dense: OnceLock::new(),
        }
    }

    pub fn dense_eig(&self) -> Result<&DenseEig> {
        if self.dense.get().is_none() {
            let eig = DenseEig::new(&self.op.matrix)?;
            let _ = self.dense.set(eig);
        }
        Ok(self.dense.get().expect("just set"))
    }

    /// `e^{-s A} f`. The result of every method is checked against the
    /// contraction bound `|result| <= |f| (1 + tol)` that holds for
    /// positive semidefinite operators.
    pub fn heat_apply(&self, f: &[C64], s: f64, method: HeatMethod) -> Result<Vec<C64>> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::Precondition(format!("heat_apply needs s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(f.to_vec());
        }
        let out = match method {
            HeatMethod::Dense => self.dense_eig()?.apply_heat(s, f),
            HeatMethod::Krylov => {
                let d = LanczosDecomp::build(&self.op.matrix, f, s, KRYLOV_TOL, KRYLOV_MAX_DIM)?;
                if !d.converged {
                    return Err(Error::NoConvergence(format!(
                        "Krylov did not converge within {} steps at s={s}",
                        d.steps
                    )));
                }
                d.apply_exp(s)
            }
            HeatMethod::CrankNicolson => self.crank_nicolson(f, s)?,
        };
        let nf = norm2(f);
        if norm2(&out) > nf * (1.0 + 1e-6) + 1e-300 {
            return Err(Error::NoConvergence(
                "semigroup expanded the norm; operator not positive semidefinite?".into(),
            ));
        }
        Ok(out)
    }

    fn crank_nicolson(&self, f: &[C64], s: f64) -> Result<Vec<C64>> {
        let m = &self.op.matrix;
        let n = m.n;
        let run = |steps: usize| -> Result<Vec<C64>> {
            let dt = s / steps as f64;
            let ident: Vec<(u32, u32, C64)> = (0..n)
                .map(|i| (i as u32, i as u32, C64::new(1.0, 0.0)))
                .collect();
            let ident = CsrMatrix::from_triplets(n, ident);
            let plus = ident.add(&m.scale(C64::new(0.5 * dt, 0.0)));
            let minus = ident.add(&m.scale(C64::new(-0.5 * dt, 0.0)));
            let mut u = f.to_vec();
            for _ in 0..steps {
                let rhs = minus.apply(&u);
                let (next, _) = cg_solve(&plus, &rhs, 1e-12, 10 * n, None)?;
                u = next;
            }
            Ok(u)
        };
        let mut steps = 16usize;
        let mut u = run(steps)?;
        loop {
            steps *= 2;
            if steps > 4096 {
                return Err(Error::NoConvergence(
                    "Crank-Nicolson step control exceeded 4096 steps".into(),
                ));
            }
            let u2 = run(steps)?;
            let diff = u
                .iter()
                .zip(&u2)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if diff <= 1e-6 * norm2(&u2).max(1e-30) {
                return Ok(u2);
            }
            u = u2;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KernelKind {
    H,
    Htilde,
    Gtilde,
    Szego,
    R,
}

impl KernelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            KernelKind::H => "h",
            KernelKind::Htilde => "htilde",
            KernelKind::Gtilde => "gtilde",
            KernelKind::Szego => "szego",
            KernelKind::R => "r",
        }
    }
}

/// Sampled kernel values `K(s, z_i, w)` for a fixed source `w`.
#[derive(Clone, Debug)]
pub struct KernelSlice {
    pub kernel_kind: KernelKind,
    pub s: Option<f64>,
    pub tau: f64,
    pub w_index: usize,
    pub values: Vec<C64>,
    pub grid: GridSpec,
}

impl KernelSlice {
    pub fn file_name(&self) -> String {
        match self.s {
            Some(s) => format!("{}_tau{}_s{}.csv", self.kernel_kind.tag(), self.tau, s),
            None => format!("{}_tau{}.csv", self.kernel_kind.tag(), self.tau),
        }
    }

    /// CSV schema: `x1, x2, re, im, s, tau, kind`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x1,x2,re,im,s,tau,kind")?;
        for (i, v) in self.values.iter().enumerate() {
            let z = self.grid.point(i);
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{},{},{}",
                z.re,
                z.im,
                v.re,
                v.im,
                self.s.map(|s| s.to_string()).unwrap_or_default(),
                self.tau,
                self.kernel_kind.tag()
            )?;
        }
        Ok(())
    }
}

/// Discrete delta at `w`, amplitude `1/h^2`, so kernel columns approximate
/// the continuum kernel density.
pub fn delta_field(grid: &GridSpec, w_index: usize) -> Vec<C64> {
    let mut f = vec![C64::new(0.0, 0.0); grid.len()];
    f[w_index] = C64::new(1.0 / grid.cell_area(), 0.0);
    f
}

/// Kernel column `K(s, ., w)`: the semigroup applied to the discrete delta.
/// At `s = 0` this is the delta itself.
pub fn kernel_column(
    prop: &Propagator,
    w_index: usize,
    s: f64,
    method: HeatMethod,
) -> Result<KernelSlice> {
    if prop.op.grid.is_boundary(w_index) {
        return Err(Error::Precondition("kernel source on the Dirichlet boundary".into()));
    }
    let delta = delta_field(&prop.op.grid, w_index);
    let values = prop.heat_apply(&delta, s, method)?;
    let kind = match prop.op.kind {
        crate::operator::OperatorKind::BoxTilde => KernelKind::Htilde,
        _ => KernelKind::H,
    };
    Ok(KernelSlice {
        kernel_kind: kind,
        s: Some(s),
        tau: prop.op.tau,
        w_index,
        values,
        grid: prop.op.grid,
    })
}

/// Orthogonal projector onto the low eigenvalue cluster of `BoxTilde`.
pub struct SzegoProjector {
    basis: Vec<Vec<C64>>,
    pub cluster_eigenvalues: Vec<f64>,
    pub lambda_cut: f64,
    pub lambda_ref: f64,
    pub gap_ratio: f64,
}

impl SzegoProjector {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<C64>] {
        &self.basis
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        for q in &self.basis {
            let c = dot(q, f);
            axpy(&mut out, c, q);
        }
        out
    }

    pub fn complement(&self, f: &[C64]) -> Vec<C64> {
        let mut out = f.to_vec();
        for q in &self.basis {
            let c = dot(q, &out);
            axpy(&mut out, -c, q);
        }
        out
    }
}

/// Builds the projector by spectral gap detection: scan the sorted spectrum
/// below `lambda_max / 4` for the largest ratio jump; a jump of at least 10
/// separates the null cluster from the rest, and the basis collects
/// eigenvectors below `eig_tol * lambda_ref` where `lambda_ref` is the first
/// eigenvalue above the gap.
pub fn szego_projector(prop_tilde: &Propagator, eig_tol: f64) -> Result<SzegoProjector> {
    if eig_tol <= 0.0 {
        return Err(Error::Precondition("eig_tol must be positive".into()));
    }
    let eig = prop_tilde.dense_eig()?;
    let lam = &eig.eigenvalues;
    let lam_max = *lam.last().expect("nonempty spectrum");
    let floor = 1e-14 * lam_max.abs().max(1.0);
    let mut best: Option<(usize, f64)> = None;
    for i in 0..lam.len() - 1 {
        if lam[i + 1] > lam_max / 4.0 {
            break;
        }
        let ratio = lam[i + 1].max(floor) / lam[i].max(floor);
        if best.map(|(_, r)| ratio > r).unwrap_or(true) {
            best = Some((i, ratio));
        }
    }
    let (gap_at, gap_ratio) = best.ok_or_else(|| {
        Error::NoSpectralGap("spectrum has no candidate region below lambda_max/4".into())
    })?;
    if gap_ratio < 10.0 {
        return Err(Error::NoSpectralGap(format!(
            "largest low-spectrum ratio jump is {gap_ratio:.2}, need >= 10"
        )));
    }
    let lambda_ref = lam[gap_at + 1];
    szego_projector_with_cut_impl(eig, eig_tol * lambda_ref, lambda_ref, gap_ratio)
}

/// Builds the projector with an explicit absolute eigenvalue cut. At finite
/// radius the discrete spectrum carries an edge-state tail between the null
/// cluster and the first Landau level, so the meaning of "the" projector
/// depends on the cut; callers state it.
pub fn szego_projector_with_cut(prop_tilde: &Propagator, lambda_cut: f64) -> Result<SzegoProjector> {
    let eig = prop_tilde.dense_eig()?;
    let lambda_ref = eig
        .eigenvalues
        .iter()
        .copied()
        .find(|&l| l >= lambda_cut)
        .unwrap_or(lambda_cut);
    szego_projector_with_cut_impl(eig, lambda_cut, lambda_ref, f64::NAN)
}

fn szego_projector_with_cut_impl(
    eig: &DenseEig,
    lambda_cut: f64,
    lambda_ref: f64,
    gap_ratio: f64,
) -> Result<SzegoProjector> {
    let mut basis = Vec::new();
    let mut cluster = Vec::new();
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < lambda_cut {
            basis.push(eig.eigenvector(i));
            cluster.push(l);
        }
    }
    Ok(SzegoProjector {
        basis,
        cluster_eigenvalues: cluster,
        lambda_cut,
        lambda_ref,
        gap_ratio,
    })
}

/// Column of `Gtilde(s, ., w) = e^{-s BoxTilde}(I - S) delta_w / h^2`.
pub fn g_kernel_column(
    prop_tilde: &Propagator,
    szego: &SzegoProjector,
    w_index: usize,
    s: f64,
    method: HeatMethod,
) -> Result<KernelSlice> {
    let grid = prop_tilde.op.grid;
    if grid.is_boundary(w_index) {
        return Err(Error::Precondition("kernel source on the Dirichlet boundary".into()));
    }
    let v = szego.complement(&delta_field(&grid, w_index));
    let values = if s == 0.0 {
        v
    } else {
        prop_tilde.heat_apply(&v, s, method)?
    };
    Ok(KernelSlice {
        kernel_kind: KernelKind::Gtilde,
        s: Some(s),
        tau: prop_tilde.op.tau,
        w_index,
        values,
        grid,
    })
}

pub const CG_TOL: f64 = 1e-10;

/// Solves `Box u = f` by conjugate gradient to relative residual 1e-10.
pub fn box_solve(box_op: &DiscreteOperator, f: &[C64]) -> Result<(Vec<C64>, CgStats)> {
    cg_solve(&box_op.matrix, f, CG_TOL, 200_000, None)
}

/// The relative inverse of `Zbar`: `R = -Z Box^{-1}`, so that
/// `R Zbar = I - S`.
pub fn rtp_apply(
    box_op: &DiscreteOperator,
    z_op: &DiscreteOperator,
    f: &[C64],
) -> Result<Vec<C64>> {
    let (u, _) = box_solve(box_op, f)?;
    Ok(z_op.matrix.apply(&u).iter().map(|v| -v).collect())
}

/// `R` with the near-null cluster of `Box` deflated, matched to a Szego
/// projector of `BoxTilde`: the deflation basis is the image under `Zbar`
/// of the projector's basis (exactly the paired invariant subspace of the
/// factored product). With this pairing `R Zbar = I - S` holds to solver
/// tolerance.
pub fn relative_inverse_apply(
    box_op: &DiscreteOperator,
    zbar_op: &DiscreteOperator,
    z_op: &DiscreteOperator,
    szego: &SzegoProjector,
    f: &[C64],
) -> Result<Vec<C64>> {
    let mut deflation: Vec<Vec<C64>> = Vec::new();
    for psi in szego.basis() {
        let mut phi = zbar_op.matrix.apply(psi);
        // orthonormalize against what we already have
        for _ in 0..2 {
            let existing = deflation.clone();
            for q in &existing {
                let c = dot(q, &phi);
                axpy(&mut phi, -c, q);
            }
        }
        let n = norm2(&phi);
        if n > 1e-13 {
            deflation.push(phi.iter().map(|v| v / n).collect());
        }
    }
    let (u, _) = cg_solve(&box_op.matrix, f, CG_TOL, 200_000, Some(&deflation))?;
    Ok(z_op.matrix.apply(&u).iter().map(|v| -v).collect())
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

/// Duhamel solution of the nonhomogeneous problem
/// `du/ds + Box u = g, u(0) = f0`:
/// `u(s) = e^{-s Box} f0 + int_0^s e^{-(s-r) Box} g(r) dr`,
/// the time integral by composite 4-point Gauss-Legendre over `panels`
/// panels.
pub fn duhamel_solve(
    prop: &Propagator,
    f0: &[C64],
    g: &dyn Fn(f64) -> Vec<C64>,
    s: f64,
    panels: usize,
    method: HeatMethod,
) -> Result<Vec<C64>> {
    if panels < 4 {
        return Err(Error::Precondition(format!("need at least 4 panels, got {panels}")));
    }
    let mut u = prop.heat_apply(f0, s, method)?;
    let width = s / panels as f64;
    for panel in 0..panels {
        let left = panel as f64 * width;
        for (node, weight) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
            let r = left + 0.5 * width * (node + 1.0);
            let gr = g(r);
            let term = prop.heat_apply(&gr, s - r, method)?;
            axpy(&mut u, C64::new(0.5 * width * weight, 0.0), &term);
        }
    }
    Ok(u)
}
