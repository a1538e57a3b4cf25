//! Reduction of the n-dimensional decoupled problem to one-dimensional heat
//! kernels: the `Box_J` component bookkeeping, the product formula for the
//! kernel, and the diagonal action on form coefficients.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::operator::{assemble_box, CsrMatrix, OperatorForm, OperatorKind};
use crate::semigroup::{DenseEig, HeatMethod, Propagator};
use crate::weights::WeightPolynomial;

pub type C64 = Complex64;

pub const MAX_DECOUPLED_FACTORS: usize = 3;
pub const DEFAULT_TENSOR_CAP: usize = 1 << 20;

/// An ordered list of one-variable weights `p_1 .. p_n` with a shared
/// parameter, representing `P(z_1..z_n) = sum p_k(z_k)`.
#[derive(Clone, Debug)]
pub struct DecoupledWeight {
    pub parts: Vec<WeightPolynomial>,
    pub tau: f64,
}

impl DecoupledWeight {
    pub fn new(parts: Vec<WeightPolynomial>, tau: f64) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Precondition("need at least one factor".into()));
        }
        if parts.len() > MAX_DECOUPLED_FACTORS {
            return Err(Error::MemoryGuard(format!(
                "decoupled weights capped at {MAX_DECOUPLED_FACTORS} factors, got {}",
                parts.len()
            )));
        }
        for p in &parts {
            if !p.is_nonharmonic() {
                return Err(Error::InvalidWeight("every factor must be nonharmonic".into()));
            }
        }
        Ok(Self { parts, tau })
    }

    pub fn n(&self) -> usize {
        self.parts.len()
    }
}

/// A strictly increasing q-tuple `J` of axes in `1..=n` (1-based, matching
/// the increasing-multiindex convention for form components).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormIndex {
    pub n: usize,
    tuple: Vec<usize>,
}

impl FormIndex {
    pub fn new(n: usize, tuple: Vec<usize>) -> Result<Self> {
        for pair in tuple.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Precondition(format!(
                    "form index must be strictly increasing, got {tuple:?}"
                )));
            }
        }
        if tuple.iter().any(|&k| k < 1 || k > n) {
            return Err(Error::IndexRange(format!("form index entries must lie in 1..={n}")));
        }
        Ok(Self { n, tuple })
    }

    pub fn rank(&self) -> usize {
        self.tuple.len()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.tuple.contains(&k)
    }

    pub fn entries(&self) -> &[usize] {
        &self.tuple
    }

    /// All increasing q-tuples in `1..=n`.
    pub fn all_of_rank(n: usize, q: usize) -> Vec<FormIndex> {
        let mut out = Vec::new();
        let mut current = Vec::new();
        fn rec(start: usize, n: usize, q: usize, current: &mut Vec<usize>, out: &mut Vec<FormIndex>) {
            if current.len() == q {
                out.push(FormIndex {
                    n,
                    tuple: current.clone(),
                });
                return;
            }
            for k in start..=n {
                current.push(k);
                rec(k + 1, n, q, current, out);
                current.pop();
            }
        }
        rec(1, n, q, &mut current, &mut out);
        out
    }
}

/// `Box` on the axes listed in `J`, `BoxTilde` on the others.
pub fn component_kind(j: &FormIndex, k: usize) -> Result<OperatorKind> {
    if k < 1 || k > j.n {
        return Err(Error::IndexRange(format!("axis {k} out of 1..={}", j.n)));
    }
    Ok(if j.contains(k) {
        OperatorKind::Box
    } else {
        OperatorKind::BoxTilde
    })
}

/// Per-axis semigroups for one decoupled weight on a shared per-axis grid.
/// `Box` components use the Schrodinger form (clean bottom spectrum),
/// `BoxTilde` components the factored form (exact positive semidefiniteness
/// with the physical near-null cluster).
pub struct AxisSemigroups {
    pub grid: GridSpec,
    pub boxes: Vec<Propagator>,
    pub tildes: Vec<Propagator>,
}

impl AxisSemigroups {
    pub fn build(w: &DecoupledWeight, grid: &GridSpec) -> Result<Self> {
        let mut boxes = Vec::new();
        let mut tildes = Vec::new();
        for p in &w.parts {
            boxes.push(Propagator::new(assemble_box(
                p,
                grid,
                w.tau,
                OperatorKind::Box,
                OperatorForm::Schrodinger,
            )?));
            tildes.push(Propagator::new(assemble_box(
                p,
                grid,
                w.tau,
                OperatorKind::BoxTilde,
                OperatorForm::Factored,
            )?));
        }
        Ok(Self {
            grid: *grid,
            boxes,
            tildes,
        })
    }

    fn axis_prop(&self, j: &FormIndex, k: usize) -> Result<&Propagator> {
        Ok(match component_kind(j, k)? {
            OperatorKind::Box => &self.boxes[k - 1],
            _ => &self.tildes[k - 1],
        })
    }
}

/// `H_J(s, z, w) = prod_k H_k^{J(k)}(s, z_k, w_k)`: sources snap to the
/// nearest grid node, evaluation points are bilinearly interpolated inside
/// the `0.8 R` trust region.
pub fn product_kernel(
    axes: &AxisSemigroups,
    j: &FormIndex,
    s: f64,
    z: &[C64],
    w: &[C64],
    method: HeatMethod,
) -> Result<C64> {
    if z.len() != j.n || w.len() != j.n {
        return Err(Error::Precondition(format!(
            "expected {} components for z and w",
            j.n
        )));
    }
    if s <= 0.0 {
        return Err(Error::Precondition(format!("product kernel needs s > 0, got {s}")));
    }
    let trust = 0.8 * axes.grid.radius;
    let mut acc = C64::new(1.0, 0.0);
    for k in 1..=j.n {
        let zk = z[k - 1];
        let wk = w[k - 1];
        for pt in [zk, wk] {
            if pt.re.abs() > trust || pt.im.abs() > trust {
                return Err(Error::Precondition(format!(
                    "point {pt} outside interpolation trust region 0.8R"
                )));
            }
        }
        let prop = axes.axis_prop(j, k)?;
        let w_index = axes.grid.nearest_index(wk)?;
        let column = crate::semigroup::kernel_column(prop, w_index, s, method)?;
        acc *= axes.grid.interpolate(&column.values, zk)?;
    }
    Ok(acc)
}

/// Kronecker product of sparse matrices (index of `a` is the slow one).
pub fn kron(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let n = a.n * b.n;
    let mut t = Vec::with_capacity(a.nnz() * b.nnz());
    for (ra, ca, va) in a.triplets() {
        for (rb, cb, vb) in b.triplets() {
            t.push((
                ra * b.n as u32 + rb,
                ca * b.n as u32 + cb,
                va * vb,
            ));
        }
    }
    CsrMatrix::from_triplets(n, t)
}

pub fn identity_matrix(n: usize) -> CsrMatrix {
    CsrMatrix::from_triplets(
        n,
        (0..n).map(|i| (i as u32, i as u32, C64::new(1.0, 0.0))).collect(),
    )
}

/// Kronecker sum `sum_k I x .. x A_k x .. x I` with a size guard.
pub fn kron_sum(ops: &[&CsrMatrix], cap: usize) -> Result<CsrMatrix> {
    let total: usize = ops.iter().map(|m| m.n).product();
    if total > cap {
        return Err(Error::MemoryGuard(format!(
            "tensor state size {total} exceeds cap {cap}"
        )));
    }
    let mut acc: Option<CsrMatrix> = None;
    for (k, op) in ops.iter().enumerate() {
        let mut factor: Option<CsrMatrix> = None;
        for (i, other) in ops.iter().enumerate() {
            let piece = if i == k {
                (*op).clone()
            } else {
                identity_matrix(other.n)
            };
            factor = Some(match factor {
                None => piece,
                Some(f) => kron(&f, &piece),
            });
        }
        let factor = factor.expect("nonempty");
        acc = Some(match acc {
            None => factor,
            Some(a) => a.add(&factor),
        });
    }
    Ok(acc.expect("nonempty"))
}

/// Form coefficients on the tensor grid, keyed by their increasing tuple.
pub type FormCoefficients = BTreeMap<Vec<usize>, Vec<C64>>;

/// Applies `e^{-s Box_J}` to each coefficient independently (the operator
/// acts diagonally on form components). Per-axis dense semigroups are
/// applied along each tensor index in turn.
pub fn box_d_apply(
    axes: &AxisSemigroups,
    q: usize,
    coeffs: &FormCoefficients,
    s: f64,
    cap: usize,
) -> Result<FormCoefficients> {
    let n = axes.boxes.len();
    let m = axes.grid.len();
    let state: usize = m.checked_pow(n as u32).ok_or_else(|| {
        Error::MemoryGuard("tensor state size overflows".into())
    })?;
    if state > cap {
        return Err(Error::MemoryGuard(format!(
            "tensor state size {state} exceeds cap {cap}"
        )));
    }
    let mut out = FormCoefficients::new();
    for (tuple, field) in coeffs {
        let j = FormIndex::new(n, tuple.clone())?;
        if j.rank() != q {
            return Err(Error::Precondition(format!(
                "coefficient {tuple:?} has rank {} but q = {q}",
                j.rank()
            )));
        }
        if field.len() != state {
            return Err(Error::Precondition(format!(
                "coefficient {tuple:?} has wrong tensor length"
            )));
        }
        let mut current = field.clone();
        for k in 1..=n {
            let prop = axes.axis_prop(&j, k)?;
            let eig = prop.dense_eig()?;
            current = apply_along_axis(&current, m, n, k - 1, |v| eig.apply_heat(s, v));
        }
        out.insert(tuple.clone(), current);
    }
    Ok(out)
}

/// Applies a per-axis linear map along tensor axis `axis` (axis 0 is the
/// slowest index).
fn apply_along_axis(
    field: &[C64],
    m: usize,
    n_axes: usize,
    axis: usize,
    f: impl Fn(&[C64]) -> Vec<C64>,
) -> Vec<C64> {
    let stride: usize = m.pow((n_axes - 1 - axis) as u32);
    let block = stride * m;
    let mut out = vec![C64::new(0.0, 0.0); field.len()];
    let mut line = vec![C64::new(0.0, 0.0); m];
    for base in (0..field.len()).step_by(block) {
        for off in 0..stride {
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = field[base + off + i * stride];
            }
            let mapped = f(&line);
            for (i, v) in mapped.into_iter().enumerate() {
                out[base + off + i * stride] = v;
            }
        }
    }
    out
}

/// Dense matrix exponential of a Kronecker sum applied to a vector, for the
/// tensor oracle route: `e^{-s A} v` through the eigendecomposition of the
/// assembled sum.
pub fn tensor_heat_apply_dense(sum: &CsrMatrix, s: f64, v: &[C64]) -> Result<Vec<C64>> {
    let eig = DenseEig::new(sum)?;
    Ok(eig.apply_heat(s, v))
}
