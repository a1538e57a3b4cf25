//! Polynomial weight algebra: Taylor coefficients `A_jk`, the size function
//! `Lambda`, the pseudo-distance `mu`, the twist `T`, and the derived
//! quantities `e`, `r`, `Delta` and the model metric `d_M`.
//!
//! A weight is a real-valued polynomial `p(z) = sum a_jk z^j zbar^k` on the
//! complex plane, subharmonic and nonharmonic. All quantities here are exact
//! finite sums over the coefficient table; there is no truncation error.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A point of the model `M_p \cong C x R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelPoint {
    pub z: C64,
    pub t: f64,
}

impl ModelPoint {
    pub fn new(z: C64, t: f64) -> Result<Self> {
        if !z.re.is_finite() || !z.im.is_finite() || !t.is_finite() {
            return Err(Error::Precondition("model point must be finite".into()));
        }
        Ok(Self { z, t })
    }
}

/// Exact binomial coefficient as f64 (indices stay small here).
pub fn binom(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..k as u128 {
        num *= n as u128 - i;
        den *= i + 1;
    }
    (num / den) as f64
}

/// Real polynomial `p(z,zbar)` with complex Taylor coefficients `a_jk`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPolynomial {
    coeffs: BTreeMap<(u32, u32), C64>,
    degree: u32,
}

const SUBHARMONICITY_GRID: usize = 64;
pub const DEFAULT_CHECK_RADIUS: f64 = 8.0;

impl WeightPolynomial {
    /// Full construction: reality, nonharmonicity, and sampled subharmonicity.
    pub fn new(coeffs: BTreeMap<(u32, u32), C64>) -> Result<Self> {
        Self::with_check_radius(coeffs, DEFAULT_CHECK_RADIUS)
    }

    pub fn with_check_radius(coeffs: BTreeMap<(u32, u32), C64>, r_check: f64) -> Result<Self> {
        let p = Self::real_polynomial(coeffs)?;
        if !p.is_nonharmonic() {
            return Err(Error::InvalidWeight(
                "harmonic weight: no nonzero a_jk with j,k >= 1".into(),
            ));
        }
        p.check_subharmonic(r_check)?;
        Ok(p)
    }

    /// Construction checking only the reality symmetry `a_kj = conj(a_jk)`.
    /// The algebraic identities of this module hold for any real polynomial,
    /// so identity sweeps use this entry point directly.
    pub fn real_polynomial(coeffs: BTreeMap<(u32, u32), C64>) -> Result<Self> {
        let mut scale: f64 = 0.0;
        for v in coeffs.values() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::InvalidWeight("non-finite coefficient".into()));
            }
            scale = scale.max(v.norm());
        }
        for (&(j, k), &v) in &coeffs {
            let mirror = coeffs.get(&(k, j)).copied().unwrap_or(C64::new(0.0, 0.0));
            if (mirror - v.conj()).norm() > 1e-12 * (1.0 + scale) {
                return Err(Error::InvalidWeight(format!(
                    "reality violated at (j,k)=({j},{k}): a_kj != conj(a_jk)"
                )));
            }
        }
        let mut map = BTreeMap::new();
        let mut degree = 0;
        for ((j, k), v) in coeffs {
            if v.norm() > 0.0 {
                degree = degree.max(j + k);
                map.insert((j, k), v);
            }
        }
        Ok(Self {
            coeffs: map,
            degree,
        })
    }

    /// Builds from `[j, k, re, im]` rows, enforcing reality by symmetrizing:
    /// the stored table is `(a + conj(a^T))/2`.
    pub fn from_terms(terms: &[(u32, u32, f64, f64)]) -> Result<Self> {
        let mut raw: BTreeMap<(u32, u32), C64> = BTreeMap::new();
        for &(j, k, re, im) in terms {
            *raw.entry((j, k)).or_insert(C64::new(0.0, 0.0)) += C64::new(re, im);
        }
        let mut sym: BTreeMap<(u32, u32), C64> = BTreeMap::new();
        for (&(j, k), &v) in &raw {
            let mirror = raw.get(&(k, j)).copied().unwrap_or(C64::new(0.0, 0.0));
            sym.insert((j, k), 0.5 * (v + mirror.conj()));
        }
        Self::new(sym)
    }

    /// Shipped presets: `abs2` = |z|^2, `abs4` = |z|^4, and `nonradial` =
    /// |z|^2 + x1^2 x2^2.
    pub fn preset(name: &str) -> Result<Self> {
        let terms: &[(u32, u32, f64, f64)] = match name {
            "abs2" => &[(1, 1, 1.0, 0.0)],
            "abs4" => &[(2, 2, 1.0, 0.0)],
            "nonradial" => &[
                (1, 1, 1.0, 0.0),
                (2, 2, 0.125, 0.0),
                (4, 0, -0.0625, 0.0),
                (0, 4, -0.0625, 0.0),
            ],
            other => {
                return Err(Error::InvalidWeight(format!("unknown preset `{other}`")));
            }
        };
        Self::from_terms(terms)
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn coefficients(&self) -> &BTreeMap<(u32, u32), C64> {
        &self.coeffs
    }

    pub fn is_nonharmonic(&self) -> bool {
        self.coeffs
            .iter()
            .any(|(&(j, k), v)| j >= 1 && k >= 1 && v.norm() > 0.0)
    }

    fn check_subharmonic(&self, r_check: f64) -> Result<()> {
        let n = SUBHARMONICITY_GRID;
        let mut min_lap = f64::INFINITY;
        let mut scale: f64 = 1.0;
        for iy in 0..n {
            for ix in 0..n {
                let x = -r_check + 2.0 * r_check * ix as f64 / (n - 1) as f64;
                let y = -r_check + 2.0 * r_check * iy as f64 / (n - 1) as f64;
                let lap = self.laplacian(C64::new(x, y));
                min_lap = min_lap.min(lap);
                scale = scale.max(lap.abs());
            }
        }
        if min_lap < -1e-12 * scale {
            return Err(Error::InvalidWeight(format!(
                "subharmonicity violated: min sampled laplacian {min_lap:.3e} on |z| <= {r_check}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, z: C64) -> f64 {
        let zb = z.conj();
        let mut acc = C64::new(0.0, 0.0);
        for (&(j, k), &a) in &self.coeffs {
            acc += a * z.powu(j) * zb.powu(k);
        }
        acc.re
    }

    /// `dp/dz` at `z` (exact).
    pub fn dz(&self, z: C64) -> C64 {
        self.ajk(z, 1, 0)
    }

    /// `dp/dzbar` at `z` (exact).
    pub fn dzbar(&self, z: C64) -> C64 {
        self.ajk(z, 0, 1)
    }

    /// `Laplacian p = 4 d^2 p / dz dzbar` at `z`; real for real weights.
    pub fn laplacian(&self, z: C64) -> f64 {
        4.0 * self.ajk(z, 1, 1).re
    }

    /// `A_jk(z) = (1/(j!k!)) d^{j+k} p / dz^j dzbar^k (z)` through the
    /// recentering sum over the coefficient table. Zero once `j+k` exceeds
    /// the degree.
    pub fn ajk(&self, z: C64, j: u32, k: u32) -> C64 {
        if j + k > self.degree {
            return C64::new(0.0, 0.0);
        }
        let zb = z.conj();
        let mut acc = C64::new(0.0, 0.0);
        for (&(m, n), &a) in &self.coeffs {
            if m >= j && n >= k {
                acc += binom(m, j) * binom(n, k) * a * z.powu(m - j) * zb.powu(n - k);
            }
        }
        acc
    }

    /// The reflected weight `p~(x) = p(-x)`.
    pub fn reflect(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(&(j, k), &a)| ((j, k), if (j + k) % 2 == 0 { a } else { -a }))
            .collect();
        Self {
            coeffs,
            degree: self.degree,
        }
    }
}

/// `Lambda(z, delta) = sum_{j,k>=1} |A_jk(z)| delta^{j+k}`.
pub fn lambda_big(p: &WeightPolynomial, z: C64, delta: f64) -> f64 {
    let mut acc = 0.0;
    for j in 1..=p.degree {
        for k in 1..=p.degree.saturating_sub(j) {
            let a = p.ajk(z, j, k).norm();
            if a > 0.0 {
                acc += a * delta.abs().powi((j + k) as i32);
            }
        }
    }
    acc
}

/// `mu_p(z, delta) = inf over j,k>=1 with A_jk(z) != 0 of
/// |delta / A_jk(z)|^{1/(j+k)}`. Requires `delta > 0`.
pub fn mu(p: &WeightPolynomial, z: C64, delta: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::Precondition(format!("mu requires delta > 0, got {delta}")));
    }
    let mut best = f64::INFINITY;
    for j in 1..=p.degree {
        for k in 1..=p.degree.saturating_sub(j) {
            let a = p.ajk(z, j, k).norm();
            if a > 0.0 {
                best = best.min((delta / a).powf(1.0 / (j + k) as f64));
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::InvalidWeight(
            "all mixed A_jk vanish: harmonic weight".into(),
        ))
    }
}

/// `mu` extended by continuity with `mu_p(z, 0) = 0`.
pub fn mu_or_zero(p: &WeightPolynomial, z: C64, delta: f64) -> f64 {
    if delta == 0.0 {
        0.0
    } else {
        mu(p, z, delta.abs()).unwrap_or(0.0)
    }
}

/// Twist term `T(w,z) = -2 Im( sum_{j>=1} A_j0(z) (w-z)^j )`.
pub fn twist_t(p: &WeightPolynomial, w: C64, z: C64) -> f64 {
    let d = w - z;
    let mut acc = C64::new(0.0, 0.0);
    for j in 1..=p.degree {
        acc += p.ajk(z, j, 0) * d.powu(j);
    }
    -2.0 * acc.im
}

/// `e(w,xi) = sum_{j>=1} (1/j!) d^{j+1}p/dxi^j dxibar (xi) (w-xi)^j
///          = sum_{j>=1} A_j1(xi) (w-xi)^j`.
pub fn e_fn(p: &WeightPolynomial, w: C64, xi: C64) -> C64 {
    let d = w - xi;
    let mut acc = C64::new(0.0, 0.0);
    for j in 1..=p.degree {
        acc += p.ajk(xi, j, 1) * d.powu(j);
    }
    acc
}

/// `r(w,xi,z) = 2 Im( sum_{j,k>=1} A_jk(xi) (w-xi)^j conj(z-xi)^k )`.
pub fn r_fn(p: &WeightPolynomial, w: C64, xi: C64, z: C64) -> f64 {
    let dw = w - xi;
    let dzc = (z - xi).conj();
    let mut acc = C64::new(0.0, 0.0);
    for j in 1..=p.degree {
        for k in 1..=p.degree.saturating_sub(j) {
            let a = p.ajk(xi, j, k);
            if a.norm() > 0.0 {
                acc += a * dw.powu(j) * dzc.powu(k);
            }
        }
    }
    2.0 * acc.im
}

/// Termwise majorant of the twist series, `2 sum_{j>=1} |A_j0(z)| |w-z|^j`.
/// Identity checks scale their tolerance by this: the identities cancel at
/// term magnitude, not at result magnitude.
pub fn twist_term_bound(p: &WeightPolynomial, w: C64, z: C64) -> f64 {
    let d = (w - z).norm();
    let mut acc = 0.0;
    for j in 1..=p.degree {
        acc += p.ajk(z, j, 0).norm() * d.powi(j as i32);
    }
    2.0 * acc
}

/// Termwise majorant of the `e` series, `sum_{j>=1} |A_j1(xi)| |w-xi|^j`.
pub fn e_term_bound(p: &WeightPolynomial, w: C64, xi: C64) -> f64 {
    let d = (w - xi).norm();
    let mut acc = 0.0;
    for j in 1..=p.degree {
        acc += p.ajk(xi, j, 1).norm() * d.powi(j as i32);
    }
    acc
}

/// Termwise majorant of the `r` series,
/// `2 sum_{j,k>=1} |A_jk(xi)| |w-xi|^j |z-xi|^k`.
pub fn r_term_bound(p: &WeightPolynomial, w: C64, xi: C64, z: C64) -> f64 {
    let dw = (w - xi).norm();
    let dz = (z - xi).norm();
    let mut acc = 0.0;
    for j in 1..=p.degree {
        for k in 1..=p.degree.saturating_sub(j) {
            acc += p.ajk(xi, j, k).norm() * dw.powi(j as i32) * dz.powi(k as i32);
        }
    }
    2.0 * acc
}

/// Model metric `d_M(z,w,t) = |z-w| + mu_p(z, |t + T(w,z)|)`, with the
/// `mu(z,0) = 0` convention at the diagonal.
pub fn metric_dm(p: &WeightPolynomial, z: C64, w: C64, t: f64) -> f64 {
    (z - w).norm() + mu_or_zero(p, z, t + twist_t(p, w, z))
}

/// `Delta = min{ mu_p(z, 1/tau), s^{1/2} }` for `tau, s > 0`.
pub fn delta_scale(p: &WeightPolynomial, z: C64, tau: f64, s: f64) -> Result<f64> {
    if tau <= 0.0 || s <= 0.0 {
        return Err(Error::Precondition(format!(
            "delta_scale requires tau > 0 and s > 0, got tau={tau}, s={s}"
        )));
    }
    Ok(mu(p, z, 1.0 / tau)?.min(s.sqrt()))
}

/// Seeded random subharmonic, nonharmonic weight of degree at most
/// `2 * half_deg_max`, built as `|q1|^2 + |q2|^2 + Re(h)` for random
/// holomorphic polynomials `q1, q2, h`. Subharmonic by construction since
/// `Lap |q|^2 = 4 |q'|^2 >= 0` and `Re(h)` is harmonic.
pub fn random_weight<R: Rng>(rng: &mut R, half_deg_max: u32) -> WeightPolynomial {
    let deg_q = rng.random_range(1..=half_deg_max);
    let mut coeffs: BTreeMap<(u32, u32), C64> = BTreeMap::new();
    let add = |map: &mut BTreeMap<(u32, u32), C64>, j: u32, k: u32, v: C64| {
        if v.norm() > 0.0 {
            *map.entry((j, k)).or_insert(C64::new(0.0, 0.0)) += v;
        }
    };
    for _ in 0..2 {
        let q: Vec<C64> = (0..=deg_q)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        for (j, qj) in q.iter().enumerate() {
            for (k, qk) in q.iter().enumerate() {
                add(&mut coeffs, j as u32, k as u32, qj * qk.conj());
            }
        }
    }
    for j in 1..=deg_q {
        let c = 0.5 * C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        add(&mut coeffs, j, 0, c);
        add(&mut coeffs, 0, j, c.conj());
    }
    WeightPolynomial::real_polynomial(coeffs).expect("construction is real by symmetry")
}
