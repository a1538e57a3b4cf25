//! Exact integer verification of the alternating-binomial and gamma-table
//! identities. Everything here is big-integer arithmetic; alternating sums
//! of binomials cancel catastrophically in floats.

use std::collections::BTreeMap;

use num_bigint::BigInt;

use crate::error::{Error, Result};

pub fn big_binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut acc = BigInt::from(1);
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `sum_{j=k}^{n} (-1)^j C(n,j) C(j,k)`; equals `(-1)^n` when `k = n`,
/// zero otherwise.
pub fn alt_binom_sum(n: u32, k: u32) -> Result<BigInt> {
    if k > n {
        return Err(Error::IndexRange(format!("alt_binom_sum needs 0 <= k <= n, got k={k}, n={n}")));
    }
    let mut acc = BigInt::from(0);
    for j in k..=n {
        let term = big_binomial(n as u64, j as u64) * big_binomial(j as u64, k as u64);
        if j % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    Ok(acc)
}

fn check_gamma_range(n: u32, k: u32, j: u32) -> Result<()> {
    if k > n || j > n - k {
        return Err(Error::IndexRange(format!(
            "gamma indices need 0 <= k <= n and 0 <= j <= n-k, got n={n}, k={k}, j={j}"
        )));
    }
    Ok(())
}

/// Table of `gamma_j^{n,k}` computed purely from the recursion
/// `gamma_j^{n,k} = gamma_j^{n-1,k} - gamma_{j-1}^{n-1,k} - gamma_j^{n-1,k-1}`
/// with `gamma_0^{0,0} = 1` and zero at out-of-range indices.
#[derive(Clone, Debug)]
pub struct GammaTable {
    pub n: u32,
    pub entries: BTreeMap<(u32, u32), BigInt>,
}

impl GammaTable {
    pub fn build(n: u32) -> Self {
        let mut levels: Vec<BTreeMap<(u32, u32), BigInt>> = Vec::with_capacity(n as usize + 1);
        let mut base = BTreeMap::new();
        base.insert((0u32, 0u32), BigInt::from(1));
        levels.push(base);
        for m in 1..=n {
            let prev = &levels[m as usize - 1];
            let zero = BigInt::from(0);
            let get = |k: i64, j: i64| -> BigInt {
                if k < 0 || j < 0 {
                    return zero.clone();
                }
                prev.get(&(k as u32, j as u32)).cloned().unwrap_or_else(|| zero.clone())
            };
            let mut level = BTreeMap::new();
            for k in 0..=m {
                for j in 0..=(m - k) {
                    let v = get(k as i64, j as i64)
                        - get(k as i64, j as i64 - 1)
                        - get(k as i64 - 1, j as i64);
                    level.insert((k, j), v);
                }
            }
            levels.push(level);
        }
        GammaTable {
            n,
            entries: levels.pop().expect("nonempty"),
        }
    }

    pub fn get(&self, k: u32, j: u32) -> Result<BigInt> {
        check_gamma_range(self.n, k, j)?;
        Ok(self.entries.get(&(k, j)).cloned().unwrap_or_else(|| BigInt::from(0)))
    }
}

/// `gamma_j^{n,k}` by unrolling the recursion.
pub fn gamma_recursive(n: u32, k: u32, j: u32) -> Result<BigInt> {
    check_gamma_range(n, k, j)?;
    GammaTable::build(n).get(k, j)
}

/// Closed form `gamma_j^{n,k} = (-1)^{j+k} C(n,k) C(n-k,j)`.
pub fn gamma_closed(n: u32, k: u32, j: u32) -> Result<BigInt> {
    check_gamma_range(n, k, j)?;
    let v = big_binomial(n as u64, k as u64) * big_binomial((n - k) as u64, j as u64);
    Ok(if (j + k) % 2 == 0 { v } else { -v })
}

/// Row sum `sum_{j=0}^{n-k} gamma_j^{n,k}`; nonzero iff `k = n`, where it
/// equals `(-1)^n` (the alternating-binomial collapse
/// `(-1)^k C(n,k) sum_j (-1)^j C(n-k,j)`).
pub fn gamma_row_sum(n: u32, k: u32) -> Result<BigInt> {
    check_gamma_range(n, k, 0)?;
    let table = GammaTable::build(n);
    let mut acc = BigInt::from(0);
    for j in 0..=(n - k) {
        acc += table.get(k, j)?;
    }
    Ok(acc)
}

/// Summary of one full exact sweep, used by the `identities` driver.
#[derive(Clone, Debug, serde::Serialize)]
pub struct IdentitySweep {
    pub n_max: u32,
    pub alt_binom_checked: usize,
    pub gamma_checked: usize,
    pub row_sums_checked: usize,
    pub pass: bool,
}

/// Runs the exact identity sweep for all `n <= n_max`.
pub fn identity_sweep(n_max: u32) -> Result<IdentitySweep> {
    let mut alt = 0;
    let mut gam = 0;
    let mut rows = 0;
    for n in 0..=n_max {
        let table = GammaTable::build(n);
        for k in 0..=n {
            let expect = if k == n {
                if n % 2 == 0 { BigInt::from(1) } else { BigInt::from(-1) }
            } else {
                BigInt::from(0)
            };
            if alt_binom_sum(n, k)? != expect {
                return Err(Error::Precondition(format!("alt_binom_sum({n},{k}) mismatch")));
            }
            alt += 1;
            let row_expect = if k == n { expect.clone() } else { BigInt::from(0) };
            if gamma_row_sum(n, k)? != row_expect {
                return Err(Error::Precondition(format!("gamma_row_sum({n},{k}) mismatch")));
            }
            rows += 1;
            for j in 0..=(n - k) {
                if table.get(k, j)? != gamma_closed(n, k, j)? {
                    return Err(Error::Precondition(format!(
                        "gamma closed/recursive mismatch at (n,k,j)=({n},{k},{j})"
                    )));
                }
                gam += 1;
            }
        }
    }
    Ok(IdentitySweep {
        n_max,
        alt_binom_checked: alt,
        gamma_checked: gam,
        row_sums_checked: rows,
        pass: true,
    })
}
