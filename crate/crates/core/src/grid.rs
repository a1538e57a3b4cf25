//! Uniform truncated grid over `[-R, R]^2` with Dirichlet truncation.
//!
//! Indexing is row-major over the `x2` rows: the flat index of the node at
//! `(ix, iy)` is `iy * n + ix`, and the node sits at
//! `z = (-R + ix h) + i (-R + iy h)` with `h = 2R / (n - 1)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radius: f64,
    pub points_per_axis: usize,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(radius: f64, points_per_axis: usize) -> Result<Self> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::InvalidGrid(format!("radius must be finite and positive, got {radius}")));
        }
        if points_per_axis < 8 {
            return Err(Error::InvalidGrid(format!(
                "need at least 8 points per axis, got {points_per_axis}"
            )));
        }
        let spacing = 2.0 * radius / (points_per_axis - 1) as f64;
        Ok(Self {
            radius,
            points_per_axis,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.points_per_axis * self.points_per_axis
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight per node.
    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn flat(&self, ix: usize, iy: usize) -> usize {
        iy * self.points_per_axis + ix
    }

    pub fn coords(&self, flat: usize) -> (usize, usize) {
        (flat % self.points_per_axis, flat / self.points_per_axis)
    }

    pub fn point(&self, flat: usize) -> C64 {
        let (ix, iy) = self.coords(flat);
        C64::new(
            -self.radius + ix as f64 * self.spacing,
            -self.radius + iy as f64 * self.spacing,
        )
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let (ix, iy) = self.coords(flat);
        let n = self.points_per_axis;
        ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1
    }

    /// Flat index of the node nearest to `z`; errors outside the box.
    pub fn nearest_index(&self, z: C64) -> Result<usize> {
        let to_axis = |v: f64| -> Result<usize> {
            let i = ((v + self.radius) / self.spacing).round();
            if i < 0.0 || i >= self.points_per_axis as f64 {
                return Err(Error::IndexRange(format!("point {z} outside grid radius {}", self.radius)));
            }
            Ok(i as usize)
        };
        Ok(self.flat(to_axis(z.re)?, to_axis(z.im)?))
    }

    /// Index of the node at `(-x1, -x2)`; the grid is symmetric about 0.
    pub fn flip_index(&self, flat: usize) -> usize {
        let (ix, iy) = self.coords(flat);
        let n = self.points_per_axis;
        self.flat(n - 1 - ix, n - 1 - iy)
    }

    /// Bilinear interpolation of a sampled field at `z`. Only trusted in
    /// `|Re z|, |Im z| <= 0.8 R`.
    pub fn interpolate(&self, values: &[C64], z: C64) -> Result<C64> {
        let trust = 0.8 * self.radius;
        if z.re.abs() > trust || z.im.abs() > trust {
            return Err(Error::Precondition(format!(
                "interpolation point {z} outside trust region 0.8R = {trust}"
            )));
        }
        let fx = (z.re + self.radius) / self.spacing;
        let fy = (z.im + self.radius) / self.spacing;
        let ix = (fx.floor() as usize).min(self.points_per_axis - 2);
        let iy = (fy.floor() as usize).min(self.points_per_axis - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = values[self.flat(ix, iy)];
        let v10 = values[self.flat(ix + 1, iy)];
        let v01 = values[self.flat(ix, iy + 1)];
        let v11 = values[self.flat(ix + 1, iy + 1)];
        Ok(v00 * (1.0 - tx) * (1.0 - ty)
            + v10 * tx * (1.0 - ty)
            + v01 * (1.0 - tx) * ty
            + v11 * tx * ty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_examples() {
        assert_eq!(GridSpec::new(4.0, 9).unwrap().spacing, 1.0);
        assert_eq!(GridSpec::new(6.0, 97).unwrap().spacing, 0.125);
        assert!(GridSpec::new(1.0, 3).is_err());
        assert!(GridSpec::new(f64::NAN, 32).is_err());
        assert!(GridSpec::new(-2.0, 32).is_err());
    }

    #[test]
    fn indexing_round_trip() {
        let g = GridSpec::new(3.0, 11).unwrap();
        for flat in 0..g.len() {
            let (ix, iy) = g.coords(flat);
            assert_eq!(g.flat(ix, iy), flat);
            let z = g.point(flat);
            assert_eq!(g.nearest_index(z).unwrap(), flat);
            assert_eq!(g.flip_index(g.flip_index(flat)), flat);
            assert!((g.point(g.flip_index(flat)) + z).norm() < 1e-12);
        }
    }

    #[test]
    fn interpolation_is_exact_on_bilinear_fields() {
        let g = GridSpec::new(2.0, 21).unwrap();
        let field: Vec<C64> = (0..g.len())
            .map(|i| {
                let z = g.point(i);
                C64::new(1.5 * z.re - 0.3 * z.im + 2.0, z.re * z.im)
            })
            .collect();
        let z = C64::new(0.637, -1.21);
        let got = g.interpolate(&field, z).unwrap();
        let expect = C64::new(1.5 * z.re - 0.3 * z.im + 2.0, z.re * z.im);
        assert!((got - expect).norm() < 1e-12);
        assert!(g.interpolate(&field, C64::new(1.9, 0.0)).is_err());
    }
}
