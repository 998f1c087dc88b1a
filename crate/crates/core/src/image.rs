//! Square rasters over [-1, 1]^2.
//!
//! Row `i` sits at `y = 1 - (i + 0.5) h`, column `j` at `x = -1 + (j + 0.5) h`
//! with `h = 2 / n`, so row 0 is the top of the picture. Pixels whose centre
//! lies outside the open unit disc hold 0.

use serde_json::json;

use crate::error::{Error, Result};
use crate::vht::VhtMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    n: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("image side {n} < 2")));
        }
        Ok(Self { n, values: vec![0.0; n * n] })
    }

    /// Samples `f(x, y)` at pixel centres inside the disc.
    pub fn from_fn(n: usize, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let mut img = Self::zeros(n)?;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = img.center(i, j);
                if x * x + y * y < 1.0 {
                    img.values[i * n + j] = f(x, y);
                }
            }
        }
        Ok(img)
    }

    /// Wraps raw row-major values, zeroing anything outside the disc.
    pub fn from_values(n: usize, mut values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("image side {n} < 2")));
        }
        if values.len() != n * n {
            return Err(Error::Shape(format!("{} values for a {n}x{n} image", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image values".into()));
        }
        let h = 2.0 / n as f64;
        for i in 0..n {
            for j in 0..n {
                let x = -1.0 + (j as f64 + 0.5) * h;
                let y = 1.0 - (i as f64 + 0.5) * h;
                if x * x + y * y >= 1.0 {
                    values[i * n + j] = 0.0;
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixel_size(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.pixel_size();
        (-1.0 + (j as f64 + 0.5) * h, 1.0 - (i as f64 + 0.5) * h)
    }

    pub fn in_support(&self, i: usize, j: usize) -> bool {
        let (x, y) = self.center(i, j);
        x * x + y * y < 1.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Value at `(x, y)` by bilinear interpolation between pixel centres,
    /// treating everything off the grid as zero.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let h = self.pixel_size();
        let fj = (x + 1.0) / h - 0.5;
        let fi = (1.0 - y) / h - 0.5;
        let j0 = fj.floor();
        let i0 = fi.floor();
        let dj = fj - j0;
        let di = fi - i0;
        let (i0, j0) = (i0 as isize, j0 as isize);
        let n = self.n as isize;
        let at = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= n || j >= n {
                0.0
            } else {
                self.values[(i * n + j) as usize]
            }
        };
        (1.0 - di) * ((1.0 - dj) * at(i0, j0) + dj * at(i0, j0 + 1)) + di * ((1.0 - dj) * at(i0 + 1, j0) + dj * at(i0 + 1, j0 + 1))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.in_support(i, j) {
                    out.values[i * self.n + j] = f(self.values[i * self.n + j]);
                }
            }
        }
        out
    }

    /// Integral over the disc, sum of values times pixel area.
    pub fn mass(&self) -> f64 {
        let h = self.pixel_size();
        self.values.iter().sum::<f64>() * h * h
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn to_vht(&self) -> VhtMatrix {
        VhtMatrix::real(self.n, self.n, self.values.clone()).with_metadata(json!({ "kind": "image", "extent": [-1.0, 1.0], "row0": "top" }))
    }

    pub fn from_vht(m: &VhtMatrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::Shape(format!("image must be square, got {}x{}", m.rows, m.cols)));
        }
        let values = m.to_real_matrix()?;
        let mut v = Vec::with_capacity(m.rows * m.cols);
        for r in 0..m.rows {
            for c in 0..m.cols {
                v.push(values[(r, c)]);
            }
        }
        Self::from_values(m.rows, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outside_disc_is_zero() {
        let img = ImageGrid::from_fn(16, |_, _| 1.0).unwrap();
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(8, 8), 1.0);
        let forced = ImageGrid::from_values(4, vec![5.0; 16]).unwrap();
        assert_eq!(forced.get(0, 0), 0.0);
        assert_eq!(forced.get(1, 1), 5.0);
    }

    #[test]
    fn bilinear_reproduces_linear_functions() {
        let img = ImageGrid::from_fn(64, |x, y| 2.0 * x - y + 0.5).unwrap();
        for &(x, y) in &[(0.1, 0.2), (-0.3, 0.45), (0.0, 0.0)] {
            assert!((img.bilinear(x, y) - (2.0 * x - y + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_tiny_or_misshaped() {
        assert!(ImageGrid::zeros(1).is_err());
        assert!(ImageGrid::from_values(3, vec![0.0; 8]).is_err());
        assert!(ImageGrid::from_values(2, vec![f64::NAN; 4]).is_err());
    }

    #[test]
    fn vht_round_trip() {
        let img = ImageGrid::from_fn(8, |x, y| x * y).unwrap();
        assert_eq!(ImageGrid::from_vht(&img.to_vht()).unwrap(), img);
    }
}
