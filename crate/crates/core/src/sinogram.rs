//! Real and complex sinograms.
//!
//! Rows index the offset (or pseudo-time) axis, columns index angles, so one
//! column is one virtual radiograph. Storage is column-major.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::vht::VhtMatrix;

/// `n` cell-centred points covering `[-half, half]`.
pub fn centered_grid(half: f64, n: usize) -> Vec<f64> {
    // Integer numerators keep the grid exactly antisymmetric.
    (0..n).map(|i| (2 * i as i64 + 1 - n as i64) as f64 * half / n as f64).collect()
}

/// `n` points covering `[-half, half]` including both ends.
pub fn closed_grid(half: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| (2 * i as i64 + 1 - n as i64) as f64 * half / (n - 1) as f64).collect()
}

/// `m` equispaced angles on `[0, 2pi)`.
pub fn angle_grid(m: usize) -> Vec<f64> {
    (0..m).map(|p| 2.0 * std::f64::consts::PI * p as f64 / m as f64).collect()
}

pub fn spacing(grid: &[f64]) -> f64 {
    if grid.len() < 2 {
        1.0
    } else {
        grid[1] - grid[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub offsets: Vec<f64>,
    pub angles: Vec<f64>,
    pub data: DMatrix<f64>,
    pub metadata: Value,
}

impl Sinogram {
    pub fn zeros(offsets: Vec<f64>, angles: Vec<f64>) -> Self {
        let data = DMatrix::zeros(offsets.len(), angles.len());
        Self { offsets, angles, data, metadata: json!({}) }
    }

    pub fn new(offsets: Vec<f64>, angles: Vec<f64>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != offsets.len() || data.ncols() != angles.len() {
            return Err(Error::Shape(format!(
                "sinogram data {}x{} vs grids {}x{}",
                data.nrows(),
                data.ncols(),
                offsets.len(),
                angles.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sinogram".into()));
        }
        Ok(Self { offsets, angles, data, metadata: json!({}) })
    }

    pub fn ds(&self) -> f64 {
        spacing(&self.offsets)
    }

    pub fn column(&self, p: usize) -> &[f64] {
        let n = self.data.nrows();
        &self.data.as_slice()[p * n..(p + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.dot(&other.data)
    }

    /// Grid description stored alongside the payload when persisted.
    fn grid_metadata(&self, kind: &str) -> Value {
        let mut meta = json!({
            "kind": kind,
            "offsets": { "first": self.offsets.first(), "last": self.offsets.last(), "count": self.offsets.len() },
            "angles": { "first": self.angles.first(), "last": self.angles.last(), "count": self.angles.len() },
        });
        if let (Value::Object(dst), Value::Object(src)) = (&mut meta, &self.metadata) {
            for (k, v) in src {
                dst.insert(k.clone(), v.clone());
            }
        }
        meta
    }

    pub fn to_vht(&self) -> VhtMatrix {
        VhtMatrix::from_real_matrix(&self.data).with_metadata(self.grid_metadata("sinogram"))
    }

    pub fn from_vht(m: &VhtMatrix) -> Result<Self> {
        let data = m.to_real_matrix()?;
        let (offsets, angles) = grids_from_metadata(&m.metadata, m.rows, m.cols)?;
        let mut s = Self::new(offsets, angles, data)?;
        s.metadata = strip_grids(&m.metadata);
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSinogram {
    pub times: Vec<f64>,
    pub angles: Vec<f64>,
    pub data: DMatrix<Complex64>,
    pub metadata: Value,
}

impl ComplexSinogram {
    pub fn zeros(times: Vec<f64>, angles: Vec<f64>) -> Self {
        let data = DMatrix::zeros(times.len(), angles.len());
        Self { times, angles, data, metadata: json!({}) }
    }

    pub fn dt(&self) -> f64 {
        spacing(&self.times)
    }

    pub fn column(&self, p: usize) -> &[Complex64] {
        let n = self.data.nrows();
        &self.data.as_slice()[p * n..(p + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn to_vht(&self) -> VhtMatrix {
        let mut meta = json!({
            "kind": "complex-sinogram",
            "offsets": { "first": self.times.first(), "last": self.times.last(), "count": self.times.len() },
            "angles": { "first": self.angles.first(), "last": self.angles.last(), "count": self.angles.len() },
        });
        if let (Value::Object(dst), Value::Object(src)) = (&mut meta, &self.metadata) {
            for (k, v) in src {
                dst.insert(k.clone(), v.clone());
            }
        }
        VhtMatrix::from_complex_matrix(&self.data).with_metadata(meta)
    }

    pub fn from_vht(m: &VhtMatrix) -> Result<Self> {
        let data = m.to_complex_matrix()?;
        let (times, angles) = grids_from_metadata(&m.metadata, m.rows, m.cols)?;
        Ok(Self { times, angles, data, metadata: strip_grids(&m.metadata) })
    }
}

fn axis(meta: &Value, key: &str, count: usize) -> Result<(f64, f64)> {
    let a = &meta[key];
    let first = a["first"].as_f64();
    let last = a["last"].as_f64();
    let n = a["count"].as_u64().map(|c| c as usize);
    match (first, last, n) {
        (Some(f), Some(l), Some(n)) if n == count => Ok((f, l)),
        _ if count == 0 => Ok((0.0, 0.0)),
        _ => Err(Error::Shape(format!("metadata lacks a valid `{key}` axis for {count} samples"))),
    }
}

fn linspace(first: f64, last: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![first],
        _ => (0..n).map(|i| first + (last - first) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn grids_from_metadata(meta: &Value, rows: usize, cols: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (f0, l0) = axis(meta, "offsets", rows)?;
    let (f1, l1) = axis(meta, "angles", cols)?;
    Ok((linspace(f0, l0, rows), linspace(f1, l1, cols)))
}

fn strip_grids(meta: &Value) -> Value {
    let mut m = meta.clone();
    if let Value::Object(o) = &mut m {
        o.remove("offsets");
        o.remove("angles");
        o.remove("kind");
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = centered_grid(1.0, 4);
        assert_eq!(g, vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(closed_grid(1.0, 3), vec![-1.0, 0.0, 1.0]);
        let a = angle_grid(4);
        assert!((a[2] - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn sinogram_vht_round_trip() {
        let offs = centered_grid(1.0, 6);
        let angs = angle_grid(5);
        let data = DMatrix::from_fn(6, 5, |i, j| (i * 7 + j) as f64 * 0.25);
        let mut s = Sinogram::new(offs, angs, data).unwrap();
        s.metadata = json!({"scale": 2.0});
        let back = Sinogram::from_vht(&s.to_vht()).unwrap();
        assert_eq!(back.data, s.data);
        assert_eq!(back.metadata["scale"], 2.0);
        for (a, b) in back.offsets.iter().zip(&s.offsets) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn column_is_contiguous_offset_axis() {
        let s = Sinogram::new(vec![0.0, 1.0], vec![0.0, 1.0, 2.0], DMatrix::from_fn(2, 3, |i, j| (10 * j + i) as f64)).unwrap();
        assert_eq!(s.column(2), &[20.0, 21.0]);
    }
}
