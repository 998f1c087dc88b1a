//! Symmetric positive definite solves with a variable-band (envelope)
//! Cholesky factorization.
//!
//! The matrices coming out of the disc meshes are banded once the nodes are
//! sorted along one axis, so a skyline factor keeps fill small without any
//! external sparse package.

use crate::error::{Error, Result};

/// Entries of a symmetric matrix, duplicates summed. Only the lower
/// triangle (`row >= col`) is kept.
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.entries.push((r, c, v));
    }

    /// Replaces row and column `p` by the identity, returning the rest untouched.
    pub fn pin(&mut self, p: usize) {
        self.entries.retain(|&(r, c, _)| r != p && c != p);
        self.entries.push((p, p, 1.0));
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }
}

#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(t: &Triplets) -> Result<Self> {
        let n = t.n;
        let mut first: Vec<usize> = (0..n).collect();
        for &(r, c, _) in &t.entries {
            first[r] = first[r].min(c);
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for &(r, c, v) in &t.entries {
            data[offset[r] + (c - first[r])] += v;
        }
        for i in 0..n {
            let fi = first[i];
            let (head, row_i) = data.split_at_mut(offset[i]);
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let row_j = &head[offset[j]..offset[j + 1]];
                let a = &row_i[start - fi..j - fi];
                let b = &row_j[start - fj..j - fj];
                let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let djj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - s) / djj;
            }
            let s: f64 = row_i[..i - fi].iter().map(|x| x * x).sum();
            let d = row_i[i - fi] - s;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular(format!("non-positive pivot {d:.3e} at row {i}")));
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(Self { n, first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y = b.to_vec();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        y
    }
}
