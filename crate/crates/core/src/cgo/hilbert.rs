//! Real Fourier bookkeeping on the boundary grid and the mu-Hilbert
//! transforms built from a DN matrix.
//!
//! Grid functions live on `theta_j = 2 pi j / M`. Their real coefficient
//! vectors are ordered `[mean, c1, s1, c2, s2, ..., c_{M/2-1}, s_{M/2-1}, nyquist]`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::dnmap::DnMatrix;
use crate::error::{Error, Result};

/// Operator on coefficient vectors `[mean, c1, s1, ..., cN, sN]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryOperator {
    pub matrix: DMatrix<f64>,
}

impl BoundaryOperator {
    pub fn order(&self) -> usize {
        (self.matrix.nrows() - 1) / 2
    }
}

/// `D_T^{-1}` on one frequency: `cos -> sin / n`, `sin -> -cos / n`.
fn inverse_tangential(n: usize) -> [[f64; 2]; 2] {
    let w = 1.0 / n as f64;
    [[0.0, -w], [w, 0.0]]
}

/// `H_mu = D_T^{-1} Lambda` with the mean channel zeroed.
pub fn hilbert_matrix(dn: &DnMatrix) -> BoundaryOperator {
    let n2 = dn.lambda.nrows();
    let mut h = DMatrix::zeros(n2 + 1, n2 + 1);
    for row in 0..n2 {
        let freq = row / 2 + 1;
        let d = inverse_tangential(freq);
        let (r0, r1) = (2 * (freq - 1), 2 * (freq - 1) + 1);
        let which = row - r0;
        for col in 0..n2 {
            h[(row + 1, col + 1)] = d[which][0] * dn.lambda[(r0, col)] + d[which][1] * dn.lambda[(r1, col)];
        }
    }
    BoundaryOperator { matrix: h }
}

/// `H_{-mu} = -H_mu^{-1}` on zero-mean coefficients.
pub fn hilbert_matrix_neg(dn: &DnMatrix) -> Result<BoundaryOperator> {
    let h = hilbert_matrix(dn);
    let n2 = dn.lambda.nrows();
    let block = h.matrix.view((1, 1), (n2, n2)).into_owned();
    let inv = block.try_inverse().ok_or_else(|| Error::Singular("H_mu block".into()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("H_mu block".into()));
    }
    let mut out = DMatrix::zeros(n2 + 1, n2 + 1);
    out.view_mut((1, 1), (n2, n2)).copy_from(&(-inv));
    Ok(BoundaryOperator { matrix: out })
}

/// Grid-to-coefficient and coefficient-to-grid matrices for `M` points.
#[derive(Clone, Debug)]
pub struct RealFourier {
    pub m: usize,
    pub analysis: DMatrix<f64>,
    pub synthesis: DMatrix<f64>,
}

impl RealFourier {
    pub fn new(m: usize) -> Result<Self> {
        if m < 4 || !m.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("boundary grid size {m} must be even and at least 4")));
        }
        let half = m / 2;
        let theta = |j: usize| 2.0 * PI * j as f64 / m as f64;
        let mut synthesis = DMatrix::zeros(m, m);
        let mut analysis = DMatrix::zeros(m, m);
        for j in 0..m {
            synthesis[(j, 0)] = 1.0;
            analysis[(0, j)] = 1.0 / m as f64;
            for n in 1..half {
                let (s, c) = (n as f64 * theta(j)).sin_cos();
                synthesis[(j, 2 * n - 1)] = c;
                synthesis[(j, 2 * n)] = s;
                analysis[(2 * n - 1, j)] = 2.0 * c / m as f64;
                analysis[(2 * n, j)] = 2.0 * s / m as f64;
            }
            let alt = if j % 2 == 0 { 1.0 } else { -1.0 };
            synthesis[(j, m - 1)] = alt;
            analysis[(m - 1, j)] = alt / m as f64;
        }
        Ok(Self { m, analysis, synthesis })
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.m).map(|j| 2.0 * PI * j as f64 / self.m as f64).collect()
    }

    /// Grid matrix of `h` on its retained modes and the classical
    /// conjugation above them. Mean and Nyquist map to zero.
    pub fn grid_hilbert(&self, h: &BoundaryOperator) -> Result<DMatrix<f64>> {
        let n = h.order();
        let half = self.m / 2;
        if n >= half {
            return Err(Error::InvalidArgument(format!(
                "boundary grid of {} points cannot carry {n} DN modes; need at least {}",
                self.m,
                2 * n + 2
            )));
        }
        let mut coef = DMatrix::zeros(self.m, self.m);
        coef.view_mut((1, 1), (2 * n, 2 * n)).copy_from(&h.matrix.view((1, 1), (2 * n, 2 * n)));
        for f in n + 1..half {
            coef[(2 * f, 2 * f - 1)] = 1.0;
            coef[(2 * f - 1, 2 * f)] = -1.0;
        }
        Ok(&self.synthesis * coef * &self.analysis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_hilbert_conjugates() {
        let dn = DnMatrix::identity_conductivity(4);
        let h = hilbert_matrix(&dn).matrix;
        // cos(theta) -> sin(theta)
        assert!((h[(2, 1)] - 1.0).abs() < 1e-15 && h[(1, 1)].abs() < 1e-15);
        // sin(3 theta) -> -cos(3 theta)
        assert!((h[(5, 6)] + 1.0).abs() < 1e-15);
        let neg = hilbert_matrix_neg(&dn).unwrap().matrix;
        assert!((&neg - &h).norm() < 1e-14);
        let sq = &neg * &h;
        for i in 1..9 {
            assert!((sq[(i, i)] + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn anti_involution_on_retained_modes() {
        let mut lambda = DnMatrix::identity_conductivity(3).lambda;
        lambda[(0, 2)] = 0.1;
        lambda[(2, 0)] = 0.1;
        lambda[(1, 1)] = 1.2;
        let dn = DnMatrix::new(lambda).unwrap();
        let h = hilbert_matrix(&dn).matrix;
        let neg = hilbert_matrix_neg(&dn).unwrap().matrix;
        let prod = -(&neg * &h);
        for i in 1..7 {
            for j in 1..7 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn fourier_round_trip_and_grid_hilbert() {
        let rf = RealFourier::new(16).unwrap();
        let id = &rf.analysis * &rf.synthesis;
        assert!((id - DMatrix::identity(16, 16)).norm() < 1e-12);
        let h = rf.grid_hilbert(&hilbert_matrix(&DnMatrix::identity_conductivity(2))).unwrap();
        let th = rf.thetas();
        let u = nalgebra::DVector::from_fn(16, |j, _| (5.0 * th[j]).cos() + 2.0 * th[j].sin() + 0.7);
        let hu = h * u;
        for j in 0..16 {
            let want = (5.0 * th[j]).sin() - 2.0 * th[j].cos();
            assert!((hu[j] - want).abs() < 1e-12);
        }
        assert!(rf.grid_hilbert(&hilbert_matrix(&DnMatrix::identity_conductivity(8))).is_err());
    }
}
