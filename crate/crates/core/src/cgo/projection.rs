//! Projection operators `P_mu`, `P_0` and their exponential conjugates
//! `P^k_mu = E_{-k} P_mu E_k`, as real `2M x 2M` matrices acting on
//! `[Re g; Im g]` sampled on the boundary grid.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// `P g = 1/2 (I + i H_mu) g + (1/4 pi) int g ds` written out for the
/// real-linear extension `H_mu (u + i v) = H_mu u + i H_{-mu} v`.
///
/// `hp` and `hm` are the grid matrices of `H_mu` and `H_{-mu}`. The mean
/// and the Nyquist mode pass through unchanged, which keeps `P` idempotent.
pub fn projection_grid(hp: &DMatrix<f64>, hm: &DMatrix<f64>) -> DMatrix<f64> {
    let m = hp.nrows();
    // Projector onto mean + Nyquist.
    let keep = DMatrix::from_fn(m, m, |i, j| {
        let alt = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        (1.0 + alt) / m as f64
    });
    let half = (DMatrix::identity(m, m) + keep) * 0.5;
    let mut p = DMatrix::zeros(2 * m, 2 * m);
    p.view_mut((0, 0), (m, m)).copy_from(&half);
    p.view_mut((m, m), (m, m)).copy_from(&half);
    p.view_mut((0, m), (m, m)).copy_from(&(hm * -0.5));
    p.view_mut((m, 0), (m, m)).copy_from(&(hp * 0.5));
    p
}

/// `e^{i k x}` at the boundary points `x = e^{i theta_j}`.
pub fn exponential(k: Complex64, thetas: &[f64]) -> Vec<Complex64> {
    thetas.iter().map(|&t| (Complex64::i() * k * Complex64::from_polar(1.0, t)).exp()).collect()
}

/// `E_{-k} P E_k`, assembled by row and column scaling.
pub fn conjugate(p: &DMatrix<f64>, k: Complex64, thetas: &[f64]) -> DMatrix<f64> {
    let m = thetas.len();
    let (c, s): (Vec<f64>, Vec<f64>) = exponential(k, thetas).iter().map(|z| (z.re, z.im)).unzip();
    let (ci, si): (Vec<f64>, Vec<f64>) = exponential(-k, thetas).iter().map(|z| (z.re, z.im)).unzip();
    // Right factor E_k = [[C, -S], [S, C]] mixes columns j and m + j.
    let mut pe = DMatrix::zeros(2 * m, 2 * m);
    for j in 0..m {
        for i in 0..2 * m {
            let a = p[(i, j)];
            let b = p[(i, m + j)];
            pe[(i, j)] = a * c[j] + b * s[j];
            pe[(i, m + j)] = -a * s[j] + b * c[j];
        }
    }
    // Left factor E_{-k} = [[C', -S'], [S', C']] mixes rows i and m + i.
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    for col in 0..2 * m {
        for i in 0..m {
            let a = pe[(i, col)];
            let b = pe[(m + i, col)];
            out[(i, col)] = ci[i] * a - si[i] * b;
            out[(m + i, col)] = si[i] * a + ci[i] * b;
        }
    }
    out
}
