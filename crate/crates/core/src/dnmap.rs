//! Dirichlet-to-Neumann matrices in the trigonometric basis, from
//! continuum ND matrices or from calibrated electrode data.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::basis;
use crate::error::{Error, Result};
use crate::vht::VhtMatrix;

pub const DEFAULT_CONDITION_CAP: f64 = 1e10;

/// Trigonometric current patterns, one column per basis function.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentPatterns {
    pub matrix: DMatrix<f64>,
    pub amplitude: f64,
}

impl CurrentPatterns {
    pub fn electrodes(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Column `n` is `(2 pi / L) * I0 * phi_n(theta_l)` at the electrode
/// centres `theta_l = 2 pi l / L`, `l = 1..=L`, for `n = 1..=L-2`.
pub fn trig_patterns(l: usize, amplitude: f64) -> Result<CurrentPatterns> {
    if l < 4 || !l.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("electrode count {l} must be even and at least 4")));
    }
    let w = 2.0 * PI / l as f64;
    let matrix = DMatrix::from_fn(l, l - 2, |e, c| w * amplitude * basis::trig(c + 1, w * (e + 1) as f64));
    Ok(CurrentPatterns { matrix, amplitude })
}

/// `diag(1, 1, 1/2, 1/2, ..., 2/(L-2), 2/(L-2))`.
pub fn ideal_nd_reference(l: usize) -> Result<DMatrix<f64>> {
    if l < 4 || !l.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("electrode count {l} must be even and at least 4")));
    }
    Ok(DMatrix::from_fn(l - 2, l - 2, |i, j| if i == j { 1.0 / basis::frequency(i + 1) as f64 } else { 0.0 }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DnMatrix {
    pub lambda: DMatrix<f64>,
}

impl DnMatrix {
    pub fn new(lambda: DMatrix<f64>) -> Result<Self> {
        let n = lambda.nrows();
        if n != lambda.ncols() || n == 0 || !n.is_multiple_of(2) {
            return Err(Error::Shape(format!("DN matrix must be square of even size, got {}x{}", n, lambda.ncols())));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DN matrix".into()));
        }
        Ok(Self { lambda })
    }

    /// Homogeneous unit-conductivity DN matrix, `diag(1, 1, 2, 2, ...)`.
    pub fn identity_conductivity(order: usize) -> Self {
        Self { lambda: DMatrix::from_fn(2 * order, 2 * order, |i, j| if i == j { basis::frequency(i + 1) as f64 } else { 0.0 }) }
    }

    /// Highest frequency `N`; the matrix is `2N x 2N`.
    pub fn order(&self) -> usize {
        self.lambda.nrows() / 2
    }

    pub fn to_vht(&self) -> VhtMatrix {
        VhtMatrix::from_real_matrix(&self.lambda)
            .with_metadata(json!({ "kind": "dn-matrix", "basis": "cos1,sin1,cos2,sin2,...", "order": self.order() }))
    }

    pub fn from_vht(m: &VhtMatrix) -> Result<Self> {
        Self::new(m.to_real_matrix()?)
    }
}

/// Which of the two algebraically equivalent calibration formulas to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationForm {
    /// Compose on the ND side: `(C R_trg - R_1cem + R_1)^{-1}`.
    #[default]
    NdSide,
    /// Compose inverses of DN blocks, then symmetrize the inverse.
    DnSide,
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn checked_inverse(m: &DMatrix<f64>, name: &str, cap: f64) -> Result<DMatrix<f64>> {
    let cond = condition_number(m);
    if !(cond <= cap) {
        return Err(Error::IllConditioned { name: name.to_string(), cond, cap });
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular(name.to_string()))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Calibrated DN matrix from target, tank and simulated unit-conductivity
/// electrode voltages.
///
/// The electrode products `I^T V` approximate `pi I0^2` times the
/// normalized ND matrix, so the relative map is divided by that factor
/// before the ideal reference is added.
pub fn assemble_dn_calibrated(
    v_trg: &DMatrix<f64>,
    v_clb: &DMatrix<f64>,
    v_1cem: &DMatrix<f64>,
    patterns: &CurrentPatterns,
    form: CalibrationForm,
    cap: f64,
) -> Result<DnMatrix> {
    let i = &patterns.matrix;
    for (name, v) in [("V_trg", v_trg), ("V_clb", v_clb), ("V_1cem", v_1cem)] {
        if v.shape() != i.shape() {
            return Err(Error::Shape(format!("{name} is {:?}, current patterns are {:?}", v.shape(), i.shape())));
        }
    }
    let r_trg = i.transpose() * v_trg;
    let r_clb = i.transpose() * v_clb;
    let r_1cem = i.transpose() * v_1cem;
    let r_1 = ideal_nd_reference(i.nrows())?;
    let norm = PI * patterns.amplitude * patterns.amplitude;
    let lambda = match form {
        CalibrationForm::NdSide => {
            let c = &r_1cem * checked_inverse(&r_clb, "R_clb", cap)?;
            let y = (c * r_trg - &r_1cem) / norm;
            symmetrize(&checked_inverse(&(y + r_1), "C R_trg - R_1cem + R_1", cap)?)
        }
        CalibrationForm::DnSide => {
            let l_trg = checked_inverse(&r_trg, "R_trg", cap)?;
            let l_clb = checked_inverse(&r_clb, "R_clb", cap)?;
            let l_1cem = checked_inverse(&r_1cem, "R_1cem", cap)?;
            let l_1 = checked_inverse(&r_1, "R_1", cap)?;
            let l1cem_inv = checked_inverse(&l_1cem, "Lambda_1cem", cap)?;
            let tilde = (&l1cem_inv * l_clb * checked_inverse(&l_trg, "Lambda_trg", cap)? - &l1cem_inv) / norm
                + checked_inverse(&l_1, "Lambda_1", cap)?;
            let a = checked_inverse(&tilde, "tilde Lambda", cap)?;
            let b = checked_inverse(&tilde.transpose(), "tilde Lambda^T", cap)?;
            (a + b) * 0.5
        }
    };
    DnMatrix::new(lambda)
}

/// Symmetrized inverse of a continuum ND matrix.
pub fn assemble_dn_continuum(nd: &DMatrix<f64>) -> Result<DnMatrix> {
    DnMatrix::new(symmetrize(&checked_inverse(nd, "ND matrix", DEFAULT_CONDITION_CAP)?))
}

/// DN matrix from the relative ND map `nd_sigma - nd_one` added to the
/// exact reference. Discretization error common to both solves cancels.
pub fn assemble_dn_relative(nd_sigma: &DMatrix<f64>, nd_one: &DMatrix<f64>) -> Result<DnMatrix> {
    if nd_sigma.shape() != nd_one.shape() {
        return Err(Error::Shape("ND matrices differ in shape".into()));
    }
    let r_1 = ideal_nd_reference(nd_sigma.nrows() + 2)?;
    let m = nd_sigma - nd_one + r_1;
    DnMatrix::new(symmetrize(&checked_inverse(&m, "R_sigma - R_one + R_1", DEFAULT_CONDITION_CAP)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_l4() {
        let p = trig_patterns(4, 1.0).unwrap();
        assert_eq!(p.matrix.ncols(), 2);
        let want = [0.0, -1.0, 0.0, 1.0];
        for (e, w) in want.iter().enumerate() {
            assert!((p.matrix[(e, 0)] - PI / 2.0 * w).abs() < 1e-15);
        }
        assert!(trig_patterns(5, 1.0).is_err());
        assert!(trig_patterns(2, 1.0).is_err());
    }

    #[test]
    fn patterns_l32_sum_to_zero() {
        let p = trig_patterns(32, 0.35).unwrap();
        assert_eq!(p.matrix.ncols(), 30);
        assert_eq!(p.amplitude, 0.35);
        for c in 0..30 {
            assert!(p.matrix.column(c).sum().abs() < 1e-12);
        }
        let peak = p.matrix.abs().max() / (2.0 * PI / 32.0);
        assert!((peak - 0.35).abs() < 1e-12);
    }

    #[test]
    fn reference_diagonals() {
        let r6 = ideal_nd_reference(6).unwrap();
        assert_eq!(r6, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.5, 0.5])));
        let r32 = ideal_nd_reference(32).unwrap();
        assert!((r32[(29, 29)] - 2.0 / 30.0).abs() < 1e-15);
        assert!((r32[(28, 28)] - 2.0 / 30.0).abs() < 1e-15);
        for i in 1..30 {
            assert!(r32[(i, i)] > 0.0 && r32[(i, i)] <= r32[(i - 1, i - 1)]);
        }
    }

    #[test]
    fn continuum_inverse() {
        let r = ideal_nd_reference(10).unwrap();
        let dn = assemble_dn_continuum(&r).unwrap();
        for i in 0..8 {
            assert!((dn.lambda[(i, i)] - basis::frequency(i + 1) as f64).abs() < 1e-14);
        }
        assert_eq!(dn, DnMatrix::identity_conductivity(4));
        let nd = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 / (1 + i) as f64 } else { 0.01 });
        let back = assemble_dn_continuum(&nd).unwrap().lambda.try_inverse().unwrap();
        assert!((back - nd).norm() < 1e-10);
    }

    #[test]
    fn ill_conditioning_names_the_matrix() {
        let mut nd = ideal_nd_reference(6).unwrap();
        nd[(3, 3)] = 1e-14;
        match assemble_dn_continuum(&nd) {
            Err(Error::IllConditioned { name, .. }) => assert_eq!(name, "ND matrix"),
            other => panic!("{other:?}"),
        }
    }
}
