//! From scattering data to a blurred sinogram: the Gaussian-windowed
//! Fourier transform into pseudo-time, the phase integration, and the
//! single-scattering oracles used to check both.
//!
//! Conventions. Pseudo-time `t` and offset `s` are tied by `s = t / 2`.
//! Sinogram columns produced here are indexed by the CGO angle `phi`;
//! column `phi` corresponds to the parallel-beam angle `pi - phi` (see
//! [`to_radon_angles`]).
//!
//! With `g` the inverse transform of `e^{-a tau^2}` and `g2(s) = 2 g(2 s)`
//! the first-order scattering term satisfies
//!
//! ```text
//! T1(t, phi) = e^{-i phi} / (2 pi i) * (g * d/dt R mu(pi - phi, t / 2))(t)
//! R1(s, phi) = 1 / (4 pi^2) * (g2 * R mu(pi - phi, .))(s)
//! ```
//!
//! where `R1` is the cumulative integral of `-e^{i phi} / (2 pi i) * T1`.
//! Since `omega_odd` is twice the first-order term, the full pipeline is
//! scaled by [`ODD_SCALE`] `= 2 pi^2` to land on `g2 * R mu`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cgo::{contour_integral, ScatteringGrid};
use crate::error::{Error, Result};
use crate::phantom::Phantom;
use crate::sinogram::{spacing, ComplexSinogram, Sinogram};

/// Global factor taking the phase-integrated `omega_odd` data to `g2 * R mu`.
pub const ODD_SCALE: f64 = 2.0 * PI * PI;

/// Fraction of imaginary to real norm above which phase integration warns.
pub const IMAGINARY_WARNING: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseConvention {
    /// `-e^{i phi} / (2 pi i)`; yields a real sinogram.
    #[default]
    Conjugate,
    /// `e^{-i phi} / (2 pi i)`; leaves a residual `e^{-2 i phi}` phase.
    Direct,
}

impl PhaseConvention {
    fn factor(self, phi: f64) -> Complex64 {
        let two_pi_i = Complex64::new(0.0, 2.0 * PI);
        match self {
            PhaseConvention::Conjugate => -Complex64::from_polar(1.0, phi) / two_pi_i,
            PhaseConvention::Direct => Complex64::from_polar(1.0, -phi) / two_pi_i,
        }
    }
}

/// `g(t) = e^{-t^2 / (4 a)} / (2 sqrt(pi a))`, the inverse transform of
/// `e^{-a tau^2}` under `g^(tau) = int e^{-i t tau} g(t) dt`.
pub fn gaussian(a: f64, t: f64) -> f64 {
    (-t * t / (4.0 * a)).exp() / (2.0 * (PI * a).sqrt())
}

fn gaussian_derivative(a: f64, t: f64) -> f64 {
    -t / (2.0 * a) * gaussian(a, t)
}

fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let d = spacing(grid);
    let n = grid.len();
    (0..n).map(|i| if i == 0 || i + 1 == n { 0.5 * d } else { d }).collect()
}

fn check_symmetric(taus: &[f64]) -> Result<()> {
    let n = taus.len();
    let d = spacing(taus);
    for i in 0..n {
        if (taus[i] + taus[n - 1 - i]).abs() > 1e-9 * (1.0 + taus[n - 1].abs()) {
            return Err(Error::InvalidArgument("tau grid must be symmetric about 0".into()));
        }
        if i > 0 && ((taus[i] - taus[i - 1]) - d).abs() > 1e-9 * d.abs().max(1e-300) {
            return Err(Error::InvalidArgument("tau grid must be uniform".into()));
        }
    }
    Ok(())
}

/// `T_odd(t, phi) = (1 / 2 pi i) int_{-R}^{R} e^{-a tau^2} e^{-i t tau} T~_odd(tau, phi) d tau`
/// by the trapezoid rule on the stored `tau` grid.
pub fn windowed_ft(grid: &ScatteringGrid, a: f64, times: &[f64]) -> Result<ComplexSinogram> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("window parameter a = {a} must be positive")));
    }
    let taus = &grid.times;
    check_symmetric(taus)?;
    let w: Vec<f64> = trapezoid_weights(taus).iter().zip(taus).map(|(w, t)| w * (-a * t * t).exp()).collect();
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let mut out = ComplexSinogram::zeros(times.to_vec(), grid.angles.clone());
    let cols: Vec<Vec<Complex64>> = (0..grid.angles.len())
        .into_par_iter()
        .map(|p| {
            let col = grid.column(p);
            times
                .iter()
                .map(|&t| {
                    col.iter().zip(taus).zip(&w).map(|((v, &tau), &wt)| v * Complex64::from_polar(wt, -t * tau)).sum::<Complex64>()
                        / two_pi_i
                })
                .collect()
        })
        .collect();
    for (p, col) in cols.into_iter().enumerate() {
        out.data.column_mut(p).copy_from_slice(&col);
    }
    out.metadata = json!({ "kind": "pseudo-time", "a": a, "r_cut": taus.last().copied().unwrap_or(0.0) });
    Ok(out)
}

/// Cumulative trapezoid in `t` of `c(phi) T(t, phi)`, returned on `s = t / 2`.
///
/// The real part is kept; `imaginary_ratio` in the metadata records
/// `||Im|| / ||Re||` and `imaginary_warning` is set above [`IMAGINARY_WARNING`].
pub fn phase_integrate(t: &ComplexSinogram, convention: PhaseConvention, scale: f64) -> Sinogram {
    let dt = t.dt();
    let nt = t.times.len();
    let offsets: Vec<f64> = t.times.iter().map(|v| v / 2.0).collect();
    let mut out = Sinogram::zeros(offsets, t.angles.clone());
    let mut re2 = 0.0;
    let mut im2 = 0.0;
    for (p, &phi) in t.angles.iter().enumerate() {
        let c = convention.factor(phi) * scale;
        let col = t.column(p);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..nt {
            if i > 0 {
                acc += 0.5 * dt * c * (col[i - 1] + col[i]);
            }
            out.data[(i, p)] = acc.re;
            re2 += acc.re * acc.re;
            im2 += acc.im * acc.im;
        }
    }
    let ratio = if re2 > 0.0 {
        (im2 / re2).sqrt()
    } else if im2 > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let mut meta = t.metadata.clone();
    if let serde_json::Value::Object(m) = &mut meta {
        m.insert("kind".into(), json!("sinogram"));
        m.insert("scale".into(), json!(scale));
        m.insert("imaginary_ratio".into(), json!(if ratio.is_finite() { ratio } else { f64::MAX }));
        m.insert("imaginary_warning".into(), json!(ratio > IMAGINARY_WARNING));
        m.insert("angle_convention".into(), json!("cgo"));
    }
    out.metadata = meta;
    out
}

/// Reorders columns from CGO angles to parallel-beam angles. Column `q`
/// of the result (angle `2 pi q / M`) is column `(M/2 - q) mod M` of the
/// input. The map is an involution.
pub fn to_radon_angles(s: &Sinogram) -> Result<Sinogram> {
    let m = s.angles.len();
    if !m.is_multiple_of(2) {
        return Err(Error::InvalidArgument("angle adapter needs an even number of angles".into()));
    }
    let mut out = s.clone();
    for q in 0..m {
        let p = (m / 2 + m - q) % m;
        out.data.column_mut(q).copy_from(&s.data.column(p));
    }
    if let serde_json::Value::Object(meta) = &mut out.metadata {
        let flipped = meta.get("angle_convention").and_then(|v| v.as_str()) == Some("radon");
        meta.insert("angle_convention".into(), json!(if flipped { "cgo" } else { "radon" }));
    }
    Ok(out)
}

/// Least-squares factor `c` minimising `||c x - y||`.
pub fn calibrate_scale(x: &Sinogram, y: &Sinogram) -> Result<f64> {
    if x.data.shape() != y.data.shape() {
        return Err(Error::Shape("sinograms differ in shape".into()));
    }
    let xx = x.data.dot(&x.data);
    if xx == 0.0 {
        return Err(Error::Singular("cannot calibrate against a zero sinogram".into()));
    }
    Ok(x.data.dot(&y.data) / xx)
}

fn blurred_line_integrals(phantom: &Phantom, a: f64, t: f64, phi_radon: f64, derivative: bool) -> f64 {
    // (g * h)(t) or (g' * h)(t) with h(t') = R mu(phi_radon, t'/2), by
    // Gauss-free composite Simpson over the support |t'| <= 2.
    let n = 4000;
    let lo = -2.0;
    let hi = 2.0;
    let d = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let tp = lo + i as f64 * d;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let kernel = if derivative { gaussian_derivative(a, t - tp) } else { gaussian(a, t - tp) };
        acc += w * kernel * phantom.line_integral_mu(tp / 2.0, phi_radon);
    }
    acc * d / 3.0
}

/// First-order oracles: `T1^a` on the `times` grid and `g2 * R mu` on
/// `s = t / 2`, both indexed by CGO angle. Line integrals are exact.
pub fn single_scattering_oracle(phantom: &Phantom, a: f64, times: &[f64], angles: &[f64]) -> Result<(ComplexSinogram, Sinogram)> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("window parameter a = {a} must be positive")));
    }
    phantom.validate()?;
    let offsets: Vec<f64> = times.iter().map(|t| t / 2.0).collect();
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let cols: Vec<(Vec<Complex64>, Vec<f64>)> = angles
        .par_iter()
        .map(|&phi| {
            let radon_angle = PI - phi;
            let phase = Complex64::from_polar(1.0, -phi) / two_pi_i;
            let t1 = times.iter().map(|&t| phase * blurred_line_integrals(phantom, a, t, radon_angle, true)).collect();
            // (g * h)(t) equals (g2 * R mu)(t / 2) for h(t') = R mu(t' / 2).
            let r1 = times.iter().map(|&t| blurred_line_integrals(phantom, a, t, radon_angle, false)).collect();
            (t1, r1)
        })
        .collect();
    let mut t1 = ComplexSinogram::zeros(times.to_vec(), angles.to_vec());
    let mut r1 = Sinogram::zeros(offsets, angles.to_vec());
    for (p, (tc, rc)) in cols.into_iter().enumerate() {
        t1.data.column_mut(p).copy_from_slice(&tc);
        r1.data.column_mut(p).copy_from_slice(&rc);
    }
    t1.metadata = json!({ "kind": "pseudo-time", "a": a, "oracle": "single-scattering" });
    r1.metadata = json!({ "kind": "sinogram", "a": a, "oracle": "blurred-radon", "angle_convention": "cgo" });
    Ok((t1, r1))
}

/// `v1(x, k) = -i conj(k) (1/pi) int mu(y) e^{-2 i Re(k y)} / (x - y) dy`
/// at `x = e^{i theta}`, by midpoint quadrature on an `n x n` raster.
pub fn direct_v1(phantom: &Phantom, k: Complex64, thetas: &[f64], n: usize) -> Result<Vec<Complex64>> {
    let pts = mu_samples(phantom, n)?;
    Ok(direct_v1_samples(&pts, k, thetas))
}

/// Nonzero `mu` raster samples `(y, mu * area)`, for reuse across many `k`.
pub fn mu_samples(phantom: &Phantom, n: usize) -> Result<Vec<(Complex64, f64)>> {
    phantom.validate()?;
    if n < 2 {
        return Err(Error::InvalidArgument("raster must be at least 2x2".into()));
    }
    let h = 2.0 / n as f64;
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = -1.0 + (j as f64 + 0.5) * h;
            let y = -1.0 + (i as f64 + 0.5) * h;
            let mu = phantom.mu_at(x, y);
            if mu != 0.0 {
                if x.hypot(y) > 1.0 - 4.0 * h {
                    return Err(Error::Domain("mu does not vanish near the boundary; the Cauchy kernel is near-singular".into()));
                }
                pts.push((Complex64::new(x, y), mu * h * h));
            }
        }
    }
    Ok(pts)
}

pub fn direct_v1_samples(pts: &[(Complex64, f64)], k: Complex64, thetas: &[f64]) -> Vec<Complex64> {
    if k.norm() == 0.0 {
        return vec![Complex64::new(0.0, 0.0); thetas.len()];
    }
    let weighted: Vec<(Complex64, Complex64)> = pts.iter().map(|&(y, w)| (y, Complex64::from_polar(w, -2.0 * (k * y).re))).collect();
    let pre = -Complex64::i() * k.conj() / PI;
    thetas
        .iter()
        .map(|&t| {
            let x = Complex64::from_polar(1.0, t);
            pre * weighted.iter().map(|(y, w)| w / (x - y)).sum::<Complex64>()
        })
        .collect()
}

/// `T~_1(tau, phi)` from `v1` traces on the given frequency grid.
pub fn first_order_scattering(pts: &[(Complex64, f64)], taus: &[f64], angles: &[f64], thetas: &[f64]) -> ScatteringGrid {
    let cols: Vec<Vec<Complex64>> = angles
        .par_iter()
        .map(|&phi| {
            taus.iter().map(|&tau| contour_integral(&direct_v1_samples(pts, Complex64::from_polar(tau, phi), thetas), thetas)).collect()
        })
        .collect();
    let mut out = ComplexSinogram::zeros(taus.to_vec(), angles.to_vec());
    for (p, c) in cols.into_iter().enumerate() {
        out.data.column_mut(p).copy_from_slice(&c);
    }
    out
}
