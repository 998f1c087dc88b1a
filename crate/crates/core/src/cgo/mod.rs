//! Boundary traces of complex geometric optics solutions.
//!
//! For each complex frequency `k = tau e^{i phi}` and each sign the
//! boundary integral equation `(I - P^k_{+-mu} - P_0) M = -1` is solved on
//! an `M_theta`-point boundary grid; `omega = M - 1`. Because the operators
//! are only real-linear the system is solved for `[Re M; Im M]`.

pub mod hilbert;
pub mod projection;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dnmap::DnMatrix;
use crate::error::{Error, Result};
use crate::sinogram::{angle_grid, closed_grid, ComplexSinogram};
use crate::vht::VhtMatrix;

pub use hilbert::{hilbert_matrix, hilbert_matrix_neg, BoundaryOperator, RealFourier};
pub use projection::{conjugate, exponential, projection_grid};

/// The scattering data `T~_odd(tau, phi)`: rows are `tau`, columns `phi`.
pub type ScatteringGrid = ComplexSinogram;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgoConfig {
    pub m_theta: usize,
    pub m_tau: usize,
    pub m_phi: usize,
    pub r_cut: f64,
    /// Hard limit on `|k|`; beyond it the conjugated operators are too
    /// ill-conditioned to trust.
    pub k_cutoff: f64,
    pub residual_tol: f64,
}

impl Default for CgoConfig {
    fn default() -> Self {
        Self { m_theta: 64, m_tau: 33, m_phi: 100, r_cut: 10.0, k_cutoff: 12.0, residual_tol: 1e-6 }
    }
}

impl CgoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_phi < 2 || !self.m_phi.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("M_phi = {} must be even", self.m_phi)));
        }
        if self.m_tau < 2 {
            return Err(Error::InvalidArgument("M_tau must be at least 2".into()));
        }
        if !(self.r_cut > 0.0) {
            return Err(Error::InvalidArgument("R_cut must be positive".into()));
        }
        if self.r_cut > self.k_cutoff {
            return Err(Error::FrequencyCutoff { k: self.r_cut, cutoff: self.k_cutoff });
        }
        RealFourier::new(self.m_theta)?;
        Ok(())
    }

    pub fn taus(&self) -> Vec<f64> {
        closed_grid(self.r_cut, self.m_tau)
    }

    pub fn phis(&self) -> Vec<f64> {
        angle_grid(self.m_phi)
    }
}

/// Precomputed `P_{+mu}`, `P_{-mu}` and `P_0` on the boundary grid.
#[derive(Clone, Debug)]
pub struct BieOperators {
    pub thetas: Vec<f64>,
    pub p_plus: DMatrix<f64>,
    pub p_minus: DMatrix<f64>,
    pub p_zero: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl BieOperators {
    /// Builds both branches from one DN matrix, with `H_{-mu} = -H_mu^{-1}`.
    pub fn from_dn(dn: &DnMatrix, m_theta: usize) -> Result<Self> {
        let hp = hilbert_matrix(dn);
        let hm = hilbert_matrix_neg(dn)?;
        Self::from_hilbert(&hp, &hm, dn.order(), m_theta)
    }

    /// Cross-check path: `H_{-mu}` from the DN matrix of `1 / sigma`.
    pub fn from_dn_pair(dn: &DnMatrix, dn_reciprocal: &DnMatrix, m_theta: usize) -> Result<Self> {
        if dn.order() != dn_reciprocal.order() {
            return Err(Error::Shape("DN matrices of different order".into()));
        }
        Self::from_hilbert(&hilbert_matrix(dn), &hilbert_matrix(dn_reciprocal), dn.order(), m_theta)
    }

    fn from_hilbert(hp: &BoundaryOperator, hm: &BoundaryOperator, order: usize, m_theta: usize) -> Result<Self> {
        let rf = RealFourier::new(m_theta)?;
        let gp = rf.grid_hilbert(hp)?;
        let gm = rf.grid_hilbert(hm)?;
        let g0 = rf.grid_hilbert(&hilbert_matrix(&DnMatrix::identity_conductivity(order)))?;
        Ok(Self {
            thetas: rf.thetas(),
            p_plus: projection_grid(&gp, &gm),
            p_minus: projection_grid(&gm, &gp),
            p_zero: projection_grid(&g0, &g0),
        })
    }

    pub fn m(&self) -> usize {
        self.thetas.len()
    }

    /// `P^k_{+-mu}`.
    pub fn conjugated(&self, sign: Sign, k: Complex64) -> DMatrix<f64> {
        let p = match sign {
            Sign::Plus => &self.p_plus,
            Sign::Minus => &self.p_minus,
        };
        conjugate(p, k, &self.thetas)
    }

    /// Solves for `omega = M - 1` at one frequency, returning the trace and
    /// the relative residual `||A M + 1|| / ||M||`.
    pub fn solve(&self, sign: Sign, k: Complex64) -> Result<(Vec<Complex64>, f64)> {
        let m = self.m();
        if k.norm() == 0.0 {
            return Ok((vec![Complex64::new(0.0, 0.0); m], 0.0));
        }
        let a = DMatrix::identity(2 * m, 2 * m) - self.conjugated(sign, k) - &self.p_zero;
        let rhs = DVector::from_fn(2 * m, |i, _| if i < m { -1.0 } else { 0.0 });
        let x = a.clone().lu().solve(&rhs).ok_or_else(|| Error::Singular(format!("BIE at k = {k}")))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("BIE solution at k = {k}")));
        }
        let residual = (&a * &x - &rhs).norm() / x.norm();
        let omega = (0..m).map(|j| Complex64::new(x[j] - 1.0, x[m + j])).collect();
        Ok((omega, residual))
    }
}

/// `omega_+-(theta_j, tau_m, phi_p)` on the full frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CgoTraces {
    pub thetas: Vec<f64>,
    pub taus: Vec<f64>,
    pub phis: Vec<f64>,
    /// Indexed `[(p * M_tau + m) * M_theta + j]`.
    pub omega_plus: Vec<Complex64>,
    pub omega_minus: Vec<Complex64>,
    /// Largest BIE residual per frequency, `[p * M_tau + m]`.
    pub residuals: Vec<f64>,
}

impl CgoTraces {
    pub fn index(&self, j: usize, m: usize, p: usize) -> usize {
        (p * self.taus.len() + m) * self.thetas.len() + j
    }

    pub fn trace(&self, sign: Sign, m: usize, p: usize) -> &[Complex64] {
        let start = self.index(0, m, p);
        let data = match sign {
            Sign::Plus => &self.omega_plus,
            Sign::Minus => &self.omega_minus,
        };
        &data[start..start + self.thetas.len()]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Frequencies whose residual exceeds `tol`, as `(tau, phi, residual)`.
    pub fn warnings(&self, tol: f64) -> Vec<(f64, f64, f64)> {
        let mt = self.taus.len();
        self.residuals.iter().enumerate().filter(|(_, r)| **r > tol).map(|(i, r)| (self.taus[i % mt], self.phis[i / mt], *r)).collect()
    }

    /// One VHT1 matrix per sign: rows are boundary points, columns run over
    /// `(phi, tau)` with `tau` fastest.
    pub fn to_vht(&self, sign: Sign) -> VhtMatrix {
        let data = match sign {
            Sign::Plus => &self.omega_plus,
            Sign::Minus => &self.omega_minus,
        };
        let (mth, cols) = (self.thetas.len(), self.taus.len() * self.phis.len());
        let rows: Vec<Complex64> = (0..mth).flat_map(|j| (0..cols).map(move |c| data[c * mth + j])).collect();
        VhtMatrix::complex(mth, cols, rows).with_metadata(json!({
            "kind": "cgo-trace",
            "sign": if sign == Sign::Plus { "+" } else { "-" },
            "m_theta": mth,
            "taus": self.taus,
            "phis": { "count": self.phis.len() },
            "column_order": "phi-major, tau-minor",
            "max_residual": self.max_residual(),
        }))
    }

    pub fn from_vht(plus: &VhtMatrix, minus: &VhtMatrix) -> Result<Self> {
        let a = plus.to_complex_matrix()?;
        let b = minus.to_complex_matrix()?;
        if a.shape() != b.shape() {
            return Err(Error::Shape("omega+ and omega- differ in shape".into()));
        }
        let taus: Vec<f64> = serde_json::from_value(plus.metadata["taus"].clone())?;
        let m_phi = plus.metadata["phis"]["count"].as_u64().ok_or_else(|| Error::Shape("missing phi count".into()))? as usize;
        let mth = a.nrows();
        if taus.len() * m_phi != a.ncols() {
            return Err(Error::Shape("trace columns do not match the frequency grid".into()));
        }
        let flat = |m: &DMatrix<Complex64>| -> Vec<Complex64> { (0..m.ncols()).flat_map(|c| (0..mth).map(move |j| m[(j, c)])).collect() };
        let residual = plus.metadata["max_residual"].as_f64().unwrap_or(0.0);
        Ok(Self {
            thetas: RealFourier::new(mth)?.thetas(),
            taus,
            phis: angle_grid(m_phi),
            omega_plus: flat(&a),
            omega_minus: flat(&b),
            residuals: vec![residual; a.ncols()],
        })
    }
}

/// Traces for both signs and the worst residual at one frequency.
type TracePair = (Vec<Complex64>, Vec<Complex64>, f64);

/// Solves the BIE on the whole `(tau, phi)` grid for both signs.
///
/// `(tau, phi)` and `(-tau, phi + pi)` name the same frequency, so only one
/// of each pair is solved.
pub fn solve_bie(ops: &BieOperators, cfg: &CgoConfig) -> Result<CgoTraces> {
    cfg.validate()?;
    if ops.m() != cfg.m_theta {
        return Err(Error::Shape(format!("operators built for {} boundary points, config asks {}", ops.m(), cfg.m_theta)));
    }
    let taus = cfg.taus();
    let phis = cfg.phis();
    let (mt, mp, mth) = (taus.len(), phis.len(), ops.m());
    // Canonical representative of each grid frequency.
    let canon = |m: usize, p: usize| -> (usize, usize) {
        if taus[m] < 0.0 {
            let mirror = taus.iter().position(|t| (t + taus[m]).abs() < 1e-12 * cfg.r_cut);
            if let Some(mm) = mirror {
                return (mm, (p + mp / 2) % mp);
            }
        }
        (m, p)
    };
    let mut unique: Vec<(usize, usize)> = Vec::new();
    for p in 0..mp {
        for m in 0..mt {
            if canon(m, p) == (m, p) {
                unique.push((m, p));
            }
        }
    }
    let solved: Vec<Result<TracePair>> = unique
        .par_iter()
        .map(|&(m, p)| {
            let k = Complex64::from_polar(taus[m], phis[p]);
            if k.norm() > cfg.k_cutoff {
                return Err(Error::FrequencyCutoff { k: k.norm(), cutoff: cfg.k_cutoff });
            }
            let (wp, rp) = ops.solve(Sign::Plus, k)?;
            let (wm, rm) = ops.solve(Sign::Minus, k)?;
            Ok((wp, wm, rp.max(rm)))
        })
        .collect();
    let mut slot = vec![usize::MAX; mt * mp];
    for (u, &(m, p)) in unique.iter().enumerate() {
        slot[p * mt + m] = u;
    }
    let mut results = Vec::with_capacity(solved.len());
    for r in solved {
        results.push(r?);
    }
    let mut omega_plus = vec![Complex64::new(0.0, 0.0); mth * mt * mp];
    let mut omega_minus = omega_plus.clone();
    let mut residuals = vec![0.0; mt * mp];
    for p in 0..mp {
        for m in 0..mt {
            let (cm, cp) = canon(m, p);
            let (wp, wm, r) = &results[slot[cp * mt + cm]];
            let base = (p * mt + m) * mth;
            omega_plus[base..base + mth].copy_from_slice(wp);
            omega_minus[base..base + mth].copy_from_slice(wm);
            residuals[p * mt + m] = *r;
        }
    }
    Ok(CgoTraces { thetas: ops.thetas.clone(), taus, phis, omega_plus, omega_minus, residuals })
}

/// `(1 / 2 pi i) oint f dx` over the unit circle by the trapezoid rule,
/// `dx = i e^{i theta} d theta`.
pub fn contour_integral(f: &[Complex64], thetas: &[f64]) -> Complex64 {
    let m = thetas.len() as f64;
    f.iter().zip(thetas).map(|(v, &t)| v * Complex64::from_polar(1.0, t)).sum::<Complex64>() / m
}

/// `T~_odd(tau, phi) = (1 / 2 pi i) oint (omega_+ - omega_-) dx`.
pub fn scattering_trace(traces: &CgoTraces) -> ScatteringGrid {
    let (mt, mp) = (traces.taus.len(), traces.phis.len());
    let mut out = ComplexSinogram::zeros(traces.taus.clone(), traces.phis.clone());
    for p in 0..mp {
        for m in 0..mt {
            let odd: Vec<Complex64> =
                traces.trace(Sign::Plus, m, p).iter().zip(traces.trace(Sign::Minus, m, p)).map(|(a, b)| a - b).collect();
            out.data[(m, p)] = contour_integral(&odd, &traces.thetas);
        }
    }
    out.metadata = json!({ "kind": "scattering", "rows": "tau", "max_residual": traces.max_residual() });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_rules() {
        let th = RealFourier::new(32).unwrap().thetas();
        let x: Vec<Complex64> = th.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let inv: Vec<Complex64> = x.iter().map(|v| 1.0 / v).collect();
        assert!(contour_integral(&x, &th).norm() < 1e-14);
        assert!((contour_integral(&inv, &th) - 1.0).norm() < 1e-14);
        // Exact for trigonometric polynomials of degree below M/2.
        let poly: Vec<Complex64> = x.iter().map(|v| v.powi(15) + 3.0 * v.powi(-15) + 2.0 / v).collect();
        assert!((contour_integral(&poly, &th) - 2.0).norm() < 1e-13);
    }

    #[test]
    fn homogeneous_traces_vanish() {
        let cfg = CgoConfig { m_theta: 64, m_tau: 5, m_phi: 4, r_cut: 3.0, k_cutoff: 4.0, residual_tol: 1e-6 };
        let ops = BieOperators::from_dn(&DnMatrix::identity_conductivity(5), cfg.m_theta).unwrap();
        let traces = solve_bie(&ops, &cfg).unwrap();
        let max = traces.omega_plus.iter().chain(&traces.omega_minus).map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max < 1e-9, "{max}");
        assert!(traces.max_residual() < 1e-10);
        let t = scattering_trace(&traces);
        assert!(t.norm() < 1e-9);
    }

    #[test]
    fn cutoff_is_enforced() {
        let cfg = CgoConfig { m_theta: 16, m_tau: 3, m_phi: 2, r_cut: 5.0, k_cutoff: 4.0, residual_tol: 1e-6 };
        assert!(matches!(cfg.validate(), Err(Error::FrequencyCutoff { .. })));
    }

    #[test]
    fn vht_round_trip() {
        let cfg = CgoConfig { m_theta: 16, m_tau: 3, m_phi: 4, r_cut: 1.0, k_cutoff: 2.0, residual_tol: 1e-6 };
        let mut lambda = DnMatrix::identity_conductivity(3).lambda;
        lambda[(0, 0)] = 1.1;
        lambda[(1, 1)] = 1.1;
        let ops = BieOperators::from_dn(&DnMatrix::new(lambda).unwrap(), 16).unwrap();
        let tr = solve_bie(&ops, &cfg).unwrap();
        let back = CgoTraces::from_vht(&tr.to_vht(Sign::Plus), &tr.to_vht(Sign::Minus)).unwrap();
        assert_eq!(back.omega_plus, tr.omega_plus);
        assert_eq!(back.omega_minus, tr.omega_minus);
        assert_eq!(back.taus, tr.taus);
    }
}
