//! Piecewise-linear finite elements for the conductivity equation on the
//! disc: the continuum Neumann-to-Dirichlet matrix, the complete electrode
//! model, and the separation-of-variables oracle for concentric discs.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::phantom::Phantom;
use crate::sparse::{EnvelopeCholesky, Triplets};

/// DN eigenvalue of `e^{in theta}` for a disc of radius `rho` and
/// conductivity `s` centred in a unit-conductivity unit disc.
pub fn analytic_dn_radial(rho: f64, s: f64, n: i64) -> f64 {
    assert!(rho > 0.0 && rho < 1.0 && s > 0.0 && n != 0, "analytic_dn_radial preconditions");
    let mu0 = (1.0 - s) / (1.0 + s);
    let q = mu0 * rho.powi(2 * n.unsigned_abs() as i32);
    n.unsigned_abs() as f64 * (1.0 - q) / (1.0 + q)
}

/// Barycentric sample points used to average sigma over a triangle.
const SIGMA_SAMPLES: [[f64; 3]; 4] = [
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

pub fn element_sigma(phantom: &Phantom, mesh: &Mesh) -> Vec<f64> {
    mesh.triangles
        .iter()
        .map(|tri| {
            let p = tri.map(|v| mesh.vertices[v]);
            SIGMA_SAMPLES
                .iter()
                .map(|w| {
                    let x = w[0] * p[0][0] + w[1] * p[1][0] + w[2] * p[2][0];
                    let y = w[0] * p[0][1] + w[1] * p[1][1] + w[2] * p[2][1];
                    phantom.sigma_at(x, y)
                })
                .sum::<f64>()
                / SIGMA_SAMPLES.len() as f64
        })
        .collect()
}

/// Row of each vertex after sorting by x; keeps the envelope narrow.
fn x_ordering(mesh: &Mesh) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..mesh.vertices.len()).collect();
    idx.sort_by(|&a, &b| {
        let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
        p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1]))
    });
    let mut pos = vec![0; idx.len()];
    for (row, &v) in idx.iter().enumerate() {
        pos[v] = row;
    }
    pos
}

fn assemble_stiffness(mesh: &Mesh, sigma: &[f64], pos: &[usize], t: &mut Triplets) {
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|v| mesh.vertices[v]);
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        let scale = sigma[e] / (4.0 * area);
        for i in 0..3 {
            for j in 0..=i {
                t.add(pos[tri[i]], pos[tri[j]], scale * (b[i] * b[j] + c[i] * c[j]));
            }
        }
    }
}

fn edge_length(mesh: &Mesh, a: usize, b: usize) -> f64 {
    let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// `M_b x` for a vector `x` indexed by boundary position.
fn boundary_mass_apply(mesh: &Mesh, x: &[f64]) -> Vec<f64> {
    let n = mesh.boundary.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let j = (i + 1) % n;
        let h = edge_length(mesh, mesh.boundary[i], mesh.boundary[j]);
        y[i] += h / 6.0 * (2.0 * x[i] + x[j]);
        y[j] += h / 6.0 * (x[i] + 2.0 * x[j]);
    }
    y
}

/// Neumann-to-Dirichlet matrix in the trigonometric basis,
/// `R[m][n] = (1/pi) <phi_m, R_sigma phi_n>` for `m, n = 1..=2N`.
///
/// Each Neumann problem is made uniquely solvable by pinning one interior
/// node and then shifting the boundary trace to zero mean.
pub fn solve_continuum_nd(phantom: &Phantom, order: usize, mesh: &Mesh) -> Result<DMatrix<f64>> {
    if order == 0 {
        return Err(Error::InvalidArgument("basis order must be at least 1".into()));
    }
    phantom.validate()?;
    let count = 2 * order;
    if count >= mesh.boundary.len() / 2 {
        return Err(Error::InvalidMesh(format!("{} boundary nodes cannot resolve basis order {order}", mesh.boundary.len())));
    }
    let pos = x_ordering(mesh);
    let sigma = element_sigma(phantom, mesh);
    let mut t = Triplets::new(mesh.vertices.len());
    assemble_stiffness(mesh, &sigma, &pos, &mut t);
    t.pin(pos[0]);
    let chol = EnvelopeCholesky::factor(&t)?;

    let angles = mesh.boundary_angles();
    let phi = basis::sample(count, &angles);
    let traces: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|n| {
            let g: Vec<f64> = phi.column(n).iter().copied().collect();
            let load = boundary_mass_apply(mesh, &g);
            let mut rhs = vec![0.0; mesh.vertices.len()];
            for (i, &b) in mesh.boundary.iter().enumerate() {
                rhs[pos[b]] += load[i];
            }
            rhs[pos[0]] = 0.0;
            let u = chol.solve(&rhs);
            let trace: Vec<f64> = mesh.boundary.iter().map(|&b| u[pos[b]]).collect();
            let ones = vec![1.0; trace.len()];
            let w = boundary_mass_apply(mesh, &ones);
            let mean = trace.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
            trace.iter().map(|v| v - mean).collect()
        })
        .collect();

    let mut nd = DMatrix::zeros(count, count);
    for (n, trace) in traces.iter().enumerate() {
        let mu = boundary_mass_apply(mesh, trace);
        for m in 0..count {
            nd[(m, n)] = phi.column(m).iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / PI;
        }
    }
    if nd.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ND matrix".into()));
    }
    Ok(nd)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    pub count: usize,
    /// Fraction of the boundary covered by all electrodes together.
    pub coverage: f64,
    pub contact_impedance: Vec<f64>,
}

impl ElectrodeLayout {
    pub fn uniform(count: usize, coverage: f64, z: f64) -> Result<Self> {
        let l = Self { count, coverage, contact_impedance: vec![z; count] };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 4 || !self.count.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("electrode count {} must be even and at least 4", self.count)));
        }
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return Err(Error::InvalidArgument(format!("coverage {} must lie in (0, 1)", self.coverage)));
        }
        if self.contact_impedance.len() != self.count || self.contact_impedance.iter().any(|z| !(*z > 0.0)) {
            return Err(Error::InvalidArgument("need one positive contact impedance per electrode".into()));
        }
        Ok(())
    }

    /// Centre angle of electrode `l` (0-based), `2 pi (l + 1) / L`.
    pub fn center(&self, l: usize) -> f64 {
        2.0 * PI * (l + 1) as f64 / self.count as f64
    }

    pub fn half_width(&self) -> f64 {
        self.coverage * PI / self.count as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.count).map(|l| self.center(l)).collect()
    }

    /// Electrode owning the boundary edge with midpoint angle `t`.
    fn owner(&self, t: f64) -> Option<usize> {
        let step = 2.0 * PI / self.count as f64;
        let k = (t / step).round();
        let d = t - k * step;
        if d.abs() < self.half_width() {
            Some(((k as i64 - 1).rem_euclid(self.count as i64)) as usize)
        } else {
            None
        }
    }
}

impl Default for ElectrodeLayout {
    fn default() -> Self {
        Self { count: 32, coverage: 0.5, contact_impedance: vec![1e-2; 32] }
    }
}

/// Complete electrode model with the given injected currents (one column
/// per pattern). Returns electrode potentials, each column grounded to
/// zero mean.
pub fn solve_cem(phantom: &Phantom, layout: &ElectrodeLayout, currents: &DMatrix<f64>, mesh: &Mesh) -> Result<DMatrix<f64>> {
    layout.validate()?;
    phantom.validate()?;
    let l = layout.count;
    if currents.nrows() != l {
        return Err(Error::Shape(format!("currents have {} rows for {l} electrodes", currents.nrows())));
    }
    for (c, col) in currents.column_iter().enumerate() {
        let scale = col.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
        if col.sum().abs() > 1e-10 * scale {
            return Err(Error::InvalidArgument(format!("current pattern {c} does not sum to zero")));
        }
    }
    let nv = mesh.vertices.len();
    let pos = x_ordering(mesh);
    let sigma = element_sigma(phantom, mesh);
    let mut t = Triplets::new(nv + l);
    assemble_stiffness(mesh, &sigma, &pos, &mut t);

    let mut area = vec![0.0; l];
    for (a, b) in mesh.boundary_edges() {
        let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
        let mid = (p[1] + q[1]).atan2(p[0] + q[0]).rem_euclid(2.0 * PI);
        let Some(e) = layout.owner(mid) else { continue };
        let h = edge_length(mesh, a, b);
        let z = layout.contact_impedance[e];
        let (ra, rb, re) = (pos[a], pos[b], nv + e);
        t.add(ra, ra, h / (3.0 * z));
        t.add(rb, rb, h / (3.0 * z));
        t.add(ra, rb, h / (6.0 * z));
        t.add(ra, re, -h / (2.0 * z));
        t.add(rb, re, -h / (2.0 * z));
        area[e] += h;
    }
    if let Some(e) = area.iter().position(|&a| a == 0.0) {
        return Err(Error::InvalidMesh(format!("electrode {e} covers no boundary edge")));
    }
    for (e, (a, z)) in area.iter().zip(&layout.contact_impedance).enumerate() {
        t.add(nv + e, nv + e, a / z);
    }
    let pinned = nv + l - 1;
    t.pin(pinned);
    let chol = EnvelopeCholesky::factor(&t)?;

    let cols: Vec<Vec<f64>> = (0..currents.ncols())
        .into_par_iter()
        .map(|c| {
            let mut rhs = vec![0.0; nv + l];
            for e in 0..l {
                rhs[nv + e] = currents[(e, c)];
            }
            rhs[pinned] = 0.0;
            let u = chol.solve(&rhs);
            let v = &u[nv..];
            let mean = v.iter().sum::<f64>() / l as f64;
            v.iter().map(|x| x - mean).collect()
        })
        .collect();
    let out = DMatrix::from_fn(l, currents.ncols(), |e, c| cols[c][e]);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CEM voltages".into()));
    }
    Ok(out)
}

/// Adds i.i.d. Gaussian noise with standard deviation
/// `level * ||V||_F / sqrt(len)`.
pub fn add_noise(v: &DMatrix<f64>, level: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level {level} must be non-negative")));
    }
    if level == 0.0 || v.is_empty() {
        return Ok(v.clone());
    }
    let std = level * v.norm() / (v.len() as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Column-major fill keeps the draw order fixed.
    let mut out = v.clone();
    for x in out.iter_mut() {
        *x += normal.sample(&mut rng);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_oracle_values() {
        assert!((analytic_dn_radial(0.5, 1.0, 3) - 3.0).abs() < 1e-15);
        assert!((analytic_dn_radial(0.5, 2.0, 1) - 13.0 / 11.0).abs() < 1e-14);
        assert!((analytic_dn_radial(0.5, 2.0, -1) - 13.0 / 11.0).abs() < 1e-14);
        assert!((analytic_dn_radial(1.0 - 1e-12, 2.0, 1) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn electrode_ownership() {
        let layout = ElectrodeLayout::uniform(4, 0.5, 0.1).unwrap();
        assert_eq!(layout.owner(PI / 2.0), Some(0));
        assert_eq!(layout.owner(2.0 * PI - 0.01), Some(3));
        assert_eq!(layout.owner(0.01), Some(3));
        assert_eq!(layout.owner(PI / 4.0), None);
        assert!(ElectrodeLayout::uniform(5, 0.5, 0.1).is_err());
        assert!(ElectrodeLayout::uniform(4, 1.0, 0.1).is_err());
    }

    #[test]
    fn coarse_homogeneous_nd_is_near_diagonal() {
        let mesh = Mesh::disc(24, 128).unwrap();
        let nd = solve_continuum_nd(&Phantom::homogeneous(), 3, &mesh).unwrap();
        for n in 1..=6 {
            let want = 1.0 / basis::frequency(n) as f64;
            assert!((nd[(n - 1, n - 1)] - want).abs() < 0.02 * want, "{n}: {}", nd[(n - 1, n - 1)]);
        }
        let asym = (&nd - nd.transpose()).norm() / nd.norm();
        assert!(asym < 1e-10);
    }

    #[test]
    fn cem_rejects_unbalanced_currents() {
        let mesh = Mesh::disc(6, 64).unwrap();
        let layout = ElectrodeLayout::uniform(8, 0.5, 0.1).unwrap();
        let mut i = DMatrix::zeros(8, 1);
        i[(0, 0)] = 1.0;
        assert!(matches!(solve_cem(&Phantom::homogeneous(), &layout, &i, &mesh), Err(Error::InvalidArgument(_))));
        let zero = solve_cem(&Phantom::homogeneous(), &layout, &DMatrix::zeros(8, 2), &mesh).unwrap();
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn noise_is_reproducible() {
        let v = DMatrix::from_fn(8, 6, |i, j| (i as f64 - j as f64).sin());
        assert_eq!(add_noise(&v, 0.0, 1).unwrap(), v);
        assert_eq!(add_noise(&v, 1e-3, 5).unwrap(), add_noise(&v, 1e-3, 5).unwrap());
        assert_ne!(add_noise(&v, 1e-3, 5).unwrap(), add_noise(&v, 1e-3, 6).unwrap());
        assert!(add_noise(&v, -1.0, 0).is_err());
    }
}
