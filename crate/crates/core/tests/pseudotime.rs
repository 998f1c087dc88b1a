use num_complex::Complex64;
use vhpt_core::cgo::hilbert::RealFourier;
use vhpt_core::cgo::{scattering_trace, solve_bie, BieOperators, CgoConfig};
use vhpt_core::dnmap::assemble_dn_relative;
use vhpt_core::forward::solve_continuum_nd;
use vhpt_core::mesh::Mesh;
use vhpt_core::phantom::{Inclusion, Phantom, Shape};
use vhpt_core::pseudotime::{
    calibrate_scale, first_order_scattering, mu_samples, phase_integrate, single_scattering_oracle, windowed_ft, PhaseConvention, ODD_SCALE,
};
use vhpt_core::sinogram::{angle_grid, centered_grid, closed_grid, Sinogram};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn pair(c: f64, left: bool, right: bool) -> Phantom {
    let mut inc = Vec::new();
    if left {
        inc.push(Inclusion { shape: Shape::Disc { center: [0.35, 0.2], radius: 0.25 }, sigma: 1.0 / c });
    }
    if right {
        inc.push(Inclusion { shape: Shape::Disc { center: [-0.35, -0.15], radius: 0.22 }, sigma: c });
    }
    Phantom::new(1.0, inc).unwrap()
}

/// FEM data through CGO traces to the blurred sinogram, CGO angle convention.
fn chain(p: &Phantom, cfg: &CgoConfig, a: f64, times: &[f64]) -> Sinogram {
    let mesh = Mesh::default_disc();
    let nd = solve_continuum_nd(p, 15, &mesh).unwrap();
    let nd1 = solve_continuum_nd(&Phantom::homogeneous(), 15, &mesh).unwrap();
    let ops = BieOperators::from_dn(&assemble_dn_relative(&nd, &nd1).unwrap(), cfg.m_theta).unwrap();
    let traces = solve_bie(&ops, cfg).unwrap();
    let t = windowed_ft(&scattering_trace(&traces), a, times).unwrap();
    phase_integrate(&t, PhaseConvention::Conjugate, ODD_SCALE)
}

fn two_region() -> Phantom {
    Phantom::new(
        1.0,
        vec![
            Inclusion { shape: Shape::Disc { center: [0.3, 0.2], radius: 0.25 }, sigma: 1.5 },
            Inclusion { shape: Shape::Ellipse { center: [-0.35, -0.1], semi_axes: [0.2, 0.12], angle: 0.4 }, sigma: 0.7 },
        ],
    )
    .unwrap()
}

#[test]
fn first_order_term_is_a_blurred_radon_derivative() {
    let phantom = two_region();
    let a = 0.05;
    let taus = closed_grid(13.0, 53);
    let angles = angle_grid(8);
    let thetas = RealFourier::new(64).unwrap().thetas();
    let pts = mu_samples(&phantom, 320).unwrap();
    let scattering = first_order_scattering(&pts, &taus, &angles, &thetas);
    let times = centered_grid(2.0, 80);
    let via_v1 = windowed_ft(&scattering, a, &times).unwrap();
    let (oracle, _) = single_scattering_oracle(&phantom, a, &times, &angles).unwrap();
    let diff = (&via_v1.data - &oracle.data).norm();
    let rel = diff / oracle.data.norm();
    println!("relative L2 {rel:.3e}");
    assert!(rel < 0.1, "{rel}");
}

#[test]
fn phase_integration_returns_blurred_radon() {
    let phantom = two_region();
    let a = 0.05;
    let angles = angle_grid(12);
    let times = centered_grid(2.0, 200);
    let (t1, r1) = single_scattering_oracle(&phantom, a, &times, &angles).unwrap();
    let mut odd = t1.clone();
    odd.data *= Complex64::new(2.0, 0.0);
    let s = phase_integrate(&odd, PhaseConvention::Conjugate, ODD_SCALE);
    let rel = (&s.data - &r1.data).norm() / r1.data.norm();
    println!("relative L2 {rel:.3e}, imaginary ratio {}", s.metadata["imaginary_ratio"]);
    assert!(rel < 1e-2, "{rel}");
    assert!(s.metadata["imaginary_ratio"].as_f64().unwrap() < 1e-3);
    let c = calibrate_scale(&phase_integrate(&odd, PhaseConvention::Conjugate, 1.0), &r1).unwrap();
    assert!((c / ODD_SCALE - 1.0).abs() < 1e-2, "{c}");
    let direct = phase_integrate(&odd, PhaseConvention::Direct, ODD_SCALE);
    assert!(direct.metadata["imaginary_warning"].as_bool().unwrap());
}

#[test]
fn first_order_columns_have_zero_mass() {
    // The window must hold the whole blurred support for the rule to apply.
    let times = centered_grid(4.0, 400);
    let (t1, _) = single_scattering_oracle(&two_region(), 0.05, &times, &angle_grid(16)).unwrap();
    let dt = t1.dt();
    for p in 0..16 {
        let col = t1.column(p);
        let mass: Complex64 = col.iter().sum::<Complex64>() * dt;
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(mass.norm() <= 1e-6 * norm, "column {p}: {} vs {norm}", mass.norm());
    }
}

#[test]
fn measured_chain_tracks_blurred_radon() {
    let cfg = CgoConfig { m_phi: 20, ..CgoConfig::default() };
    let (a, times) = (0.05, centered_grid(2.0, 200));
    let p = pair(1.1, true, true);
    let s = chain(&p, &cfg, a, &times);
    let (_, r1) = single_scattering_oracle(&p, a, &times, &cfg.phis()).unwrap();
    let mut rs: Vec<f64> = (0..cfg.m_phi).map(|q| pearson(s.column(q), r1.column(q))).collect();
    rs.sort_by(|x, y| x.total_cmp(y));
    println!("median Pearson {:.4}, min {:.4}", rs[rs.len() / 2], rs[0]);
    assert!(rs[rs.len() / 2] >= 0.9);
}

#[test]
fn chain_is_nearly_additive_at_low_contrast() {
    let cfg = CgoConfig { m_tau: 17, m_phi: 12, ..CgoConfig::default() };
    let (a, times) = (0.05, centered_grid(2.0, 120));
    let both = chain(&pair(1.1, true, true), &cfg, a, &times);
    let left = chain(&pair(1.1, true, false), &cfg, a, &times);
    let right = chain(&pair(1.1, false, true), &cfg, a, &times);
    let rel = (&both.data - &left.data - &right.data).norm() / both.data.norm();
    println!("superposition defect {rel:.3e}");
    assert!(rel <= 0.15);
}
