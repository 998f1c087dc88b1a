use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use vhpt_core::basis;
use vhpt_core::dnmap::{ideal_nd_reference, trig_patterns};
use vhpt_core::forward::*;
use vhpt_core::mesh::Mesh;
use vhpt_core::{Inclusion, Phantom, Shape};

fn two_discs() -> Phantom {
    Phantom::new(
        1.0,
        vec![
            Inclusion { shape: Shape::Disc { center: [0.35, 0.2], radius: 0.25 }, sigma: 0.5 },
            Inclusion { shape: Shape::Disc { center: [-0.35, -0.15], radius: 0.22 }, sigma: 2.0 },
        ],
    )
    .unwrap()
}

#[test]
fn concentric_disc_matches_radial_oracle() {
    let start = Instant::now();
    let mesh = Mesh::default_disc();
    let nd = solve_continuum_nd(&Phantom::centered_disc(0.5, 2.0).unwrap(), 8, &mesh).unwrap();
    let lambda = nd.try_inverse().unwrap();
    assert!((analytic_dn_radial(0.5, 2.0, 1) - 13.0 / 11.0).abs() < 1e-14);
    for i in 0..16 {
        let k = basis::frequency(i + 1) as i64;
        let want = analytic_dn_radial(0.5, 2.0, k);
        let rel = (lambda[(i, i)] - want).abs() / want;
        assert!(rel < 0.02, "mode {k}: {} vs {want}", lambda[(i, i)]);
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn homogeneous_and_scaled_conductivity() {
    let mesh = Mesh::default_disc();
    let nd1 = solve_continuum_nd(&Phantom::homogeneous(), 8, &mesh).unwrap();
    let reference = ideal_nd_reference(18).unwrap();
    for i in 0..16 {
        assert!((nd1[(i, i)] - reference[(i, i)]).abs() / reference[(i, i)] < 0.02);
    }
    let s = 2.7;
    let nds = solve_continuum_nd(&Phantom::new(s, vec![]).unwrap(), 8, &mesh).unwrap();
    assert!((&nds * s - &nd1).norm() < 1e-9 * nd1.norm());
}

#[test]
fn nd_is_symmetric_and_converges_under_refinement() {
    let p = two_discs();
    let meshes = [Mesh::disc(24, 128).unwrap(), Mesh::disc(48, 256).unwrap(), Mesh::default_disc()];
    let nds: Vec<DMatrix<f64>> = meshes.iter().map(|m| solve_continuum_nd(&p, 6, m).unwrap()).collect();
    for nd in &nds {
        assert!((nd - nd.transpose()).norm() <= 1e-6 * nd.norm());
    }
    let d1 = (&nds[0] - &nds[1]).norm();
    let d2 = (&nds[1] - &nds[2]).norm();
    println!("ND change under refinement {d1:.2e} -> {d2:.2e}");
    assert!(d2 < d1);
}

#[test]
fn cem_linearity_reciprocity_and_grounding() {
    let mesh = Mesh::disc(48, 256).unwrap();
    let layout = ElectrodeLayout::default();
    let pat = trig_patterns(32, 1.0).unwrap();
    let p = two_discs();
    let v = solve_cem(&p, &layout, &pat.matrix, &mesh).unwrap();
    for c in 0..v.ncols() {
        assert!(v.column(c).sum().abs() < 1e-10 * v.column(c).norm());
    }
    let r = pat.matrix.transpose() * &v;
    assert!((&r - r.transpose()).norm() <= 1e-8 * r.norm());
    let zero = solve_cem(&p, &layout, &DMatrix::zeros(32, 3), &mesh).unwrap();
    assert_eq!(zero.norm(), 0.0);
    let mixed = &pat.matrix * DMatrix::from_fn(30, 2, |i, j| ((i + 3 * j) as f64).cos());
    let vm = solve_cem(&p, &layout, &mixed, &mesh).unwrap();
    let want = &v * DMatrix::from_fn(30, 2, |i, j| ((i + 3 * j) as f64).cos());
    assert!((vm - &want).norm() < 1e-9 * want.norm());
}

#[test]
fn cem_scales_with_conductivity_and_impedance() {
    let mesh = Mesh::disc(48, 256).unwrap();
    let pat = trig_patterns(16, 1.0).unwrap();
    let s = 2.7;
    let v1 = solve_cem(&Phantom::homogeneous(), &ElectrodeLayout::uniform(16, 0.5, 1e-2).unwrap(), &pat.matrix, &mesh).unwrap();
    let vs =
        solve_cem(&Phantom::new(s, vec![]).unwrap(), &ElectrodeLayout::uniform(16, 0.5, 1e-2 / s).unwrap(), &pat.matrix, &mesh).unwrap();
    assert!((&vs * s - &v1).norm() < 1e-9 * v1.norm());
}

#[test]
fn cem_approaches_continuum_with_more_electrodes() {
    let mesh = Mesh::disc(128, 1024).unwrap();
    let p = two_discs();
    let nd = solve_continuum_nd(&p, 3, &mesh).unwrap();
    let mut errors = Vec::new();
    for l in [8, 16, 32] {
        let pat = trig_patterns(l, 1.0).unwrap();
        let layout = ElectrodeLayout::uniform(l, 0.5, 1e-3).unwrap();
        let r = pat.matrix.transpose() * solve_cem(&p, &layout, &pat.matrix, &mesh).unwrap() / PI;
        errors.push((r.view((0, 0), (6, 6)) - &nd).norm() / nd.norm());
    }
    println!("CEM vs continuum ND: {errors:?}");
    assert!(errors[0] > errors[1] && errors[1] > errors[2]);
}

#[test]
fn noise_level_is_calibrated() {
    let v = DMatrix::from_fn(32, 30, |i, j| ((i * j) as f64 * 0.1).sin() + 0.1 * i as f64);
    assert_eq!(add_noise(&v, 0.0, 5).unwrap(), v);
    assert_eq!(add_noise(&v, 1e-3, 5).unwrap(), add_noise(&v, 1e-3, 5).unwrap());
    assert_ne!(add_noise(&v, 1e-3, 5).unwrap(), add_noise(&v, 1e-3, 6).unwrap());
    let mean: f64 = (0..100).map(|seed| (add_noise(&v, 1e-3, seed).unwrap() - &v).norm() / v.norm()).sum::<f64>() / 100.0;
    assert!((mean - 1e-3).abs() < 0.2e-3, "{mean}");
    assert!(add_noise(&v, -1.0, 0).is_err());
}

#[test]
fn solves_do_not_depend_on_thread_count() {
    let mesh = Mesh::disc(32, 192).unwrap();
    let p = two_discs();
    let pat = trig_patterns(16, 1.0).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            (
                solve_continuum_nd(&p, 5, &mesh).unwrap(),
                solve_cem(&p, &ElectrodeLayout::uniform(16, 0.5, 1e-2).unwrap(), &pat.matrix, &mesh).unwrap(),
            )
        })
    };
    assert_eq!(run(1), run(4));
}
