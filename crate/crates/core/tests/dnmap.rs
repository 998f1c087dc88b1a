use nalgebra::DMatrix;
use vhpt_core::basis;
use vhpt_core::dnmap::*;
use vhpt_core::forward::*;
use vhpt_core::mesh::Mesh;
use vhpt_core::{Error, Phantom};

struct Tank {
    patterns: CurrentPatterns,
    v_trg: DMatrix<f64>,
    v_clb: DMatrix<f64>,
    v_1cem: DMatrix<f64>,
}

/// Concentric target in a 2.7-conductivity tank.
fn tank() -> Tank {
    let mesh = Mesh::default_disc();
    let layout = ElectrodeLayout::default();
    let patterns = trig_patterns(32, 0.35).unwrap();
    let background = 2.7;
    let mut target = Phantom::centered_disc(0.5, 2.0 * background).unwrap();
    target.background_sigma = background;
    let reference = Phantom::new(background, vec![]).unwrap();
    Tank {
        v_trg: solve_cem(&target, &layout, &patterns.matrix, &mesh).unwrap(),
        v_clb: solve_cem(&reference, &layout, &patterns.matrix, &mesh).unwrap(),
        v_1cem: solve_cem(&Phantom::homogeneous(), &layout, &patterns.matrix, &mesh).unwrap(),
        patterns,
    }
}

#[test]
fn calibrated_tank_recovers_relative_conductivity() {
    let t = tank();
    let dn = assemble_dn_calibrated(&t.v_trg, &t.v_clb, &t.v_1cem, &t.patterns, CalibrationForm::NdSide, DEFAULT_CONDITION_CAP).unwrap();
    assert_eq!(dn.lambda, dn.lambda.transpose());
    let want = analytic_dn_radial(0.5, 2.0, 1);
    for i in 0..2 {
        assert!((dn.lambda[(i, i)] - want).abs() / want < 0.05, "{}", dn.lambda[(i, i)]);
    }
    let eig = dn.lambda.clone().symmetric_eigenvalues();
    assert!(eig.iter().all(|&v| v > 0.0));
}

#[test]
fn both_calibration_forms_agree() {
    let t = tank();
    let nd = assemble_dn_calibrated(&t.v_trg, &t.v_clb, &t.v_1cem, &t.patterns, CalibrationForm::NdSide, DEFAULT_CONDITION_CAP).unwrap();
    let dn = assemble_dn_calibrated(&t.v_trg, &t.v_clb, &t.v_1cem, &t.patterns, CalibrationForm::DnSide, DEFAULT_CONDITION_CAP).unwrap();
    assert!((&nd.lambda - &dn.lambda).norm() < 1e-9 * nd.lambda.norm());
}

#[test]
fn calibration_collapses_without_a_target() {
    let t = tank();
    let dn = assemble_dn_calibrated(&t.v_clb, &t.v_clb, &t.v_clb, &t.patterns, CalibrationForm::NdSide, DEFAULT_CONDITION_CAP).unwrap();
    assert!((dn.lambda - DnMatrix::identity_conductivity(15).lambda).norm() < 1e-9);
}

#[test]
fn common_gain_on_tank_measurements_cancels() {
    let t = tank();
    let base = assemble_dn_calibrated(&t.v_trg, &t.v_clb, &t.v_1cem, &t.patterns, CalibrationForm::NdSide, DEFAULT_CONDITION_CAP).unwrap();
    for gain in [0.5, 3.0, 1e3] {
        let scaled = assemble_dn_calibrated(
            &(&t.v_trg * gain),
            &(&t.v_clb * gain),
            &t.v_1cem,
            &t.patterns,
            CalibrationForm::NdSide,
            DEFAULT_CONDITION_CAP,
        )
        .unwrap();
        assert!((&scaled.lambda - &base.lambda).norm() <= 1e-10 * base.lambda.norm() * gain.max(1.0));
    }
}

#[test]
fn homogeneous_continuum_path() {
    let mesh = Mesh::default_disc();
    let dn = assemble_dn_continuum(&solve_continuum_nd(&Phantom::homogeneous(), 8, &mesh).unwrap()).unwrap();
    for i in 0..16 {
        let k = basis::frequency(i + 1) as f64;
        assert!((dn.lambda[(i, i)] - k).abs() / k < 0.02);
    }
}

#[test]
fn shape_and_conditioning_errors() {
    let t = tank();
    let short = t.v_trg.columns(0, 10).into_owned();
    assert!(matches!(
        assemble_dn_calibrated(&short, &t.v_clb, &t.v_1cem, &t.patterns, CalibrationForm::NdSide, DEFAULT_CONDITION_CAP),
        Err(Error::Shape(_))
    ));
    let mut dead = t.v_clb.clone();
    dead.column_mut(29).fill(0.0);
    match assemble_dn_calibrated(&t.v_trg, &dead, &t.v_1cem, &t.patterns, CalibrationForm::NdSide, DEFAULT_CONDITION_CAP) {
        Err(Error::IllConditioned { name, .. }) => assert_eq!(name, "R_clb"),
        other => panic!("{other:?}"),
    }
}
