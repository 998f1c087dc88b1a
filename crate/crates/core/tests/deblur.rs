use std::path::PathBuf;
use std::time::Duration;

use vhpt_core::deblur::*;
use vhpt_core::sinogram::{angle_grid, centered_grid};
use vhpt_core::{vht, Error, Sinogram};

fn sample() -> Sinogram {
    let mut s = Sinogram::zeros(centered_grid(1.0, 200), angle_grid(6));
    for p in 0..6 {
        for (i, &x) in s.offsets.clone().iter().enumerate() {
            s.data[(i, p)] = (-(x - 0.1 * p as f64).powi(2) / 0.04).exp() - 0.5 * (-(x + 0.3).powi(2) / 0.03).exp();
        }
    }
    s
}

#[test]
fn two_spikes_survive_a_round_trip() {
    let a = 0.002;
    let mut s = Sinogram::zeros(centered_grid(1.0, 200), vec![0.0]);
    let ds = s.ds();
    s.data[(60, 0)] = 1.0 / ds;
    s.data[(130, 0)] = 0.6 / ds;
    let back = deconvolve_columns(&blur_columns(&s, a).unwrap(), a, 1e-4).unwrap();
    let col = back.column(0);
    let peak = |lo: usize, hi: usize| (lo..hi).max_by(|&i, &j| col[i].partial_cmp(&col[j]).unwrap()).unwrap();
    assert_eq!(peak(40, 95), 60);
    assert_eq!(peak(95, 160), 130);
    // Amplitude as the local mass of each recovered spike.
    let mass = |c: usize| col[c - 12..=c + 12].iter().sum::<f64>() * ds;
    assert!((mass(60) - 1.0).abs() < 0.05, "{}", mass(60));
    assert!((mass(130) - 0.6).abs() < 0.05 * 0.6, "{}", mass(130));
}

#[test]
fn band_limited_round_trip() {
    let s = sample();
    let back = deconvolve_columns(&blur_columns(&s, 0.05).unwrap(), 0.05, 1e-4).unwrap();
    let rel = (&back.data - &s.data).norm() / s.norm();
    println!("round-trip relative L2 {rel:.3e}");
    assert!(rel <= 0.1, "{rel}");
}

#[test]
fn linear_and_commutes_with_column_order() {
    let s = sample();
    let mut t = s.clone();
    for (i, v) in t.data.iter_mut().enumerate() {
        *v = ((i * 31 % 17) as f64).sin();
    }
    let mut combo = s.clone();
    combo.data = &s.data * 1.5 - &t.data * 0.25;
    let d = |x: &Sinogram| deconvolve_columns(x, 0.05, 1e-3).unwrap();
    let lin = &d(&combo).data - (&d(&s).data * 1.5 - &d(&t).data * 0.25);
    assert!(lin.amax() < 1e-9);
    let mut perm = s.clone();
    for p in 0..6 {
        perm.data.column_mut(p).copy_from(&s.data.column(5 - p));
    }
    let (a, b) = (d(&s), d(&perm));
    for p in 0..6 {
        assert_eq!(a.data.column(p), b.data.column(5 - p));
    }
}

fn shell(script: &str) -> Endpoint {
    // Extra arguments after the script become $0.. in the shell.
    Endpoint::Command { program: PathBuf::from("sh"), args: vec!["-c".into(), script.into(), "stub".into()] }
}

#[test]
fn command_exchange_identity() {
    let s = sample();
    let out = external_deblur(&s, &shell("cp \"$2\" \"$4\"")).unwrap();
    assert_eq!(out.data, s.data);
    assert_eq!(out.offsets, s.offsets);
}

#[test]
fn command_exchange_failures() {
    let s = sample();
    match external_deblur(&s, &shell("exit 3")) {
        Err(Error::External(msg)) => assert!(msg.contains("exit"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(external_deblur(&s, &shell("true")), Err(Error::External(_))));
    assert!(matches!(external_deblur(&s, &shell("echo junk > \"$4\"")), Err(Error::External(_))));
    let missing = Endpoint::Command { program: PathBuf::from("/nonexistent/deblurrer"), args: vec![] };
    assert!(matches!(external_deblur(&s, &missing), Err(Error::External(_))));
}

#[test]
fn directory_exchange() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    let watcher = {
        let path = path.clone();
        std::thread::spawn(move || {
            let input = path.join("in.vht");
            while !input.exists() {
                std::thread::sleep(Duration::from_millis(5));
            }
            let mut m = vht::read(&input).unwrap();
            if let vht::VhtData::Real(v) = &mut m.data {
                v.iter_mut().for_each(|x| *x *= 2.0);
            }
            let tmp = path.join("out.partial");
            vht::write(&tmp, &m).unwrap();
            std::fs::rename(tmp, path.join("out.vht")).unwrap();
        })
    };
    let s = sample();
    let out = external_deblur(&s, &Endpoint::Directory { path: path.clone(), timeout: Duration::from_secs(20) }).unwrap();
    watcher.join().unwrap();
    assert_eq!(out.data, &s.data * 2.0);
    let timeout = external_deblur(&s, &Endpoint::Directory { path, timeout: Duration::from_millis(50) });
    assert!(matches!(timeout, Err(Error::External(_))));
}

#[test]
fn wrong_shape_is_rejected() {
    let s = sample();
    let dir = tempfile::tempdir().unwrap();
    let other = dir.path().join("small.vht");
    vht::write(&other, &Sinogram::zeros(centered_grid(1.0, 10), angle_grid(2)).to_vht()).unwrap();
    let script = format!("cp \"{}\" \"$4\"", other.display());
    assert!(matches!(external_deblur(&s, &shell(&script)), Err(Error::Shape(_))));
}
