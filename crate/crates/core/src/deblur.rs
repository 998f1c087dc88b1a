//! Column-wise Gaussian blur and Tikhonov deconvolution of sinograms, and
//! the file exchange with an external deblurrer.
//!
//! The pseudo-time kernel `g` (transform `e^{-a tau^2}`) becomes
//! `g2(s) = e^{-s^2 / a} / sqrt(pi a)` in the offset variable `s = t / 2`,
//! with transform `e^{-a xi^2 / 4}`. Filtering uses that transform exactly.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde_json::json;

use crate::error::{Error, Result};
use crate::pseudotime::gaussian;
use crate::sinogram::{spacing, Sinogram};
use crate::vht;

pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// Samples of the pseudo-time kernel `g` on a `t` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    pub a: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl BlurKernel {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * spacing(&self.times)
    }
}

pub fn gaussian_kernel(a: f64, times: &[f64]) -> Result<BlurKernel> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("window parameter a = {a} must be positive")));
    }
    Ok(BlurKernel { a, times: times.to_vec(), values: times.iter().map(|&t| gaussian(a, t)).collect() })
}

/// Applies the real, even transfer function `h(xi)` to every column with
/// zero padding to twice the length.
fn filter_columns(s: &Sinogram, h: impl Fn(f64) -> f64 + Sync) -> Sinogram {
    let n = s.offsets.len();
    let np = 2 * n;
    let ds = s.ds();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(np);
    let inv = planner.plan_fft_inverse(np);
    let gain: Vec<f64> = (0..np)
        .map(|k| {
            let signed = if k <= np / 2 { k as f64 } else { k as f64 - np as f64 };
            h(2.0 * PI * signed / (np as f64 * ds)) / np as f64
        })
        .collect();
    let cols: Vec<Vec<f64>> = (0..s.angles.len())
        .into_par_iter()
        .map(|p| {
            let mut buf: Vec<Complex64> = s.column(p).iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(np, Complex64::new(0.0, 0.0));
            fwd.process(&mut buf);
            for (b, g) in buf.iter_mut().zip(&gain) {
                *b *= g;
            }
            inv.process(&mut buf);
            buf[..n].iter().map(|z| z.re).collect()
        })
        .collect();
    let mut out = s.clone();
    for (p, c) in cols.into_iter().enumerate() {
        out.data.column_mut(p).copy_from_slice(&c);
    }
    out
}

fn check_grid(s: &Sinogram, a: f64) -> Result<()> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("window parameter a = {a} must be positive")));
    }
    if s.offsets.len() < 2 {
        return Err(Error::Shape("sinogram needs at least two offsets".into()));
    }
    Ok(())
}

/// Convolves each column with `g2`.
pub fn blur_columns(s: &Sinogram, a: f64) -> Result<Sinogram> {
    check_grid(s, a)?;
    Ok(filter_columns(s, |xi| (-a * xi * xi / 4.0).exp()))
}

/// Tikhonov inverse filter `conj(g^) / (|g^|^2 + lambda)` per column.
pub fn deconvolve_columns(s: &Sinogram, a: f64, lambda: f64) -> Result<Sinogram> {
    check_grid(s, a)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("regularization lambda = {lambda} must be positive")));
    }
    let mut out = filter_columns(s, |xi| {
        let g = (-a * xi * xi / 4.0).exp();
        g / (g * g + lambda)
    });
    if let serde_json::Value::Object(m) = &mut out.metadata {
        m.insert("deblur".into(), json!({ "method": "tikhonov", "a": a, "lambda": lambda }));
    }
    Ok(out)
}

/// Where the external deblurrer lives.
#[derive(Clone, Debug, PartialEq)]
pub enum Endpoint {
    /// Runs `program args.. --in <in.vht> --out <out.vht>`.
    Command { program: PathBuf, args: Vec<String> },
    /// Drops `in.vht` into a watched directory and waits for `out.vht`.
    Directory { path: PathBuf, timeout: Duration },
}

static EXCHANGE_COUNTER: AtomicU64 = AtomicU64::new(0);

fn scratch_dir() -> Result<PathBuf> {
    let n = EXCHANGE_COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!("vhpt-exchange-{}-{n}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn read_response(path: &Path, input: &Sinogram) -> Result<Sinogram> {
    let m = vht::read(path).map_err(|e| Error::External(format!("unreadable response {}: {e}", path.display())))?;
    if (m.rows, m.cols) != input.data.shape() {
        return Err(Error::Shape(format!(
            "external deblurrer returned {}x{}, expected {}x{}",
            m.rows,
            m.cols,
            input.data.nrows(),
            input.data.ncols()
        )));
    }
    let data = m.to_real_matrix().map_err(|e| Error::External(format!("response is not real: {e}")))?;
    let mut out =
        Sinogram::new(input.offsets.clone(), input.angles.clone(), data).map_err(|e| Error::External(format!("invalid response: {e}")))?;
    out.metadata = input.metadata.clone();
    if let serde_json::Value::Object(meta) = &mut out.metadata {
        meta.insert("deblur".into(), json!({ "method": "external", "response": m.metadata }));
    }
    Ok(out)
}

/// Hands the sinogram to an external deblurrer over the VHT1 exchange.
pub fn external_deblur(s: &Sinogram, endpoint: &Endpoint) -> Result<Sinogram> {
    match endpoint {
        Endpoint::Command { program, args } => {
            let dir = scratch_dir()?;
            let input = dir.join("in.vht");
            let output = dir.join("out.vht");
            let result = (|| {
                vht::write(&input, &s.to_vht())?;
                let run = Command::new(program)
                    .args(args)
                    .arg("--in")
                    .arg(&input)
                    .arg("--out")
                    .arg(&output)
                    .output()
                    .map_err(|e| Error::External(format!("cannot start {}: {e}", program.display())))?;
                if !run.status.success() {
                    return Err(Error::External(format!(
                        "{} exited with {}: {}",
                        program.display(),
                        run.status,
                        String::from_utf8_lossy(&run.stderr).trim()
                    )));
                }
                if !output.exists() {
                    return Err(Error::External(format!("{} produced no output file", program.display())));
                }
                read_response(&output, s)
            })();
            let _ = std::fs::remove_dir_all(&dir);
            result
        }
        Endpoint::Directory { path, timeout } => {
            if !path.is_dir() {
                return Err(Error::External(format!("exchange directory {} does not exist", path.display())));
            }
            let input = path.join("in.vht");
            let output = path.join("out.vht");
            let _ = std::fs::remove_file(&output);
            // Write then rename so the watcher never sees a partial file.
            let staging = path.join(".in.vht.partial");
            vht::write(&staging, &s.to_vht())?;
            std::fs::rename(&staging, &input)?;
            let start = Instant::now();
            while !output.exists() {
                if start.elapsed() > *timeout {
                    let _ = std::fs::remove_file(&input);
                    return Err(Error::External(format!("no out.vht in {} after {:?}", path.display(), timeout)));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            let result = read_response(&output, s);
            let _ = std::fs::remove_file(&output);
            let _ = std::fs::remove_file(&input);
            result
        }
    }
}
