//! Parallel-beam Radon transform and its adjoint, filtered back-projection,
//! TV-regularized reconstruction and the final conductivity image.
//!
//! Angles here are standard: column `phi` integrates along `x . theta = s`
//! with `theta = (cos phi, sin phi)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::phantom::mu_to_sigma;
use crate::sinogram::{spacing, Sinogram};

pub const DEFAULT_ITERATIONS: usize = 400;
pub const CLIP_EPS: f64 = 1e-6;

/// Angles per partial image in the back-projection; partials are summed
/// in a fixed order so results do not depend on the thread count.
const ANGLE_CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampFilter {
    #[default]
    RamLak,
    /// Ram-Lak with a Hann taper towards Nyquist.
    Hann,
    /// Plain back-projection.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    pub alpha: f64,
    pub iterations: usize,
    pub n: usize,
    pub filter: RampFilter,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self { alpha: 0.009, iterations: DEFAULT_ITERATIONS, n: 128, filter: RampFilter::RamLak }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("TV weight alpha = {} must be positive", self.alpha)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("at least one TV iteration is required".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("image side {} < 2", self.n)));
        }
        Ok(())
    }
}

/// Bilinear stencil of the point `(x, y)`: pixel indices and weights.
fn stencil(n: usize, h: f64, x: f64, y: f64) -> [(usize, f64); 4] {
    let c = (x + 1.0) / h - 0.5;
    let r = (1.0 - y) / h - 0.5;
    let c0 = c.floor();
    let r0 = r.floor();
    let fc = c - c0;
    let fr = r - r0;
    let mut out = [(0, 0.0); 4];
    let corners = [
        (r0, c0, (1.0 - fr) * (1.0 - fc)),
        (r0, c0 + 1.0, (1.0 - fr) * fc),
        (r0 + 1.0, c0, fr * (1.0 - fc)),
        (r0 + 1.0, c0 + 1.0, fr * fc),
    ];
    for (slot, (ri, ci, w)) in out.iter_mut().zip(corners) {
        if ri >= 0.0 && ci >= 0.0 && (ri as usize) < n && (ci as usize) < n {
            *slot = (ri as usize * n + ci as usize, w);
        }
    }
    out
}

/// Discrete Radon transform with a fixed number of samples per ray,
/// stored as a sparse matrix whose rows follow the column-major sinogram.
#[derive(Clone, Debug)]
pub struct RadonOperator {
    pub n: usize,
    pub offsets: Vec<f64>,
    pub angles: Vec<f64>,
    pub samples: usize,
    support: Vec<bool>,
    row_start: Vec<usize>,
    pixels: Vec<u32>,
    weights: Vec<f64>,
}

impl RadonOperator {
    pub fn new(n: usize, offsets: &[f64], angles: &[f64], samples: usize) -> Result<Self> {
        if n < 2 || samples < 1 || offsets.is_empty() || angles.is_empty() {
            return Err(Error::InvalidArgument("empty Radon geometry".into()));
        }
        let support: Vec<bool> = ImageGrid::from_fn(n, |_, _| 1.0)?.values().iter().map(|&v| v != 0.0).collect();
        let h = 2.0 / n as f64;
        let du = 2.0 / samples as f64;
        let per_angle: Vec<Vec<Vec<(u32, f64)>>> = angles
            .par_iter()
            .map(|&phi| {
                let (sn, cs) = phi.sin_cos();
                offsets
                    .iter()
                    .map(|&s| {
                        let mut row: Vec<(u32, f64)> = Vec::with_capacity(4 * samples);
                        for q in 0..samples {
                            let u = -1.0 + (q as f64 + 0.5) * du;
                            for (i, w) in stencil(n, h, s * cs - u * sn, s * sn + u * cs) {
                                if w != 0.0 && support[i] {
                                    row.push((i as u32, w * du));
                                }
                            }
                        }
                        row.sort_by_key(|e| e.0);
                        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len() / 2);
                        for (i, w) in row {
                            match merged.last_mut() {
                                Some(last) if last.0 == i => last.1 += w,
                                _ => merged.push((i, w)),
                            }
                        }
                        merged
                    })
                    .collect()
            })
            .collect();
        let mut row_start = vec![0];
        let mut pixels = Vec::new();
        let mut weights = Vec::new();
        for rows in per_angle {
            for row in rows {
                for (i, w) in row {
                    pixels.push(i);
                    weights.push(w);
                }
                row_start.push(pixels.len());
            }
        }
        Ok(Self { n, offsets: offsets.to_vec(), angles: angles.to_vec(), samples, support, row_start, pixels, weights })
    }

    /// Twice as many ray samples as pixels across.
    pub fn with_default_sampling(n: usize, offsets: &[f64], angles: &[f64]) -> Result<Self> {
        Self::new(n, offsets, angles, 2 * n)
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[r]..self.row_start[r + 1];
        self.pixels[span.clone()].iter().zip(&self.weights[span]).map(|(&i, &w)| (i as usize, w))
    }

    pub fn apply(&self, values: &[f64]) -> Sinogram {
        let ns = self.offsets.len();
        let data: Vec<f64> = (0..ns * self.angles.len()).into_par_iter().map(|r| self.row(r).map(|(i, w)| w * values[i]).sum()).collect();
        let mut out = Sinogram::zeros(self.offsets.clone(), self.angles.clone());
        out.data.as_mut_slice().copy_from_slice(&data);
        out
    }

    pub fn adjoint(&self, s: &Sinogram) -> Vec<f64> {
        let ns = self.offsets.len();
        let nn = self.n * self.n;
        let chunks: Vec<usize> = (0..self.angles.len()).step_by(ANGLE_CHUNK).collect();
        let partials: Vec<Vec<f64>> = chunks
            .par_iter()
            .map(|&start| {
                let mut img = vec![0.0; nn];
                let stop = (start + ANGLE_CHUNK).min(self.angles.len());
                for r in start * ns..stop * ns {
                    let v = s.data.as_slice()[r];
                    if v != 0.0 {
                        for (i, w) in self.row(r) {
                            img[i] += w * v;
                        }
                    }
                }
                img
            })
            .collect();
        let mut out = vec![0.0; nn];
        for part in partials {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
        out
    }

    fn check(&self, s: &Sinogram) -> Result<()> {
        if s.offsets != self.offsets || s.angles != self.angles {
            return Err(Error::Shape("sinogram grid does not match the Radon geometry".into()));
        }
        Ok(())
    }
}

pub fn radon_transform(mu: &ImageGrid, offsets: &[f64], angles: &[f64]) -> Result<Sinogram> {
    Ok(RadonOperator::with_default_sampling(mu.n(), offsets, angles)?.apply(mu.values()))
}

/// Adjoint of [`radon_transform`] under the plain sums over pixels and samples.
pub fn backprojection(s: &Sinogram, n: usize) -> Result<ImageGrid> {
    let op = RadonOperator::with_default_sampling(n, &s.offsets, &s.angles)?;
    ImageGrid::from_values(n, op.adjoint(s))
}

fn ramp_filter(s: &Sinogram, filter: RampFilter) -> Sinogram {
    if filter == RampFilter::None {
        return s.clone();
    }
    let n = s.offsets.len();
    let ds = s.ds();
    let np = (4 * n).next_power_of_two();
    // Band-limited ramp sampled in space, wrapped onto the padded grid.
    let mut kernel = vec![Complex64::new(0.0, 0.0); np];
    for k in -(n as i64 - 1)..=(n as i64 - 1) {
        let v = if k == 0 {
            1.0 / (4.0 * ds * ds)
        } else if k % 2 != 0 {
            -1.0 / (PI * PI * (k * k) as f64 * ds * ds)
        } else {
            0.0
        };
        kernel[k.rem_euclid(np as i64) as usize] = Complex64::new(v * ds, 0.0);
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(np);
    let inv = planner.plan_fft_inverse(np);
    fwd.process(&mut kernel);
    if filter == RampFilter::Hann {
        for (k, v) in kernel.iter_mut().enumerate() {
            let f = if k <= np / 2 { k } else { np - k } as f64 / (np / 2) as f64;
            *v *= 0.5 * (1.0 + (PI * f).cos());
        }
    }
    let cols: Vec<Vec<f64>> = (0..s.angles.len())
        .into_par_iter()
        .map(|p| {
            let mut buf: Vec<Complex64> = s.column(p).iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(np, Complex64::new(0.0, 0.0));
            fwd.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&kernel) {
                *b *= k / np as f64;
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

/// Ramp-filters each column and back-projects by linear interpolation in
/// `s`, weight `pi / N_phi` for angles covering `[0, 2 pi)`.
pub fn fbp(s: &Sinogram, cfg: &ReconstructionConfig) -> Result<ImageGrid> {
    if cfg.n < 2 {
        return Err(Error::InvalidArgument(format!("image side {} < 2", cfg.n)));
    }
    if s.offsets.len() < 2 {
        return Err(Error::Shape("sinogram needs at least two offsets".into()));
    }
    if s.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sinogram".into()));
    }
    let q = ramp_filter(s, cfg.filter);
    let ds = spacing(&s.offsets);
    let s0 = s.offsets[0];
    let ns = s.offsets.len();
    let trig: Vec<(f64, f64)> = s.angles.iter().map(|a| a.sin_cos()).collect();
    let weight = PI / s.angles.len() as f64;
    let n = cfg.n;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let h = 2.0 / n as f64;
            let y = 1.0 - (i as f64 + 0.5) * h;
            (0..n)
                .map(|j| {
                    let x = -1.0 + (j as f64 + 0.5) * h;
                    if x * x + y * y >= 1.0 {
                        return 0.0;
                    }
                    let mut acc = 0.0;
                    for (p, &(sn, cs)) in trig.iter().enumerate() {
                        let pos = (x * cs + y * sn - s0) / ds;
                        let k = pos.floor();
                        if k < 0.0 || k as usize + 1 >= ns {
                            continue;
                        }
                        let f = pos - k;
                        let col = q.column(p);
                        acc += (1.0 - f) * col[k as usize] + f * col[k as usize + 1];
                    }
                    acc * weight
                })
                .collect()
        })
        .collect();
    ImageGrid::from_values(n, rows.concat())
}

/// Forward differences with a zero difference across the last row/column.
fn gradient(n: usize, x: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            gx[k] = if j + 1 < n { x[k + 1] - x[k] } else { 0.0 };
            gy[k] = if i + 1 < n { x[k + n] - x[k] } else { 0.0 };
        }
    }
}

/// Adjoint of [`gradient`], i.e. minus the divergence.
fn gradient_adjoint(n: usize, gx: &[f64], gy: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let mut v = 0.0;
            if j + 1 < n {
                v -= gx[k];
            }
            if j > 0 {
                v += gx[k - 1];
            }
            if i + 1 < n {
                v -= gy[k];
            }
            if i > 0 {
                v += gy[k - n];
            }
            out[k] = v;
        }
    }
}

fn total_variation(n: usize, x: &[f64]) -> f64 {
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    gradient(n, x, &mut gx, &mut gy);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum()
}

/// Largest singular value of `[R; grad]` by power iteration.
fn operator_norm(op: &RadonOperator, iterations: usize) -> f64 {
    let n = op.n;
    let mut x: Vec<f64> = op.support().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    let mut tmp = vec![0.0; n * n];
    let mut est = 0.0;
    for _ in 0..iterations {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let r = op.apply(&x);
        let mut y = op.adjoint(&r);
        gradient(n, &x, &mut gx, &mut gy);
        gradient_adjoint(n, &gx, &gy, &mut tmp);
        for ((yv, t), &inside) in y.iter_mut().zip(&tmp).zip(op.support()) {
            *yv = if inside { *yv + t } else { 0.0 };
        }
        est = y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        x = y;
    }
    est.max(0.0).sqrt()
}

#[derive(Clone, Debug)]
pub struct TvResult {
    pub image: ImageGrid,
    /// Objective of the reported iterate after each iteration.
    pub objective: Vec<f64>,
    /// Objective of the raw primal-dual iterate.
    pub raw_objective: Vec<f64>,
}

/// `argmin 1/2 ||R mu - S||^2 + alpha TV(mu)` over images supported in the
/// disc, by Chambolle-Pock primal-dual iterations.
///
/// The reported iterate only moves when the primal-dual step lowers the
/// objective, so the recorded objective never increases. The inner
/// iterations run unchanged.
pub fn tv_reconstruct(s: &Sinogram, cfg: &ReconstructionConfig) -> Result<TvResult> {
    cfg.validate()?;
    let op = RadonOperator::with_default_sampling(cfg.n, &s.offsets, &s.angles)?;
    op.check(s)?;
    let n = cfg.n;
    let nn = n * n;
    let l = operator_norm(&op, 30) * 1.01;
    let (tau, sigma) = if l > 0.0 { (0.99 / l, 0.99 / l) } else { (1.0, 1.0) };
    let mut x = vec![0.0; nn];
    let mut rx = op.apply(&x).data;
    let mut rxbar = rx.clone();
    let mut xbar = x.clone();
    let mut y1 = Sinogram::zeros(s.offsets.clone(), s.angles.clone());
    let mut y2x = vec![0.0; nn];
    let mut y2y = vec![0.0; nn];
    let mut gx = vec![0.0; nn];
    let mut gy = vec![0.0; nn];
    let mut div = vec![0.0; nn];
    let mut best = x.clone();
    let mut best_f = 0.5 * s.data.norm_squared();
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut raw = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        y1.data = (&y1.data + (&rxbar - &s.data) * sigma) / (1.0 + sigma);
        gradient(n, &xbar, &mut gx, &mut gy);
        for k in 0..nn {
            let a = y2x[k] + sigma * gx[k];
            let b = y2y[k] + sigma * gy[k];
            let m = a.hypot(b);
            let shrink = if m > cfg.alpha { cfg.alpha / m } else { 1.0 };
            y2x[k] = a * shrink;
            y2y[k] = b * shrink;
        }
        let back = op.adjoint(&y1);
        gradient_adjoint(n, &y2x, &y2y, &mut div);
        for k in 0..nn {
            let prev = x[k];
            let next = if op.support()[k] { prev - tau * (back[k] + div[k]) } else { 0.0 };
            x[k] = next;
            xbar[k] = 2.0 * next - prev;
        }
        let rnext = op.apply(&x).data;
        rxbar = &rnext * 2.0 - &rx;
        rx = rnext;
        let f = 0.5 * (&rx - &s.data).norm_squared() + cfg.alpha * total_variation(n, &x);
        if !f.is_finite() {
            return Err(Error::NonFinite("TV objective".into()));
        }
        raw.push(f);
        if f <= best_f {
            best_f = f;
            best.copy_from_slice(&x);
        }
        history.push(best_f);
    }
    Ok(TvResult { image: ImageGrid::from_values(n, best)?, objective: history, raw_objective: raw })
}

/// `sigma = (1 - mu) / (1 + mu)` after clipping `mu` into `[-1 + eps, 1 - eps]`.
pub fn finalize_sigma(mu: &ImageGrid) -> Result<ImageGrid> {
    let n = mu.n();
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let v = mu.get(i, j).clamp(-1.0 + CLIP_EPS, 1.0 - CLIP_EPS);
            values.push(if mu.in_support(i, j) { mu_to_sigma(v)? } else { 0.0 });
        }
    }
    ImageGrid::from_values(n, values)
}
