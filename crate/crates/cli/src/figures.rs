//! PNG figures: the sinogram heatmap, virtual radiograph profiles and the
//! reconstructed conductivity.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::Context;
use image::{GrayImage, Luma, Rgb, RgbImage};
use imageproc::drawing::{draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;
use serde_json::{json, Value};
use vhpt_core::{ImageGrid, Sinogram};

use crate::pipeline::{read_image, read_sinogram, Bundle, SHARP, SIGMA};

const PLOT_W: u32 = 480;
const PLOT_H: u32 = 320;
const MARGIN: u32 = 24;
/// Pixels per sinogram sample in the heatmap.
const CELL: u32 = 3;

/// `(min, max)` of finite values, `(0, 0)` when there are none.
pub fn value_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.into_iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

fn unit(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Blue-white-red ramp over `[0, 1]`.
fn diverging(u: f64) -> Rgb<u8> {
    let (r, g, b) = if u < 0.5 {
        let w = u / 0.5;
        (w, w, 1.0)
    } else {
        let w = (1.0 - u) / 0.5;
        (1.0, w, w)
    };
    Rgb([(255.0 * r).round() as u8, (255.0 * g).round() as u8, (255.0 * b).round() as u8])
}

/// Heatmap with offsets running down and angles across. The colour scale is
/// symmetric about zero so signs read consistently across figures.
pub fn sinogram_heatmap(s: &Sinogram) -> (RgbImage, (f64, f64)) {
    let (lo, hi) = value_range(s.data.iter().copied());
    let m = lo.abs().max(hi.abs());
    let (rows, cols) = s.data.shape();
    let img = RgbImage::from_fn(cols as u32 * CELL, rows as u32 * CELL, |x, y| {
        diverging(unit(s.data[((y / CELL) as usize, (x / CELL) as usize)], -m, m))
    });
    (img, (-m, m))
}

/// 8-bit grey image scaled from `min` to `max`.
pub fn image_gray(img: &ImageGrid) -> (GrayImage, (f64, f64)) {
    let (lo, hi) = value_range(img.values().iter().copied());
    let n = img.n() as u32;
    let out = GrayImage::from_fn(n, n, |x, y| Luma([(255.0 * unit(img.get(y as usize, x as usize), lo, hi)).round() as u8]));
    (out, (lo, hi))
}

fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// The column nearest to `angle` and its values.
pub fn profile(s: &Sinogram, angle: f64) -> (usize, Vec<f64>) {
    let p =
        (0..s.angles.len()).min_by(|&i, &j| angle_distance(s.angles[i], angle).total_cmp(&angle_distance(s.angles[j], angle))).unwrap_or(0);
    (p, s.column(p).to_vec())
}

/// Line plot of one radiograph. The zero line is drawn in grey.
pub fn profile_plot(offsets: &[f64], values: &[f64]) -> (RgbImage, (f64, f64)) {
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));
    let (mut lo, mut hi) = value_range(values.iter().copied());
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    let (x0, x1) = (MARGIN as f32, (PLOT_W - MARGIN) as f32);
    let (y0, y1) = (MARGIN as f32, (PLOT_H - MARGIN) as f32);
    let (s0, s1) = (offsets.first().copied().unwrap_or(-1.0), offsets.last().copied().unwrap_or(1.0));
    let px = |s: f64| x0 + (x1 - x0) * unit(s, s0, s1) as f32;
    let py = |v: f64| y1 - (y1 - y0) * unit(v, lo, hi) as f32;
    draw_hollow_rect_mut(
        &mut img,
        Rect::at(MARGIN as i32, MARGIN as i32).of_size(PLOT_W - 2 * MARGIN, PLOT_H - 2 * MARGIN),
        Rgb([0, 0, 0]),
    );
    draw_line_segment_mut(&mut img, (x0, py(0.0)), (x1, py(0.0)), Rgb([170, 170, 170]));
    for i in 1..values.len().min(offsets.len()) {
        let a = (px(offsets[i - 1]), py(values[i - 1]));
        let b = (px(offsets[i]), py(values[i]));
        draw_line_segment_mut(&mut img, a, b, Rgb([200, 30, 30]));
    }
    (img, (lo, hi))
}

/// Writes `sinogram.png`, one `profile_<k>.png` per angle (radians,
/// parallel-beam convention) and `sigma.png`, plus `figures.json` with the
/// value range behind every colour or axis scale.
pub fn emit_figures(bundle: &Bundle, angles: &[f64], out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let s = read_sinogram(bundle, SHARP)?;
    let sigma = read_image(bundle, SIGMA)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut files = Vec::new();
    let mut save = |name: String, write: &dyn Fn(&Path) -> image::ImageResult<()>| -> anyhow::Result<()> {
        let path = out.join(&name);
        write(&path).with_context(|| format!("writing {name}"))?;
        files.push(path);
        Ok(())
    };
    let (heat, heat_range) = sinogram_heatmap(&s);
    save("sinogram.png".into(), &|p| heat.save(p))?;
    let mut profiles = Vec::new();
    for (k, &angle) in angles.iter().enumerate() {
        let (column, values) = profile(&s, angle);
        let (plot, range) = profile_plot(&s.offsets, &values);
        let name = format!("profile_{k}.png");
        save(name.clone(), &|p| plot.save(p))?;
        profiles.push(json!({ "file": name, "angle": s.angles[column], "column": column, "range": [range.0, range.1] }));
    }
    let (gray, sigma_range) = image_gray(&sigma);
    save("sigma.png".into(), &|p| gray.save(p))?;
    let meta: Value = json!({
        "sinogram": { "file": "sinogram.png", "range": [heat_range.0, heat_range.1] },
        "profiles": profiles,
        "sigma": { "file": "sigma.png", "range": [sigma_range.0, sigma_range.1] },
    });
    let path = out.join("figures.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    files.push(path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vhpt_core::sinogram::{angle_grid, centered_grid};

    #[test]
    fn zero_sinogram_gives_flat_profile() {
        let s = Sinogram::zeros(centered_grid(1.0, 40), angle_grid(8));
        let (p, v) = profile(&s, 0.1);
        assert_eq!(p, 0);
        assert!(v.iter().all(|x| *x == 0.0));
        let (img, range) = profile_plot(&s.offsets, &v);
        assert_eq!(range, (0.0, 0.0));
        // A flat profile draws a single horizontal line.
        let red: Vec<u32> = img.enumerate_pixels().filter(|(_, _, c)| c.0 == [200, 30, 30]).map(|(_, y, _)| y).collect();
        assert!(!red.is_empty() && red.iter().all(|&y| y == red[0]));
    }

    #[test]
    fn nearest_column_wraps() {
        let s = Sinogram::zeros(centered_grid(1.0, 4), angle_grid(8));
        assert_eq!(profile(&s, 2.0 * PI - 0.1).0, 0);
        assert_eq!(profile(&s, PI / 4.0 + 0.1).0, 1);
    }

    #[test]
    fn heatmap_scale_is_symmetric() {
        let mut s = Sinogram::zeros(centered_grid(1.0, 4), angle_grid(2));
        s.data[(0, 0)] = -2.0;
        s.data[(1, 1)] = 1.0;
        let (img, range) = sinogram_heatmap(&s);
        assert_eq!(range, (-2.0, 2.0));
        assert_eq!(img.dimensions(), (2 * CELL, 4 * CELL));
        assert_eq!(*img.get_pixel(0, 0), Rgb([0, 0, 255]));
        assert_eq!(*img.get_pixel(0, 3 * CELL), Rgb([255, 255, 255]));
    }
}
