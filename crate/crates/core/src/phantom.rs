//! Conductivity phantoms on the unit disc.
//!
//! A phantom is a background conductivity plus an ordered list of
//! inclusions; where inclusions overlap the later one wins. Besides pixel
//! rasterization the module carries an exact line-integral evaluator,
//! which serves as the Radon oracle for the reconstruction tests.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::sinogram::Sinogram;

pub const DEFAULT_CONTRAST_BOUND: f64 = 100.0;

pub fn sigma_to_mu(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("conductivity {s} is not positive")));
    }
    Ok((1.0 - s) / (1.0 + s))
}

pub fn mu_to_sigma(m: f64) -> Result<f64> {
    if !(m.abs() < 1.0) {
        return Err(Error::Domain(format!("|mu| = {} is not below 1", m.abs())));
    }
    Ok((1.0 - m) / (1.0 + m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    Disc {
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        #[serde(default)]
        angle: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
    /// Disc with a circular sector removed. The mouth opens towards
    /// `mouth_direction` and spans `2 * mouth_half_angle`.
    PacMan {
        center: [f64; 2],
        radius: f64,
        mouth_half_angle: f64,
        mouth_direction: f64,
    },
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Disc { center, radius } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                dx * dx + dy * dy < radius * radius
            }
            Shape::Ellipse { center, semi_axes, angle } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                let (s, c) = angle.sin_cos();
                let u = (c * dx + s * dy) / semi_axes[0];
                let v = (-s * dx + c * dy) / semi_axes[1];
                u * u + v * v < 1.0
            }
            Shape::Polygon { vertices } => {
                let mut inside = false;
                let n = vertices.len();
                for a in 0..n {
                    let [xa, ya] = vertices[a];
                    let [xb, yb] = vertices[(a + 1) % n];
                    if (ya > y) != (yb > y) && x < xa + (y - ya) * (xb - xa) / (yb - ya) {
                        inside = !inside;
                    }
                }
                inside
            }
            Shape::PacMan { center, radius, mouth_half_angle, mouth_direction } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                if dx * dx + dy * dy >= radius * radius {
                    return false;
                }
                wrap_angle(dy.atan2(dx) - mouth_direction).abs() >= *mouth_half_angle
            }
        }
    }

    /// Largest distance from the origin over the closed shape.
    fn max_radius(&self) -> f64 {
        match self {
            Shape::Disc { center, radius } | Shape::PacMan { center, radius, .. } => center[0].hypot(center[1]) + radius,
            Shape::Ellipse { center, semi_axes, angle } => {
                let (s, c) = angle.sin_cos();
                (0..4096)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / 4096.0;
                        let (u, v) = (semi_axes[0] * t.cos(), semi_axes[1] * t.sin());
                        (center[0] + c * u - s * v).hypot(center[1] + s * u + c * v)
                    })
                    .fold(0.0, f64::max)
            }
            Shape::Polygon { vertices } => vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidPhantom(m.to_string()));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Shape::Disc { center, radius } => {
                if !finite(&[center[0], center[1], *radius]) || *radius <= 0.0 {
                    return bad("disc radius must be positive and finite");
                }
            }
            Shape::Ellipse { center, semi_axes, angle } => {
                if !finite(&[center[0], center[1], semi_axes[0], semi_axes[1], *angle]) || semi_axes[0] <= 0.0 || semi_axes[1] <= 0.0 {
                    return bad("ellipse semi-axes must be positive and finite");
                }
            }
            Shape::Polygon { vertices } => {
                if vertices.len() < 3 || !vertices.iter().all(|v| finite(v)) {
                    return bad("polygon needs at least three finite vertices");
                }
                let n = vertices.len();
                let area: f64 = (0..n)
                    .map(|a| {
                        let b = (a + 1) % n;
                        vertices[a][0] * vertices[b][1] - vertices[b][0] * vertices[a][1]
                    })
                    .sum();
                if area.abs() < 1e-12 {
                    return bad("polygon has zero area");
                }
            }
            Shape::PacMan { center, radius, mouth_half_angle, mouth_direction } => {
                if !finite(&[center[0], center[1], *radius, *mouth_half_angle, *mouth_direction]) || *radius <= 0.0 {
                    return bad("pac-man radius must be positive and finite");
                }
                if !(*mouth_half_angle > 0.0 && *mouth_half_angle < PI / 2.0) {
                    return bad("pac-man mouth half-angle must lie in (0, pi/2)");
                }
            }
        }
        if self.max_radius() >= 1.0 {
            return bad("inclusion does not lie strictly inside the unit disc");
        }
        Ok(())
    }

    /// Parameter intervals `[u0, u1]` along the line `p(u) = s*d + u*d_perp`
    /// that lie inside the shape, `d = (cos phi, sin phi)`.
    fn chord_intervals(&self, s: f64, phi: f64) -> Vec<(f64, f64)> {
        let (sn, cs) = phi.sin_cos();
        let base = [s * cs, s * sn];
        let dir = [-sn, cs];
        match self {
            Shape::Disc { center, radius } => disc_interval(base, dir, *center, *radius).into_iter().collect(),
            Shape::Ellipse { center, semi_axes, angle } => {
                // Map into the frame where the ellipse is the unit circle.
                let (sa, ca) = angle.sin_cos();
                let to_local = |p: [f64; 2]| [(ca * p[0] + sa * p[1]) / semi_axes[0], (-sa * p[0] + ca * p[1]) / semi_axes[1]];
                let b = to_local([base[0] - center[0], base[1] - center[1]]);
                let d = to_local(dir);
                let a2 = d[0] * d[0] + d[1] * d[1];
                let b1 = b[0] * d[0] + b[1] * d[1];
                let c0 = b[0] * b[0] + b[1] * b[1] - 1.0;
                let disc = b1 * b1 - a2 * c0;
                if disc <= 0.0 {
                    vec![]
                } else {
                    let r = disc.sqrt();
                    vec![((-b1 - r) / a2, (-b1 + r) / a2)]
                }
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let mut hits = Vec::new();
                for a in 0..n {
                    let pa = vertices[a];
                    let pb = vertices[(a + 1) % n];
                    // Signed distance of each endpoint from the line.
                    let fa = pa[0] * cs + pa[1] * sn - s;
                    let fb = pb[0] * cs + pb[1] * sn - s;
                    if (fa > 0.0) != (fb > 0.0) {
                        let w = fa / (fa - fb);
                        let q = [pa[0] + w * (pb[0] - pa[0]), pa[1] + w * (pb[1] - pa[1])];
                        hits.push(q[0] * dir[0] + q[1] * dir[1]);
                    }
                }
                hits.sort_by(f64::total_cmp);
                hits.chunks_exact(2).map(|c| (c[0], c[1])).collect()
            }
            Shape::PacMan { center, radius, mouth_half_angle, mouth_direction } => {
                let Some((u0, u1)) = disc_interval(base, dir, *center, *radius) else {
                    return vec![];
                };
                // The mouth is the wedge {n1.(p-c) >= 0, n2.(p-c) >= 0}; convex
                // because the half-angle is below pi/2.
                let (lo, hi) = (mouth_direction - mouth_half_angle, mouth_direction + mouth_half_angle);
                let n1 = [-lo.sin(), lo.cos()];
                let n2 = [hi.sin(), -hi.cos()];
                let mut w0 = u0;
                let mut w1 = u1;
                for nrm in [n1, n2] {
                    let g0 = nrm[0] * (base[0] - center[0]) + nrm[1] * (base[1] - center[1]);
                    let g1 = nrm[0] * dir[0] + nrm[1] * dir[1];
                    if g1.abs() < 1e-300 {
                        if g0 < 0.0 {
                            w1 = w0 - 1.0;
                        }
                    } else {
                        let root = -g0 / g1;
                        if g1 > 0.0 {
                            w0 = w0.max(root);
                        } else {
                            w1 = w1.min(root);
                        }
                    }
                }
                if w1 <= w0 {
                    vec![(u0, u1)]
                } else {
                    [(u0, w0), (w1, u1)].into_iter().filter(|(a, b)| b > a).collect()
                }
            }
        }
    }
}

fn disc_interval(base: [f64; 2], dir: [f64; 2], center: [f64; 2], radius: f64) -> Option<(f64, f64)> {
    let b = [base[0] - center[0], base[1] - center[1]];
    let along = b[0] * dir[0] + b[1] * dir[1];
    let perp2 = b[0] * b[0] + b[1] * b[1] - along * along;
    let h2 = radius * radius - perp2;
    if h2 <= 0.0 {
        return None;
    }
    let h = h2.sqrt();
    Some((-along - h, -along + h))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub shape: Shape,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Sigma,
    Mu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    #[serde(default = "one")]
    pub background_sigma: f64,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
    #[serde(default = "default_bound")]
    pub contrast_bound: f64,
}

fn one() -> f64 {
    1.0
}

fn default_bound() -> f64 {
    DEFAULT_CONTRAST_BOUND
}

impl Phantom {
    pub fn homogeneous() -> Self {
        Self { background_sigma: 1.0, inclusions: vec![], contrast_bound: DEFAULT_CONTRAST_BOUND }
    }

    pub fn new(background_sigma: f64, inclusions: Vec<Inclusion>) -> Result<Self> {
        let p = Self { background_sigma, inclusions, contrast_bound: DEFAULT_CONTRAST_BOUND };
        p.validate()?;
        Ok(p)
    }

    /// Concentric disc of radius `rho` and conductivity `sigma` on a unit background.
    pub fn centered_disc(rho: f64, sigma: f64) -> Result<Self> {
        Self::new(1.0, vec![Inclusion { shape: Shape::Disc { center: [0.0, 0.0], radius: rho }, sigma }])
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.contrast_bound;
        if !(c >= 1.0) || !c.is_finite() {
            return Err(Error::InvalidPhantom(format!("contrast bound {c} must be finite and >= 1")));
        }
        let check = |s: f64, what: &str| {
            if !(s > 1.0 / c && s < c) && !(c == 1.0 && s == 1.0) {
                Err(Error::InvalidPhantom(format!("{what} conductivity {s} outside ({}, {c})", 1.0 / c)))
            } else {
                Ok(())
            }
        };
        check(self.background_sigma, "background")?;
        for inc in &self.inclusions {
            check(inc.sigma, "inclusion")?;
            inc.shape.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("phantom serializes")
    }

    pub fn sigma_at(&self, x: f64, y: f64) -> f64 {
        self.inclusions.iter().rev().find(|inc| inc.shape.contains(x, y)).map_or(self.background_sigma, |inc| inc.sigma)
    }

    /// Beltrami coefficient; zero outside the open unit disc.
    pub fn mu_at(&self, x: f64, y: f64) -> f64 {
        if x * x + y * y >= 1.0 {
            return 0.0;
        }
        let s = self.sigma_at(x, y);
        (1.0 - s) / (1.0 + s)
    }

    pub fn field_at(&self, field: Field, x: f64, y: f64) -> f64 {
        match field {
            Field::Sigma => self.sigma_at(x, y),
            Field::Mu => self.mu_at(x, y),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.inclusions.iter().all(|i| i.sigma == self.background_sigma)
    }

    /// Radial phantom `(rho, s)` if this is a single centred disc on a unit background.
    pub fn as_radial(&self) -> Option<(f64, f64)> {
        match self.inclusions.as_slice() {
            [Inclusion { shape: Shape::Disc { center, radius }, sigma }]
                if self.background_sigma == 1.0 && center[0] == 0.0 && center[1] == 0.0 =>
            {
                Some((*radius, *sigma))
            }
            _ => None,
        }
    }

    /// Exact line integral of mu along `{x : x . (cos phi, sin phi) = s}`.
    pub fn line_integral_mu(&self, s: f64, phi: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let half = (1.0 - s * s).sqrt();
        let mu_bg = (1.0 - self.background_sigma) / (1.0 + self.background_sigma);
        let mut segs: Vec<(f64, f64, f64)> = vec![(-half, half, mu_bg)];
        for inc in &self.inclusions {
            let mu = (1.0 - inc.sigma) / (1.0 + inc.sigma);
            for (a, b) in inc.shape.chord_intervals(s, phi) {
                let mut next = Vec::with_capacity(segs.len() + 2);
                for &(u0, u1, m) in &segs {
                    if u1 <= a || u0 >= b {
                        next.push((u0, u1, m));
                        continue;
                    }
                    if u0 < a {
                        next.push((u0, a, m));
                    }
                    if u1 > b {
                        next.push((b, u1, m));
                    }
                }
                next.push((a.max(-half), b.min(half), mu));
                segs = next;
            }
        }
        segs.iter().filter(|(a, b, _)| b > a).map(|(a, b, m)| (b - a) * m).sum()
    }

    /// Analytic parallel-beam sinogram of mu, standard angle convention.
    pub fn radon_exact(&self, offsets: &[f64], angles: &[f64]) -> Sinogram {
        let mut out = Sinogram::zeros(offsets.to_vec(), angles.to_vec());
        for (p, &phi) in angles.iter().enumerate() {
            for (i, &s) in offsets.iter().enumerate() {
                out.data[(i, p)] = self.line_integral_mu(s, phi);
            }
        }
        out
    }
}

pub fn rasterize(phantom: &Phantom, n: usize, field: Field) -> Result<ImageGrid> {
    rasterize_supersampled(phantom, n, field, 1)
}

/// Pixel values averaged over `ss x ss` sub-samples.
pub fn rasterize_supersampled(phantom: &Phantom, n: usize, field: Field, ss: usize) -> Result<ImageGrid> {
    if ss == 0 {
        return Err(Error::InvalidArgument("supersampling factor must be at least 1".into()));
    }
    let h = 2.0 / n as f64;
    ImageGrid::from_fn(n, |x, y| {
        if ss == 1 {
            return phantom.field_at(field, x, y);
        }
        let mut acc = 0.0;
        for a in 0..ss {
            for b in 0..ss {
                let sx = x + h * ((a as f64 + 0.5) / ss as f64 - 0.5);
                let sy = y + h * ((b as f64 + 0.5) / ss as f64 - 0.5);
                acc += match field {
                    Field::Mu => phantom.mu_at(sx, sy),
                    Field::Sigma if sx * sx + sy * sy < 1.0 => phantom.sigma_at(sx, sy),
                    Field::Sigma => phantom.background_sigma,
                };
            }
        }
        acc / (ss * ss) as f64
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPhantomParams {
    pub count: [usize; 2],
    pub radius: [f64; 2],
    pub sigma: [f64; 2],
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_margin() -> f64 {
    0.05
}

fn default_attempts() -> usize {
    1000
}

impl Default for RandomPhantomParams {
    fn default() -> Self {
        Self { count: [1, 3], radius: [0.1, 0.3], sigma: [0.5, 2.0], margin: 0.05, max_attempts: 1000 }
    }
}

/// Random non-overlapping discs, reproducible per seed.
pub fn random_phantom(seed: u64, params: &RandomPhantomParams) -> Result<Phantom> {
    let RandomPhantomParams { count, radius, sigma, margin, max_attempts } = params;
    if count[0] > count[1] || radius[0] > radius[1] || sigma[0] > sigma[1] {
        return Err(Error::InvalidArgument("random phantom ranges must be ordered".into()));
    }
    if !(radius[0] > 0.0) || radius[1] + margin >= 1.0 {
        return Err(Error::InvalidArgument("radius range must lie in (0, 1 - margin)".into()));
    }
    if !(sigma[0] > 1.0 / DEFAULT_CONTRAST_BOUND && sigma[1] < DEFAULT_CONTRAST_BOUND) {
        return Err(Error::InvalidArgument("sigma range outside the contrast bound".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(count[0]..=count[1]);
    let mut discs: Vec<([f64; 2], f64)> = Vec::with_capacity(n);
    let mut attempts = 0;
    while discs.len() < n {
        attempts += 1;
        if attempts > *max_attempts {
            return Err(Error::Placement { attempts: *max_attempts });
        }
        let r = if radius[0] == radius[1] { radius[0] } else { rng.random_range(radius[0]..radius[1]) };
        let reach = 1.0 - margin - r;
        if reach < 0.0 {
            continue;
        }
        // Uniform in the admissible disc of centres.
        let rad = reach * rng.random::<f64>().sqrt();
        let ang = rng.random_range(0.0..2.0 * PI);
        let c = [rad * ang.cos(), rad * ang.sin()];
        if discs.iter().all(|(c2, r2)| (c[0] - c2[0]).hypot(c[1] - c2[1]) > r + r2 + margin) {
            discs.push((c, r));
        }
    }
    let inclusions = discs
        .into_iter()
        .map(|(center, r)| {
            let s = if sigma[0] == sigma[1] { sigma[0] } else { rng.random_range(sigma[0]..sigma[1]) };
            Inclusion { shape: Shape::Disc { center, radius: r }, sigma: s }
        })
        .collect();
    Phantom::new(1.0, inclusions)
}
