//! Training pairs for an external deblurrer: a blurred single-scattering
//! sinogram and the matching Radon sinogram, both on CGO angles.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use vhpt_core::phantom::{random_phantom, RandomPhantomParams};
use vhpt_core::pseudotime::single_scattering_oracle;
use vhpt_core::sinogram::{angle_grid, centered_grid};
use vhpt_core::vht;
use vhpt_core::{Phantom, Sinogram};

use crate::pipeline::sha256_file;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub count: usize,
    /// Fraction of pairs held out for validation, taken from the end.
    pub validation_fraction: f64,
    pub a: f64,
    pub n_t: usize,
    pub t_max: f64,
    pub m_phi: usize,
    pub phantoms: RandomPhantomParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 7000,
            validation_fraction: 0.2,
            a: 0.05,
            n_t: 200,
            t_max: 2.0,
            m_phi: 100,
            phantoms: RandomPhantomParams::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validation_count(&self) -> usize {
        (self.count as f64 * self.validation_fraction).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub id: usize,
    pub split: String,
    pub seed: u64,
    pub input: String,
    pub target: String,
    pub input_sha256: String,
    pub target_sha256: String,
    /// `[min, max]` before normalization to `[0, 1]`.
    pub input_range: [f64; 2],
    pub target_range: [f64; 2],
    pub phantom: Phantom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub config: DatasetConfig,
    pub train: usize,
    pub validation: usize,
    pub pairs: Vec<PairEntry>,
}

pub const INDEX: &str = "index.json";

/// Min-max scales `s` into `[0, 1]`; a constant sinogram maps to zeros.
pub fn normalize(s: &Sinogram) -> (Sinogram, [f64; 2]) {
    let lo = s.data.min();
    let hi = s.data.max();
    let mut out = s.clone();
    let w = hi - lo;
    out.data.apply(|v| *v = if w > 0.0 { (*v - lo) / w } else { 0.0 });
    (out, [lo, hi])
}

pub fn denormalize(s: &Sinogram, range: [f64; 2]) -> Sinogram {
    let mut out = s.clone();
    out.data.apply(|v| *v = range[0] + *v * (range[1] - range[0]));
    out
}

/// Blurred and sharp sinograms of one phantom on the dataset grid.
pub fn make_pair(phantom: &Phantom, cfg: &DatasetConfig) -> vhpt_core::Result<(Sinogram, Sinogram)> {
    let times = centered_grid(cfg.t_max, cfg.n_t);
    let phis = angle_grid(cfg.m_phi);
    let (_, blurred) = single_scattering_oracle(phantom, cfg.a, &times, &phis)?;
    // Column phi holds the parallel-beam projection at pi - phi.
    let radon_angles: Vec<f64> = phis.iter().map(|p| PI - p).collect();
    let mut sharp = phantom.radon_exact(&blurred.offsets, &radon_angles);
    sharp.angles = phis;
    Ok((blurred, sharp))
}

fn write_normalized(path: &Path, s: &Sinogram, role: &str) -> anyhow::Result<[f64; 2]> {
    let (n, range) = normalize(s);
    let mut m = n.to_vht();
    if let serde_json::Value::Object(meta) = &mut m.metadata {
        meta.insert("role".into(), json!(role));
        meta.insert("range".into(), json!(range));
        meta.insert("angle_convention".into(), json!("cgo"));
    }
    vht::write(path, &m).with_context(|| format!("writing {}", path.display()))?;
    Ok(range)
}

/// Writes `count` pairs and `index.json` into `out`. Pair `i` uses the
/// `i`-th draw of a generator seeded with `cfg.seed`, so the set is a
/// function of the seed alone.
pub fn generate_dataset(cfg: &DatasetConfig, out: &Path) -> anyhow::Result<DatasetIndex> {
    anyhow::ensure!(cfg.n_t >= 2 && cfg.n_t.is_multiple_of(2), "n_t must be even and at least 2");
    anyhow::ensure!(cfg.m_phi >= 2 && cfg.m_phi.is_multiple_of(2), "m_phi must be even");
    anyhow::ensure!((0.0..=1.0).contains(&cfg.validation_fraction), "validation fraction must lie in [0, 1]");
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let validation = cfg.validation_count();
    let train = cfg.count - validation;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::with_capacity(cfg.count);
    for id in 0..cfg.count {
        let seed: u64 = rng.random();
        let phantom = random_phantom(seed, &cfg.phantoms)?;
        let (blurred, sharp) = make_pair(&phantom, cfg)?;
        let input = format!("pair_{id:05}_input.vht");
        let target = format!("pair_{id:05}_target.vht");
        let input_path: PathBuf = out.join(&input);
        let target_path: PathBuf = out.join(&target);
        let input_range = write_normalized(&input_path, &blurred, "input")?;
        let target_range = write_normalized(&target_path, &sharp, "target")?;
        pairs.push(PairEntry {
            id,
            split: if id < train { "train" } else { "validation" }.into(),
            seed,
            input_sha256: sha256_file(&input_path)?,
            target_sha256: sha256_file(&target_path)?,
            input,
            target,
            input_range,
            target_range,
            phantom,
        });
    }
    let index = DatasetIndex { config: cfg.clone(), train, validation, pairs };
    std::fs::write(out.join(INDEX), serde_json::to_string_pretty(&index)?)?;
    Ok(index)
}
