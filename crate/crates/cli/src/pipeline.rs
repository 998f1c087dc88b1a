//! Stage-by-stage execution over a bundle directory.
//!
//! Each stage reads its inputs from the bundle and writes its outputs back,
//! so a stage re-run from persisted files reproduces the pipeline exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use vhpt_core::cgo::{scattering_trace, solve_bie, BieOperators, Sign};
use vhpt_core::deblur::{deconvolve_columns, external_deblur, Endpoint};
use vhpt_core::dnmap::{assemble_dn_calibrated, assemble_dn_relative, condition_number, trig_patterns, CurrentPatterns, DnMatrix};
use vhpt_core::forward::{add_noise, solve_cem, solve_continuum_nd};
use vhpt_core::mesh::Mesh;
use vhpt_core::pseudotime::{calibrate_scale, phase_integrate, single_scattering_oracle, to_radon_angles, windowed_ft};
use vhpt_core::recon::{fbp, finalize_sigma, tv_reconstruct};
use vhpt_core::sinogram::centered_grid;
use vhpt_core::vht::{self, VhtMatrix};
use vhpt_core::{ComplexSinogram, ImageGrid, Phantom, Sinogram};

use crate::config::{DeblurConfig, ForwardModel, PhantomSource, PipelineConfig, ReconMethod};

pub const PHANTOM: &str = "phantom.json";
pub const CONFIG: &str = "config.json";
pub const MANIFEST: &str = "manifest.json";
pub const CURRENTS: &str = "currents.vht";
pub const V_TRG: &str = "v_trg.vht";
pub const V_CLB: &str = "v_clb.vht";
pub const V_1CEM: &str = "v_1cem.vht";
pub const ND_TRG: &str = "nd_trg.vht";
pub const ND_ONE: &str = "nd_one.vht";
pub const DN: &str = "dn.vht";
pub const OMEGA_PLUS: &str = "omega_plus.vht";
pub const OMEGA_MINUS: &str = "omega_minus.vht";
/// `T~_odd(tau, phi)`.
pub const SCATTERING: &str = "t_tilde_odd.vht";
/// `T_odd(t, phi)`.
pub const PSEUDOTIME: &str = "t_odd.vht";
/// Blurred sinogram `R_odd`, CGO angles.
pub const R_ODD: &str = "r_odd.vht";
/// Deblurred sinogram, parallel-beam angles.
pub const SHARP: &str = "sharp.vht";
pub const MU: &str = "mu.vht";
pub const SIGMA: &str = "sigma.vht";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Phantom,
    Forward,
    Calibrate,
    Cgo,
    Sinogram,
    Deblur,
    Recon,
    Manifest,
}

impl Stage {
    pub const CHAIN: [Stage; 7] =
        [Stage::Phantom, Stage::Forward, Stage::Calibrate, Stage::Cgo, Stage::Sinogram, Stage::Deblur, Stage::Recon];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Phantom => "phantom",
            Stage::Forward => "forward",
            Stage::Calibrate => "calibrate",
            Stage::Cgo => "cgo",
            Stage::Sinogram => "sinogram",
            Stage::Deblur => "deblur",
            Stage::Recon => "recon",
            Stage::Manifest => "manifest",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source:#}")]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

/// A directory holding the intermediates of one run.
#[derive(Clone, Debug)]
pub struct Bundle {
    dir: PathBuf,
}

impl Bundle {
    pub fn create(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_vht(&self, name: &str, m: &VhtMatrix) -> anyhow::Result<()> {
        vht::write(self.path(name), m).with_context(|| format!("writing {name}"))
    }

    pub fn read_vht(&self, name: &str) -> anyhow::Result<VhtMatrix> {
        let path = self.path(name);
        if !path.exists() {
            return Err(anyhow!("missing intermediate `{name}` in {}", self.dir.display()));
        }
        vht::read(&path).with_context(|| format!("reading {name}"))
    }

    pub fn write_text(&self, name: &str, text: &str) -> anyhow::Result<()> {
        std::fs::write(self.path(name), text).with_context(|| format!("writing {name}"))
    }

    pub fn read_text(&self, name: &str) -> anyhow::Result<String> {
        let path = self.path(name);
        if !path.exists() {
            return Err(anyhow!("missing intermediate `{name}` in {}", self.dir.display()));
        }
        std::fs::read_to_string(&path).with_context(|| format!("reading {name}"))
    }

    pub fn phantom(&self) -> anyhow::Result<Phantom> {
        Ok(Phantom::from_json(&self.read_text(PHANTOM)?)?)
    }

    /// SHA-256 of every regular file except the manifest, by file name.
    pub fn hashes(&self) -> anyhow::Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST || !entry.file_type()?.is_file() {
                continue;
            }
            out.insert(name, sha256_file(&entry.path())?);
        }
        Ok(out)
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn real(m: &DMatrix<f64>, meta: Value) -> VhtMatrix {
    VhtMatrix::from_real_matrix(m).with_metadata(meta)
}

fn noise_seeds(seed: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.random(), rng.random())
}

fn mesh(cfg: &PipelineConfig) -> anyhow::Result<Mesh> {
    Ok(Mesh::disc(cfg.forward.mesh.rings, cfg.forward.mesh.boundary_nodes)?)
}

/// Resolves the phantom and records it together with the configuration.
pub fn stage_phantom(cfg: &PipelineConfig, b: &Bundle) -> anyhow::Result<Value> {
    let phantom = cfg.phantom.load()?;
    b.write_text(PHANTOM, &phantom.to_json())?;
    let mut stored = cfg.clone();
    stored.output = PathBuf::from(".");
    if let PhantomSource::Path(_) = stored.phantom {
        stored.phantom = PhantomSource::Inline(phantom.clone());
    }
    b.write_text(CONFIG, &stored.to_json())?;
    Ok(json!({ "inclusions": phantom.inclusions.len(), "homogeneous": phantom.is_homogeneous() }))
}

pub fn stage_forward(cfg: &PipelineConfig, b: &Bundle) -> anyhow::Result<Value> {
    let phantom = b.phantom()?;
    let mesh = mesh(cfg)?;
    let f = &cfg.forward;
    let (seed_trg, seed_clb) = noise_seeds(cfg.seed);
    match f.model {
        ForwardModel::Cem => {
            let patterns = trig_patterns(f.electrodes.count, f.amplitude)?;
            let tank = Phantom::new(cfg.calibration.tank_sigma, vec![])?;
            let v_trg = solve_cem(&phantom, &f.electrodes, &patterns.matrix, &mesh)?;
            let v_1cem = solve_cem(&Phantom::homogeneous(), &f.electrodes, &patterns.matrix, &mesh)?;
            let v_clb =
                if tank.background_sigma == 1.0 { v_1cem.clone() } else { solve_cem(&tank, &f.electrodes, &patterns.matrix, &mesh)? };
            let v_trg = add_noise(&v_trg, f.noise, seed_trg)?;
            let v_clb = add_noise(&v_clb, f.noise, seed_clb)?;
            b.write_vht(CURRENTS, &real(&patterns.matrix, json!({ "kind": "currents", "amplitude": f.amplitude })))?;
            b.write_vht(V_TRG, &real(&v_trg, json!({ "kind": "voltages", "target": "phantom", "noise": f.noise })))?;
            b.write_vht(V_CLB, &real(&v_clb, json!({ "kind": "voltages", "target": "tank", "noise": f.noise })))?;
            b.write_vht(V_1CEM, &real(&v_1cem, json!({ "kind": "voltages", "target": "unit-conductivity model" })))?;
            Ok(json!({ "model": "cem", "electrodes": f.electrodes.count, "patterns": patterns.matrix.ncols() }))
        }
        ForwardModel::Continuum => {
            let nd_trg = solve_continuum_nd(&phantom, f.order, &mesh)?;
            let nd_one = solve_continuum_nd(&Phantom::homogeneous(), f.order, &mesh)?;
            let nd_trg = add_noise(&nd_trg, f.noise, seed_trg)?;
            b.write_vht(ND_TRG, &real(&nd_trg, json!({ "kind": "nd-matrix", "order": f.order, "noise": f.noise })))?;
            b.write_vht(ND_ONE, &real(&nd_one, json!({ "kind": "nd-matrix", "order": f.order })))?;
            Ok(json!({ "model": "continuum", "order": f.order }))
        }
    }
}

pub fn stage_calibrate(cfg: &PipelineConfig, b: &Bundle) -> anyhow::Result<Value> {
    let dn = match cfg.forward.model {
        ForwardModel::Cem => {
            let currents = b.read_vht(CURRENTS)?;
            let amplitude = currents.metadata["amplitude"].as_f64().ok_or_else(|| anyhow!("{CURRENTS} lacks the amplitude"))?;
            let patterns = CurrentPatterns { matrix: currents.to_real_matrix()?, amplitude };
            let v_trg = b.read_vht(V_TRG)?.to_real_matrix()?;
            let v_clb = b.read_vht(V_CLB)?.to_real_matrix()?;
            let v_1cem = b.read_vht(V_1CEM)?.to_real_matrix()?;
            assemble_dn_calibrated(&v_trg, &v_clb, &v_1cem, &patterns, cfg.calibration.form, cfg.calibration.condition_cap)?
        }
        ForwardModel::Continuum => {
            let nd = b.read_vht(ND_TRG)?.to_real_matrix()?;
            let one = b.read_vht(ND_ONE)?.to_real_matrix()?;
            assemble_dn_relative(&nd, &one)?
        }
    };
    b.write_vht(DN, &dn.to_vht())?;
    let deviation = (&dn.lambda - DnMatrix::identity_conductivity(dn.order()).lambda).norm();
    Ok(json!({ "order": dn.order(), "condition": condition_number(&dn.lambda), "deviation_from_unit": deviation }))
}

pub fn stage_cgo(cfg: &PipelineConfig, b: &Bundle) -> anyhow::Result<Value> {
    let dn = DnMatrix::from_vht(&b.read_vht(DN)?)?;
    let ops = BieOperators::from_dn(&dn, cfg.cgo.m_theta)?;
    let traces = solve_bie(&ops, &cfg.cgo)?;
    b.write_vht(OMEGA_PLUS, &traces.to_vht(Sign::Plus))?;
    b.write_vht(OMEGA_MINUS, &traces.to_vht(Sign::Minus))?;
    let grid = scattering_trace(&traces);
    b.write_vht(SCATTERING, &grid.to_vht())?;
    Ok(json!({
        "max_residual": traces.max_residual(),
        "residual_warnings": traces.warnings(cfg.cgo.residual_tol).len(),
        "scattering_norm": grid.norm(),
    }))
}

pub fn stage_sinogram(cfg: &PipelineConfig, b: &Bundle) -> anyhow::Result<Value> {
    let p = &cfg.pseudotime;
    let grid = ComplexSinogram::from_vht(&b.read_vht(SCATTERING)?)?;
    let times = centered_grid(p.t_max, p.n_t);
    let t = windowed_ft(&grid, p.a, &times)?;
    b.write_vht(PSEUDOTIME, &t.to_vht())?;
    let mut s = phase_integrate(&t, p.convention, p.scale);
    let phantom = b.phantom()?;
    let mut fitted = Value::Null;
    if p.calibrate && !phantom.is_homogeneous() && s.norm() > 0.0 {
        let (_, r1) = single_scattering_oracle(&phantom, p.a, &times, &s.angles)?;
        fitted = json!(p.scale * calibrate_scale(&s, &r1)?);
    }
    if let Value::Object(m) = &mut s.metadata {
        m.insert("calibrated_scale".into(), fitted.clone());
    }
    b.write_vht(R_ODD, &s.to_vht())?;
    Ok(json!({
        "scale": p.scale,
        "calibrated_scale": fitted,
        "imaginary_ratio": s.metadata["imaginary_ratio"],
        "imaginary_warning": s.metadata["imaginary_warning"],
    }))
}

pub fn stage_deblur(cfg: &PipelineConfig, b: &Bundle) -> anyhow::Result<Value> {
    let s = Sinogram::from_vht(&b.read_vht(R_ODD)?)?;
    let (sharp, method) = match &cfg.deblur {
        DeblurConfig::Tikhonov { lambda } => (deconvolve_columns(&s, cfg.pseudotime.a, *lambda)?, "tikhonov"),
        DeblurConfig::External { program, args } => {
            (external_deblur(&s, &Endpoint::Command { program: program.clone(), args: args.clone() })?, "external")
        }
        DeblurConfig::Watch { dir, timeout_secs } => {
            let endpoint = Endpoint::Directory { path: dir.clone(), timeout: Duration::from_secs_f64(*timeout_secs) };
            (external_deblur(&s, &endpoint)?, "watch")
        }
    };
    let sharp = to_radon_angles(&sharp)?;
    b.write_vht(SHARP, &sharp.to_vht())?;
    Ok(json!({ "method": method, "norm": sharp.norm() }))
}

pub fn stage_recon(cfg: &PipelineConfig, b: &Bundle) -> anyhow::Result<Value> {
    let s = Sinogram::from_vht(&b.read_vht(SHARP)?)?;
    let rc = cfg.recon.reconstruction();
    let (mu, report) = match cfg.recon.method {
        ReconMethod::Fbp => (fbp(&s, &rc)?, json!({ "method": "fbp" })),
        ReconMethod::Tv => {
            let r = tv_reconstruct(&s, &rc)?;
            let first = r.objective.first().copied();
            let last = r.objective.last().copied();
            (r.image, json!({ "method": "tv", "alpha": rc.alpha, "iterations": rc.iterations, "objective": [first, last] }))
        }
    };
    let sigma = finalize_sigma(&mu)?;
    b.write_vht(MU, &mu.to_vht())?;
    b.write_vht(SIGMA, &sigma.to_vht())?;
    Ok(report)
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig, b: &Bundle) -> Result<Value, StageError> {
    let result = match stage {
        Stage::Config => cfg.validate().map(|_| Value::Null).map_err(anyhow::Error::from),
        Stage::Phantom => stage_phantom(cfg, b),
        Stage::Forward => stage_forward(cfg, b),
        Stage::Calibrate => stage_calibrate(cfg, b),
        Stage::Cgo => stage_cgo(cfg, b),
        Stage::Sinogram => stage_sinogram(cfg, b),
        Stage::Deblur => stage_deblur(cfg, b),
        Stage::Recon => stage_recon(cfg, b),
        Stage::Manifest => Ok(Value::Null),
    };
    result.map_err(|source| StageError { stage, source })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum Status {
    Complete,
    Failed { stage: Stage, error: String },
}

/// Summary of a run. Contains no timestamps, so reruns of the same
/// configuration produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: Status,
    pub files: BTreeMap<String, String>,
    pub stages: BTreeMap<String, Value>,
    pub max_residual: Option<f64>,
    pub scale: Option<f64>,
    pub calibrated_scale: Option<f64>,
    pub imaginary_ratio: Option<f64>,
}

impl Manifest {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST)).with_context(|| format!("reading {MANIFEST}"))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs every stage into `cfg.output`. On failure the manifest is still
/// written, naming the failed stage, and the partial outputs stay on disk.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest, StageError> {
    run_stage(Stage::Config, cfg, &Bundle { dir: cfg.output.clone() })?;
    let b = Bundle::create(&cfg.output).map_err(|e| StageError { stage: Stage::Config, source: e.into() })?;
    let mut stages = BTreeMap::new();
    let mut failure = None;
    for stage in Stage::CHAIN {
        match run_stage(stage, cfg, &b) {
            Ok(report) => {
                stages.insert(stage.name().to_string(), report);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let status = match &failure {
        None => Status::Complete,
        Some(e) => Status::Failed { stage: e.stage, error: format!("{:#}", e.source) },
    };
    let get = |stage: &str, key: &str| stages.get(stage).and_then(|r| r[key].as_f64());
    let manifest = Manifest {
        status,
        files: b.hashes().unwrap_or_default(),
        max_residual: get("cgo", "max_residual"),
        scale: get("sinogram", "scale"),
        calibrated_scale: get("sinogram", "calibrated_scale"),
        imaginary_ratio: get("sinogram", "imaginary_ratio"),
        stages,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let written = b.write_text(MANIFEST, &text);
    match (failure, written) {
        (Some(e), _) => Err(e),
        (None, Err(e)) => Err(StageError { stage: Stage::Manifest, source: e }),
        (None, Ok(())) => Ok(manifest),
    }
}

/// Reads a persisted image intermediate.
pub fn read_image(b: &Bundle, name: &str) -> anyhow::Result<ImageGrid> {
    Ok(ImageGrid::from_vht(&b.read_vht(name)?)?)
}

/// Reads a persisted real sinogram intermediate.
pub fn read_sinogram(b: &Bundle, name: &str) -> anyhow::Result<Sinogram> {
    Ok(Sinogram::from_vht(&b.read_vht(name)?)?)
}
