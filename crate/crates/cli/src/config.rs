//! Pipeline configuration. Every field has a default, so a config file
//! only needs the knobs it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vhpt_core::cgo::CgoConfig;
use vhpt_core::deblur::DEFAULT_LAMBDA;
use vhpt_core::dnmap::CalibrationForm;
use vhpt_core::forward::ElectrodeLayout;
use vhpt_core::mesh::{DEFAULT_BOUNDARY_NODES, DEFAULT_RINGS};
use vhpt_core::pseudotime::{PhaseConvention, ODD_SCALE};
use vhpt_core::recon::{RampFilter, ReconstructionConfig, DEFAULT_ITERATIONS};
use vhpt_core::{Inclusion, Phantom, Shape};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {reason}")]
    Range { field: &'static str, reason: String },
    #[error(transparent)]
    Core(#[from] vhpt_core::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

fn range(field: &'static str, ok: bool, reason: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range { field, reason: reason.into() })
    }
}

/// A phantom file or an inline phantom document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhantomSource {
    Path(PathBuf),
    Inline(Phantom),
}

impl PhantomSource {
    pub fn load(&self) -> Result<Phantom, ConfigError> {
        match self {
            PhantomSource::Inline(p) => {
                p.validate()?;
                Ok(p.clone())
            }
            PhantomSource::Path(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                Ok(Phantom::from_json(&text)?)
            }
        }
    }
}

/// Two discs of contrast `c`, resistive on the right and conductive on the left.
pub fn two_disc_phantom(c: f64) -> Result<Phantom, vhpt_core::Error> {
    Phantom::new(
        1.0,
        vec![
            Inclusion { shape: Shape::Disc { center: [0.35, 0.2], radius: 0.25 }, sigma: 1.0 / c },
            Inclusion { shape: Shape::Disc { center: [-0.35, -0.15], radius: 0.22 }, sigma: c },
        ],
    )
}

impl Default for PhantomSource {
    fn default() -> Self {
        PhantomSource::Inline(two_disc_phantom(1.1).expect("default phantom is valid"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardModel {
    /// Electrode voltages from the complete electrode model, then calibration.
    #[default]
    Cem,
    /// Continuum ND matrices of order `N`, relative to the unit disc.
    Continuum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub rings: usize,
    pub boundary_nodes: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { rings: DEFAULT_RINGS, boundary_nodes: DEFAULT_BOUNDARY_NODES }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    pub model: ForwardModel,
    pub electrodes: ElectrodeLayout,
    /// Current amplitude `I0` of the trigonometric patterns.
    pub amplitude: f64,
    /// Relative noise level on the measured voltages.
    pub noise: f64,
    /// Trigonometric order `N` of the continuum model.
    pub order: usize,
    pub mesh: MeshConfig,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            model: ForwardModel::Cem,
            electrodes: ElectrodeLayout::default(),
            amplitude: 1.0,
            noise: 0.0,
            order: 15,
            mesh: MeshConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub form: CalibrationForm,
    pub condition_cap: f64,
    /// Conductivity of the saline tank used as the calibration target.
    pub tank_sigma: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { form: CalibrationForm::NdSide, condition_cap: 1e10, tank_sigma: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudotimeConfig {
    /// Gaussian window `e^{-a tau^2}`.
    pub a: f64,
    /// Number of pseudo-time samples `N_t`; the sinogram has as many offsets.
    pub n_t: usize,
    /// The pseudo-time grid covers `[-t_max, t_max]`.
    pub t_max: f64,
    pub convention: PhaseConvention,
    pub scale: f64,
    /// Fit the scale against the single-scattering oracle and record it.
    pub calibrate: bool,
}

impl Default for PseudotimeConfig {
    fn default() -> Self {
        Self { a: 0.05, n_t: 200, t_max: 2.0, convention: PhaseConvention::Conjugate, scale: ODD_SCALE, calibrate: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DeblurConfig {
    Tikhonov {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// Runs `program args.. --in <file> --out <file>`.
    External {
        program: PathBuf,
        #[serde(default)]
        args: Vec<String>,
    },
    /// Exchanges files through a directory watched by another process.
    Watch {
        dir: PathBuf,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_timeout() -> f64 {
    60.0
}

impl Default for DeblurConfig {
    fn default() -> Self {
        DeblurConfig::Tikhonov { lambda: DEFAULT_LAMBDA }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconMethod {
    Fbp,
    #[default]
    Tv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub method: ReconMethod,
    pub alpha: f64,
    pub iterations: usize,
    pub n: usize,
    pub filter: RampFilter,
}

impl Default for ReconConfig {
    fn default() -> Self {
        let r = ReconstructionConfig::default();
        Self { method: ReconMethod::Tv, alpha: r.alpha, iterations: DEFAULT_ITERATIONS, n: r.n, filter: r.filter }
    }
}

impl ReconConfig {
    pub fn reconstruction(&self) -> ReconstructionConfig {
        ReconstructionConfig { alpha: self.alpha, iterations: self.iterations, n: self.n, filter: self.filter }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub phantom: PhantomSource,
    pub forward: ForwardConfig,
    pub calibration: CalibrationConfig,
    pub cgo: CgoConfig,
    pub pseudotime: PseudotimeConfig,
    pub deblur: DeblurConfig,
    pub recon: ReconConfig,
    /// Seeds the measurement noise.
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomSource::default(),
            forward: ForwardConfig::default(),
            calibration: CalibrationConfig::default(),
            cgo: CgoConfig::default(),
            pseudotime: PseudotimeConfig::default(),
            deblur: DeblurConfig::default(),
            recon: ReconConfig::default(),
            seed: 0,
            output: PathBuf::from("vhpt-out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Order of the DN matrix handed to the CGO stage.
    pub fn dn_order(&self) -> usize {
        match self.forward.model {
            ForwardModel::Cem => (self.forward.electrodes.count - 2) / 2,
            ForwardModel::Continuum => self.forward.order,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.forward;
        f.electrodes.validate()?;
        range("forward.amplitude", f.amplitude > 0.0 && f.amplitude.is_finite(), "must be positive")?;
        range("forward.noise", (0.0..1.0).contains(&f.noise), "must lie in [0, 1)")?;
        range("forward.order", (1..=64).contains(&f.order), "must lie in 1..=64")?;
        range("forward.mesh.rings", f.mesh.rings >= 4, "need at least 4 rings")?;
        range("forward.mesh.boundary_nodes", f.mesh.boundary_nodes >= 16, "need at least 16 boundary nodes")?;
        range("forward.mesh.boundary_nodes", f.mesh.boundary_nodes >= 8 * self.dn_order(), "too coarse for the requested basis order")?;
        let c = &self.calibration;
        range("calibration.condition_cap", c.condition_cap > 1.0, "must exceed 1")?;
        range("calibration.tank_sigma", c.tank_sigma > 0.0 && c.tank_sigma.is_finite(), "must be positive")?;
        self.cgo.validate()?;
        range("cgo.m_theta", self.cgo.m_theta >= 4 * self.dn_order(), "must be at least 4 N to resolve the DN basis")?;
        let p = &self.pseudotime;
        range("pseudotime.a", p.a > 0.0 && p.a <= 1.0, "must lie in (0, 1]")?;
        range("pseudotime.n_t", p.n_t >= 2 && p.n_t.is_multiple_of(2), "must be even and at least 2")?;
        range("pseudotime.t_max", p.t_max > 0.0 && p.t_max.is_finite(), "must be positive")?;
        range("pseudotime.scale", p.scale.is_finite() && p.scale != 0.0, "must be finite and non-zero")?;
        match &self.deblur {
            DeblurConfig::Tikhonov { lambda } => range("deblur.lambda", *lambda > 0.0 && lambda.is_finite(), "must be positive")?,
            DeblurConfig::External { .. } => {}
            DeblurConfig::Watch { timeout_secs, .. } => {
                range("deblur.timeout_secs", *timeout_secs > 0.0 && timeout_secs.is_finite(), "must be positive")?
            }
        }
        self.recon.reconstruction().validate()?;
        Ok(())
    }
}
