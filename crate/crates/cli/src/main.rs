use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use vhpt_cli::config::{two_disc_phantom, DeblurConfig, ForwardModel, PhantomSource, PipelineConfig, ReconMethod};
use vhpt_cli::dataset::{generate_dataset, DatasetConfig};
use vhpt_cli::figures::emit_figures;
use vhpt_cli::pipeline::{run_pipeline, run_stage, Bundle, Stage, CONFIG};
use vhpt_core::phantom::{random_phantom, rasterize, RandomPhantomParams};
use vhpt_core::{Field, Inclusion, Phantom, Shape};

/// Virtual hybrid parallel-beam tomography from EIT data.
#[derive(Parser)]
#[command(name = "vhpt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve a phantom and start a bundle.
    Phantom {
        #[command(flatten)]
        common: StageArgs,
        #[arg(long, value_enum, conflicts_with = "random_seed")]
        preset: Option<Preset>,
        /// Draw random discs with this seed.
        #[arg(long)]
        random_seed: Option<u64>,
        /// Contrast used by the presets.
        #[arg(long, default_value_t = 1.1)]
        contrast: f64,
        /// Also write the conductivity raster `sigma_true.vht` at this size.
        #[arg(long)]
        raster: Option<usize>,
    },
    /// Simulate electrode voltages or continuum ND matrices.
    Forward(StageArgs),
    /// Assemble the calibrated DN matrix.
    Calibrate(StageArgs),
    /// Solve the boundary integral equations and form the scattering data.
    Cgo(StageArgs),
    /// Pseudo-time transform and phase integration.
    Sinogram(StageArgs),
    /// Deblur and reorder to parallel-beam angles.
    Deblur(StageArgs),
    /// Reconstruct mu and sigma.
    Recon(StageArgs),
    /// Run every stage.
    Pipeline {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Sinogram heatmap, radiograph profiles and the sigma image.
    Figures {
        #[arg(long)]
        bundle: PathBuf,
        /// Radiograph angles in degrees, parallel-beam convention.
        #[arg(long = "angle", default_values_t = [0.0, 60.0, 120.0])]
        angles: Vec<f64>,
        /// Defaults to `<bundle>/figures`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Blurred/sharp sinogram pairs for training an external deblurrer.
    Dataset {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Dataset config JSON; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Homogeneous,
    TwoDisc,
    CenteredDisc,
    Pacman,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Config JSON. Defaults to the one recorded in the bundle.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags mirroring `PipelineConfig`. Each one overrides the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Phantom JSON file.
    #[arg(long)]
    phantom: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Electrode count L.
    #[arg(long)]
    electrodes: Option<usize>,
    #[arg(long)]
    coverage: Option<f64>,
    /// Contact impedance z, the same on every electrode.
    #[arg(long)]
    contact_impedance: Option<f64>,
    /// Continuum basis order N.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    m_theta: Option<usize>,
    #[arg(long)]
    m_tau: Option<usize>,
    #[arg(long)]
    m_phi: Option<usize>,
    #[arg(long)]
    r_cut: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n_t: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// External deblurrer program, run as `<program> --in <file> --out <file>`.
    #[arg(long, conflicts_with = "deblur_watch")]
    deblur_command: Option<PathBuf>,
    /// Extra leading arguments for the external deblurrer.
    #[arg(long = "deblur-arg", allow_hyphen_values = true)]
    deblur_args: Vec<String>,
    /// Exchange directory watched by an external deblurrer.
    #[arg(long)]
    deblur_watch: Option<PathBuf>,
    #[arg(long, value_enum)]
    recon: Option<Recon>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Image side n.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip fitting the scale against the single-scattering oracle.
    #[arg(long)]
    no_scale_fit: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Cem,
    Continuum,
}

#[derive(Clone, Copy, ValueEnum)]
enum Recon {
    Fbp,
    Tv,
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = &self.out {
            cfg.output = v.clone();
        }
        if let Some(v) = &self.phantom {
            cfg.phantom = PhantomSource::Path(v.clone());
        }
        if let Some(m) = self.model {
            cfg.forward.model = match m {
                Model::Cem => ForwardModel::Cem,
                Model::Continuum => ForwardModel::Continuum,
            };
        }
        let e = &mut cfg.forward.electrodes;
        if let Some(l) = self.electrodes {
            let z = e.contact_impedance.first().copied().unwrap_or(1e-2);
            e.count = l;
            e.contact_impedance = vec![z; l];
        }
        if let Some(v) = self.coverage {
            e.coverage = v;
        }
        if let Some(z) = self.contact_impedance {
            e.contact_impedance = vec![z; e.count];
        }
        set(&mut cfg.forward.order, self.order);
        set(&mut cfg.forward.noise, self.noise);
        set(&mut cfg.cgo.m_theta, self.m_theta);
        set(&mut cfg.cgo.m_tau, self.m_tau);
        set(&mut cfg.cgo.m_phi, self.m_phi);
        set(&mut cfg.cgo.r_cut, self.r_cut);
        set(&mut cfg.pseudotime.a, self.a);
        set(&mut cfg.pseudotime.n_t, self.n_t);
        if self.no_scale_fit {
            cfg.pseudotime.calibrate = false;
        }
        if let Some(lambda) = self.lambda {
            cfg.deblur = DeblurConfig::Tikhonov { lambda };
        }
        if let Some(program) = &self.deblur_command {
            cfg.deblur = DeblurConfig::External { program: program.clone(), args: self.deblur_args.clone() };
        }
        if let Some(dir) = &self.deblur_watch {
            let timeout_secs = match cfg.deblur {
                DeblurConfig::Watch { timeout_secs, .. } => timeout_secs,
                _ => 60.0,
            };
            cfg.deblur = DeblurConfig::Watch { dir: dir.clone(), timeout_secs };
        }
        if let Some(r) = self.recon {
            cfg.recon.method = match r {
                Recon::Fbp => ReconMethod::Fbp,
                Recon::Tv => ReconMethod::Tv,
            };
        }
        set(&mut cfg.recon.alpha, self.alpha);
        set(&mut cfg.recon.iterations, self.iterations);
        set(&mut cfg.recon.n, self.n);
        set(&mut cfg.seed, self.seed);
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Defaults, then the bundle's recorded config, then `--config`, then flags.
fn resolve(bundle: Option<&Path>, config: Option<&Path>, overrides: &Overrides) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match (config, bundle.map(|b| b.join(CONFIG)).filter(|p| p.exists())) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Some(recorded)) => PipelineConfig::load(&recorded)?,
        (None, None) => PipelineConfig::default(),
    };
    overrides.apply(&mut cfg);
    if let Some(b) = bundle {
        cfg.output = b.to_path_buf();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn preset(p: Preset, c: f64) -> vhpt_core::Result<Phantom> {
    match p {
        Preset::Homogeneous => Ok(Phantom::homogeneous()),
        Preset::TwoDisc => two_disc_phantom(c),
        Preset::CenteredDisc => Phantom::centered_disc(0.5, c),
        Preset::Pacman => Phantom::new(
            1.0,
            vec![Inclusion {
                shape: Shape::PacMan { center: [0.0, 0.0], radius: 0.6, mouth_half_angle: 0.5, mouth_direction: 0.0 },
                sigma: 1.0 / c,
            }],
        ),
    }
}

fn run_one(stage: Stage, args: &StageArgs) -> anyhow::Result<()> {
    let cfg = resolve(Some(&args.bundle), args.config.as_deref(), &args.overrides)?;
    let b = Bundle::create(&args.bundle)?;
    let report = run_stage(stage, &cfg, &b)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Phantom { common, preset: p, random_seed, contrast, raster } => {
            let mut cfg = resolve(Some(&common.bundle), common.config.as_deref(), &common.overrides)?;
            if let Some(p) = p {
                cfg.phantom = PhantomSource::Inline(preset(p, contrast)?);
            }
            if let Some(seed) = random_seed {
                cfg.phantom = PhantomSource::Inline(random_phantom(seed, &RandomPhantomParams::default())?);
            }
            let b = Bundle::create(&common.bundle)?;
            let report = run_stage(Stage::Phantom, &cfg, &b)?;
            if let Some(n) = raster {
                let img = rasterize(&b.phantom()?, n, Field::Sigma)?;
                b.write_vht("sigma_true.vht", &img.to_vht())?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Forward(a) => run_one(Stage::Forward, &a)?,
        Command::Calibrate(a) => run_one(Stage::Calibrate, &a)?,
        Command::Cgo(a) => run_one(Stage::Cgo, &a)?,
        Command::Sinogram(a) => run_one(Stage::Sinogram, &a)?,
        Command::Deblur(a) => run_one(Stage::Deblur, &a)?,
        Command::Recon(a) => run_one(Stage::Recon, &a)?,
        Command::Pipeline { overrides, config } => {
            let cfg = resolve(None, config.as_deref(), &overrides)?;
            let manifest = run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::Figures { bundle, angles, out } => {
            let out = out.unwrap_or_else(|| bundle.join("figures"));
            let radians: Vec<f64> = angles.iter().map(|d| d.to_radians()).collect();
            for f in emit_figures(&Bundle::create(&bundle)?, &radians, &out)? {
                println!("{}", f.display());
            }
        }
        Command::Dataset { seed, count, out, config } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => DatasetConfig::default(),
            };
            set(&mut cfg.seed, seed);
            set(&mut cfg.count, count);
            if cfg.count == 0 {
                bail!("count must be positive");
            }
            let index = generate_dataset(&cfg, &out)?;
            println!("{} pairs ({} train, {} validation) in {}", index.pairs.len(), index.train, index.validation, out.display());
        }
    }
    Ok(())
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("VHPT_THREADS") {
        let n: usize = v.parse().with_context(|| format!("VHPT_THREADS={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
