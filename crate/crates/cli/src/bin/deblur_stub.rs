//! Stand-in for an external deblurrer: copies or doubles a VHT1 matrix.
//!
//! `deblur-stub [identity|double] --in X --out Y` handles one file.
//! `deblur-stub [mode] --watch DIR` serves the exchange directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, ValueEnum};
use vhpt_core::vht::{self, VhtData, VhtMatrix};

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Identity,
    Double,
}

#[derive(Parser)]
#[command(name = "deblur-stub")]
struct Cli {
    #[arg(value_enum, default_value = "identity")]
    mode: Mode,
    #[arg(long = "in", requires = "output", conflicts_with = "watch")]
    input: Option<PathBuf>,
    #[arg(long = "out")]
    output: Option<PathBuf>,
    #[arg(long)]
    watch: Option<PathBuf>,
    /// Requests to serve before exiting in watch mode.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Seconds to wait for each request in watch mode.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
}

fn transform(m: VhtMatrix, mode: Mode) -> VhtMatrix {
    let factor = match mode {
        Mode::Identity => return m,
        Mode::Double => 2.0,
    };
    let data = match m.data {
        VhtData::Real(v) => VhtData::Real(v.into_iter().map(|x| x * factor).collect()),
        VhtData::Complex(v) => VhtData::Complex(v.into_iter().map(|x| x * factor).collect()),
    };
    VhtMatrix { data, ..m }
}

fn serve_file(input: &Path, output: &Path, mode: Mode) -> Result<(), String> {
    let m = vht::read(input).map_err(|e| format!("{}: {e}", input.display()))?;
    let staging = output.with_extension("partial");
    vht::write(&staging, &transform(m, mode)).map_err(|e| format!("{}: {e}", staging.display()))?;
    std::fs::rename(&staging, output).map_err(|e| format!("{}: {e}", output.display()))
}

fn watch(dir: &Path, mode: Mode, count: usize, timeout: Duration) -> Result<(), String> {
    let input = dir.join("in.vht");
    let output = dir.join("out.vht");
    for _ in 0..count {
        let start = Instant::now();
        while !input.exists() {
            if start.elapsed() > timeout {
                return Err(format!("no in.vht in {} after {timeout:?}", dir.display()));
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        serve_file(&input, &output, mode)?;
        // Wait for the client to collect the answer.
        while output.exists() {
            if start.elapsed() > timeout {
                return Err("response was never collected".into());
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match (&cli.input, &cli.output, &cli.watch) {
        (Some(i), Some(o), None) => serve_file(i, o, cli.mode),
        (None, _, Some(d)) => watch(d, cli.mode, cli.count, Duration::from_secs_f64(cli.timeout)),
        _ => Err("pass --in and --out, or --watch".into()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("deblur-stub: {e}");
            ExitCode::FAILURE
        }
    }
}
