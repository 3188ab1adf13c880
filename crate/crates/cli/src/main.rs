//! `ringfwm`: config-driven runs of the ring pair-source simulator.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ringfwm::config::RunConfig;
use ringfwm::pipeline::Engine;
use ringfwm::settom::SetGauge;
use ringfwm::Error;

#[derive(Parser, Debug)]
#[command(name = "ringfwm", version, about = "Photon-pair generation in back-scattering micro-rings")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args, Debug, Clone)]
pub struct CommonArgs {
    /// Run config (or a manifest from an earlier run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Ensemble RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    grid_points: Option<usize>,

    /// Half-width of the symmetric k window (1/m).
    #[arg(long, global = true)]
    grid_span: Option<f64>,

    /// full | perturbative (every stage, calibration included)
    #[arg(long, global = true)]
    engine: Option<Engine>,

    /// Worker threads (0: all cores, 1: sequential).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Use this λ·|pump|² instead of calibrating.
    #[arg(long, global = true)]
    strength: Option<f64>,

    /// SET term phases: aligned | canonical
    #[arg(long, global = true)]
    set_gauge: Option<SetGauge>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Single device with the configured defects.
    Scenario,
    /// One defect parameter (or the strength) over a list of values.
    Sweep,
    /// Defect-sampled ensemble with histograms.
    Ensemble,
    /// Simulated stimulated-emission tomography over the ensemble.
    SetStudy,
    /// First-order against full solutions on selected devices.
    PerturbCompare,
    /// Find λ·|pump|² matching the target baseline pair probability.
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scenario => "scenario",
            Command::Sweep => "sweep",
            Command::Ensemble => "ensemble",
            Command::SetStudy => "set-study",
            Command::PerturbCompare => "perturb-compare",
            Command::Calibrate => "calibrate",
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CALIBRATION: u8 = 4;
const EXIT_IO: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::UnknownMode(_) | Error::GridMismatch(_) | Error::InvalidModel(_) => {
            EXIT_CONFIG
        }
        Error::Calibration(_) => EXIT_CALIBRATION,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_SOLVER,
    }
}

fn resolve_config(args: &CommonArgs) -> ringfwm::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(n) = args.grid_points {
        cfg.grid.points = n;
    }
    if let Some(span) = args.grid_span {
        cfg.grid.span = span;
    }
    if let Some(engine) = args.engine {
        cfg.engine = engine;
        cfg.ensemble.engine = engine;
        cfg.calibration.engine = engine;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    if let Some(g) = args.set_gauge {
        cfg.ensemble.set_gauge = g;
    }
    if let Some(s) = args.strength {
        cfg.calibration.strength = Some(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve_config(&cli.common).and_then(|cfg| commands::run(cli.command, &cfg, &cli.common.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ringfwm {}: {e}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
