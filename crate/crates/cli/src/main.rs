use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stcm_core::simulator::config::ExperimentConfig;
use stcm_core::simulator::{run, ExperimentKind};

/// Regenerates the sensing-bound, detection and classification data sets.
#[derive(Parser, Debug)]
#[command(name = "stcm-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// CRB maps of the arrival and departure angles
    CrbMap,
    /// position error bound maps
    PebMap,
    /// detection probability maps per scattering path and combiner
    DetectMap,
    /// Monte Carlo confusion matrices against SNR
    ClassifyMc,
    /// fixed-profile RIS against the time-modulated surface
    RisCompare,
    /// invariant suite
    Validate,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration; the embedded default is used when absent
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// grid spacing in meters
    #[arg(long = "grid-res", global = true)]
    grid_res: Option<f64>,
    /// worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// highest harmonic order; also replaces the harmonic sweep
    #[arg(long, global = true)]
    harmonics: Option<u32>,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::CrbMap => ExperimentKind::CrbMap,
            Command::PebMap => ExperimentKind::PebMap,
            Command::DetectMap => ExperimentKind::DetectMap,
            Command::ClassifyMc => ExperimentKind::ClassifyMc,
            Command::RisCompare => ExperimentKind::RisCompare,
            Command::Validate => ExperimentKind::Validate,
        }
    }
}

fn load(common: &Common) -> stcm_core::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::table_one(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.grid_res {
        cfg.grid_resolution = r;
    }
    if let Some(m) = common.harmonics {
        cfg.harmonics.m_f = m;
        cfg.harmonics.sweep = vec![m];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let kind = cli.command.kind();
    let result = load(&cli.common).and_then(|cfg| run(kind, &cfg, &cli.common.out));
    match result {
        Ok(m) => {
            for f in &m.files {
                println!("{}", cli.common.out.join(&f.name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {} failed: {e}", kind.name());
            ExitCode::FAILURE
        }
    }
}
