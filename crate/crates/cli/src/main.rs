//! `twostate <subcommand> --config <path> [--out <dir>] [--seed <int>] [--threads <int>]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use twostate_core::io::load_config;
use twostate_core::pipeline::run_subcommand;
use twostate_core::{Error, ErrorClass};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subcommand {
    CarlemanCheck,
    Forward,
    Probes,
    Invert,
    Stability,
    Mms,
}

impl Subcommand {
    fn name(self) -> &'static str {
        match self {
            Subcommand::CarlemanCheck => "carleman-check",
            Subcommand::Forward => "forward",
            Subcommand::Probes => "probes",
            Subcommand::Invert => "invert",
            Subcommand::Stability => "stability",
            Subcommand::Mms => "mms",
        }
    }
}

/// Forward solves, probe design, inversion and stability sweeps for the
/// coupled two-state Schrödinger waveguide problem.
///
/// Exit codes: 0 ok, 2 config, 3 solver, 4 contract violation, 5 I/O.
#[derive(Debug, Parser)]
#[command(name = "twostate", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// TOML experiment config; missing blocks take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed for the perturbation pair and the harness seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 means one per core.
    #[arg(long, env = "TWOSTATE_THREADS", default_value_t = 0)]
    threads: usize,
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.class().exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    let out = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return ExitCode::from(ErrorClass::Config.exit_code() as u8);
        }
    };
    let name = cli.subcommand.name();
    let (manifest, result) = pool.install(|| run_subcommand(name, &config, &out, pool.current_num_threads()));
    match result {
        Ok(()) => {
            eprintln!("{name}: ok, {} files in {}", manifest.files.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
