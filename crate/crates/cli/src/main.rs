use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracwave::config::{parse_config, Command};
use fracwave::runner::run_config;
use fracwave::Error;

/// Fast and direct solvers for multi-term time-fractional wave equations.
#[derive(Parser, Debug)]
#[command(name = "fracwave", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Single run; writes the final solution and its errors.
    Solve(Common),
    /// Time-step ladder at fixed spatial resolution.
    TemporalStudy(Common),
    /// Spatial ladder at fixed time step.
    SpatialStudy(Common),
    /// Fast vs direct timing and storage over large step counts.
    CompareBackends(Common),
    /// Structural checks on the step coefficients.
    CoeffCheck(Common),
    /// Sum-of-exponentials accuracy scan per order.
    SoeCheck(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Abort on the first coefficient check failure.
    #[arg(long)]
    strict: bool,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cmd {
    fn split(self) -> (Command, Common) {
        match self {
            Cmd::Solve(c) => (Command::Solve, c),
            Cmd::TemporalStudy(c) => (Command::TemporalStudy, c),
            Cmd::SpatialStudy(c) => (Command::SpatialStudy, c),
            Cmd::CompareBackends(c) => (Command::CompareBackends, c),
            Cmd::CoeffCheck(c) => (Command::CoeffCheck, c),
            Cmd::SoeCheck(c) => (Command::SoeCheck, c),
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_VALIDATION: u8 = 2;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation { .. } | Error::SoeCertification { .. } | Error::NotDiagonallyDominant { .. } => {
            EXIT_VALIDATION
        }
        _ => EXIT_CONFIG,
    }
}

fn run(command: Command, opts: Common) -> Result<bool, Error> {
    let text = std::fs::read_to_string(&opts.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", opts.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(named) = cfg.command {
        if named != command {
            return Err(Error::Config(format!(
                "config names command `{}` but `{}` was requested",
                named.name(),
                command.name()
            )));
        }
    }
    if opts.strict {
        cfg.strict_validation = true;
    }
    let out_dir = opts
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("fracwave-out"));
    let summary = run_config(&cfg, command, &out_dir)?;
    for note in &summary.notes {
        log::warn!("{note}");
    }
    for f in &summary.files {
        println!("{}", f.display());
    }
    Ok(summary.validation_ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (command, opts) = Cli::parse().command.split();
    match run(command, opts) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("fracwave: {} failed validation", command.name());
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(e) => {
            eprintln!("fracwave: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
