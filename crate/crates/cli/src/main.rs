use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use weakfock::constants::Mode;
use weakfock_cli::config::{parse_config, RunConfig};
use weakfock_cli::run::{execute, Command};

#[derive(Parser)]
#[command(name = "weakfock", version, about = "Truncated Fock-space checks for a weak-decay model")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML configuration; defaults are used for every missing key
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides run.out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// base seed (overrides run.seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads; results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Certify,
    Explore,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// CAR/CCR, smeared-operator norms, hermiticity of H
    CheckAlgebra,
    /// number-operator and relative-bound inequalities on random vectors
    VerifyBounds,
    /// constant ledger, interval enclosures, kernel hypotheses
    Constants,
    /// coupling thresholds and free energy thresholds
    Thresholds,
    /// low spectrum of the full truncated H
    Spectrum,
    /// stage Hamiltonians along σ_n and their inequalities
    Cascade,
    /// commutator positivity, virial, discretization study
    Mourre,
    /// weighted resolvent norms near the real axis
    Probe,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::CheckAlgebra => Command::CheckAlgebra,
            Sub::VerifyBounds => Command::VerifyBounds,
            Sub::Constants => Command::Constants,
            Sub::Thresholds => Command::Thresholds,
            Sub::Spectrum => Command::Spectrum,
            Sub::Cascade => Command::Cascade,
            Sub::Mourre => Command::Mourre,
            Sub::Probe => Command::Probe,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => match parse_config(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.run.out = o.clone();
    }
    if let Some(m) = cli.mode {
        cfg.run.mode = match m {
            ModeArg::Certify => Mode::Certify,
            ModeArg::Explore => Mode::Explore,
        };
    }
    let cfg = match cfg.validate() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let cmd = Command::from(cli.command);
    match execute(cmd, &cfg, &cfg.run.out) {
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            if !o.pass() {
                eprintln!("{}: failed verdicts:", cmd.name());
                for name in o.failed() {
                    eprintln!("  - {name}");
                }
            }
            ExitCode::from(o.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
