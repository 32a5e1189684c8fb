use clap::{Parser, Subcommand};
use featlearn::harness::{
    assert_thresholds, replot, report_thresholds, resolve_out_dir, run_experiment,
    ExperimentConfig, ExperimentKind,
};
use featlearn::FeatError;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

#[derive(Parser)]
#[command(name = "featlearn", about = "Dictionary-structured learning experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Check the experiment's published bounds and fail if any is missed.
        #[arg(long)]
        assert: bool,
        /// Output root (overrides the config and FEATLEARN_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the recognized experiment names.
    List,
    /// Run the fast closed-form checks: reference network exactness,
    /// parity family orthogonality, and first-step gradient structure.
    CheckOracles {
        /// Output root for the oracle artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the SVG scatters listed in a saved report.
    Plot {
        report: PathBuf,
        /// Directory for the rebuilt SVGs (next to the CSVs when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_for(err: &FeatError) -> u8 {
    match err {
        FeatError::Threshold(_) => EXIT_THRESHOLD,
        _ => EXIT_CONFIG,
    }
}

fn run(config: PathBuf, assert: bool, out: Option<PathBuf>) -> Result<(), FeatError> {
    let cfg = ExperimentConfig::from_json_file(&config)?;
    let out_root = resolve_out_dir(out.as_deref(), &cfg);
    let report = run_experiment(&cfg, &out_root)?;
    if assert {
        let thresholds = report_thresholds(&report);
        if thresholds.is_empty() {
            println!("no published bounds for '{}'", report.experiment);
        } else {
            assert_thresholds(&thresholds)?;
        }
    }
    Ok(())
}

fn check_oracles(out: Option<PathBuf>) -> Result<(), FeatError> {
    let out_root = out
        .or_else(|| std::env::var_os("FEATLEARN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("featlearn_out"));
    let mut all = Vec::new();
    for kind in [
        ExperimentKind::SqCheck,
        ExperimentKind::ReferenceCheck,
        ExperimentKind::GradientOracle,
    ] {
        let cfg = ExperimentConfig::named(kind);
        let report = run_experiment(&cfg, &out_root)?;
        all.extend(report_thresholds(&report));
    }
    assert_thresholds(&all)
}

fn plot(report: PathBuf, out: Option<PathBuf>) -> Result<(), FeatError> {
    let written = replot(&report, out.as_deref())?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, assert, out } => run(config, assert, out),
        Command::List => {
            for kind in ExperimentKind::ALL {
                println!("{:<16} {}", kind.name(), kind.summary());
            }
            Ok(())
        }
        Command::CheckOracles { out } => check_oracles(out),
        Command::Plot { report, out } => plot(report, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
