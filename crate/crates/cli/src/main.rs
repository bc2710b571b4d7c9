use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use defectcal::goldens::{render_outcomes, verify_goldens};
use defectcal::pipeline::{run, RunOptions, Stage};
use defectcal::ErrorClass;

/// Builds and evaluates defect-count models from a JSON pipeline config.
#[derive(Debug, Parser)]
#[command(name = "defectcal", version)]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, required_unless_present = "verify_goldens")]
    config: Option<PathBuf>,
    /// Data CSV; overrides the config's `data`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory; overrides DEFECTCAL_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run one stage: prepare | screen | tree | fit | recalibrate | evaluate | synth.
    #[arg(long)]
    stage: Option<String>,
    /// Re-run the golden fixtures listed in a manifest and report drift.
    #[arg(long, value_name = "MANIFEST")]
    verify_goldens: Option<PathBuf>,
}

fn exit_for(class: ErrorClass) -> ExitCode {
    ExitCode::from(match class {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    if let Some(manifest) = &cli.verify_goldens {
        return match verify_goldens(manifest) {
            Ok(outcomes) => {
                print!("{}", render_outcomes(&outcomes));
                if outcomes.iter().all(|o| o.passed) {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_for(e.class())
            }
        };
    }

    let stage = match cli.stage.as_deref().map(str::parse::<Stage>).transpose() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let opts = RunOptions {
        config_path: cli.config.expect("clap enforces --config"),
        data: cli.data,
        out_dir: cli.out,
        seed: cli.seed,
        stage,
    };
    match run(&opts) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("outputs written to {}", outcome.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(e.error.class())
        }
    }
}
