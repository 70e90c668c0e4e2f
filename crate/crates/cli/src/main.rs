use std::path::PathBuf;
use std::process::ExitCode;

use cfclass_cli::{cmd_evaluate, cmd_fit, cmd_predict, cmd_preprocess_compas, cmd_simulate, CliError, EvaluateOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cfclass", version, about = "Constrained counterfactual classifiers from observational data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model; writes the model, its inference report and training scores.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score rows of a data file with a fitted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation experiment and write summary tables.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// AUC, accuracy, cross-entropy and ROC points of a model on labelled data.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "y")]
        label_column: String,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Only evaluate rows where this column equals --restrict-value.
        #[arg(long, requires = "restrict_value")]
        restrict_column: Option<String>,
        #[arg(long, requires = "restrict_column")]
        restrict_value: Option<u8>,
    },
    /// Prepare the public two-year recidivism file for `fit`.
    PreprocessCompas {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a random train/test split with this many training rows.
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit { config, data, out } => {
            let fit = cmd_fit(&config, &data, &out)?;
            print!("{}", fit.summary());
        }
        Command::Predict { model, data, out } => {
            let n = cmd_predict(&model, &data, &out)?;
            println!("wrote {n} scores to {}", out.display());
        }
        Command::Simulate { config, out } => {
            let result = cmd_simulate(&config, &out)?;
            for s in result.summaries() {
                println!(
                    "{:<14} {:<10} n={:<6} beta err {:.4} ({:.4})  value err {:.4} ({:.4})  class err {:.4}",
                    s.method.as_str(),
                    s.x_mode.as_str(),
                    s.n,
                    s.mean_beta_err,
                    s.se_beta_err,
                    s.mean_value_err,
                    s.se_value_err,
                    s.mean_class_err
                );
            }
            if !result.failures.is_empty() {
                println!("{} replication(s) failed; see failures.csv", result.failures.len());
            }
        }
        Command::Evaluate {
            model,
            data,
            out,
            label_column,
            threshold,
            restrict_column,
            restrict_value,
        } => {
            let opts = EvaluateOptions {
                label_column,
                threshold,
                restrict: restrict_column.zip(restrict_value),
            };
            let e = cmd_evaluate(&model, &data, &out, &opts)?;
            match e.auc {
                Some(auc) => println!("n {}  AUC {auc:.4}  accuracy {:.4}  cross-entropy {:.4}", e.n, e.accuracy, e.cross_entropy),
                None => println!(
                    "n {}  AUC unavailable (single class)  accuracy {:.4}  cross-entropy {:.4}",
                    e.n, e.accuracy, e.cross_entropy
                ),
            }
        }
        Command::PreprocessCompas {
            raw,
            out,
            train_size,
            seed,
        } => {
            let s = cmd_preprocess_compas(&raw, &out, train_size, seed)?;
            println!("kept {} of {} rows", s.kept_rows, s.raw_rows);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
