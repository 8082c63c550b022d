//! Command-line interface for the staged multi-omics classifier.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use omicstage::config::{FileConfig, Overrides};
use omicstage::data::{generate_synthetic, write_dataset};
use omicstage::error::Error;
use omicstage::pipeline;

#[derive(Parser)]
#[command(
    name = "omicstage",
    about = "Staged multi-omics classification with ensemble uncertainty and cost-aware early exits"
)]
struct Cli {
    /// Flat key-value TOML config file; CLI flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Tune the stage plan and thresholds on the test block instead of a
    /// validation carve (reference-faithful but leaks test labels into
    /// threshold selection).
    #[arg(long, global = true)]
    tune_on_test: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SynthSpec {
    /// Sample count (even, ≥ 4).
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Features per view.
    #[arg(long, default_value_t = 10)]
    features: usize,
    /// Per-view class separation (Bayes accuracy of view k alone is
    /// Φ(snr_k)).
    #[arg(long, num_args = 3, value_names = ["SNR1", "SNR2", "SNR3"],
          default_values_t = [3.0, 0.5, 0.5])]
    snr: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every view configuration, optimize staging, and write all
    /// reports, logs, and checkpoints.
    Train {
        /// Dataset directory ({k}_tr.csv / {k}_te.csv / {k}_featname.csv /
        /// labels_*.csv).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Generate a synthetic dataset instead of reading one.
        #[arg(long)]
        synth: bool,
        #[command(flatten)]
        synth_spec: SynthSpec,
    },
    /// Re-optimize the stage plan and thresholds of a finished run from its
    /// stored ensembles (no retraining).
    Stage {
        /// Finished run directory (contains run_state.json).
        #[arg(long)]
        run: PathBuf,
        /// Replace the per-view acquisition costs.
        #[arg(long, num_args = 3, value_names = ["C1", "C2", "C3"])]
        costs: Option<Vec<f64>>,
    },
    /// Apply a finished run's checkpoints and thresholds to a dataset
    /// directory; writes predictions.csv.
    Predict {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[command(flatten)]
        spec: SynthSpec,
    },
    /// Regenerate the derived reports of a finished run from its stored
    /// state (optionally with a different histogram resolution).
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
}

fn snr_array(spec: &SynthSpec) -> [f64; 3] {
    [spec.snr[0], spec.snr[1], spec.snr[2]]
}

fn run(cli: Cli) -> Result<(), Error> {
    let file_cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    match cli.command {
        Command::Train {
            data,
            synth,
            synth_spec,
        } => {
            let overrides = Overrides {
                data_dir: data,
                synth: synth.then(|| {
                    (
                        synth_spec.samples,
                        synth_spec.features,
                        snr_array(&synth_spec),
                    )
                }),
                seed: cli.seed,
                out_dir: cli.out,
                tune_on_test: cli.tune_on_test,
            };
            let run_cfg = file_cfg.resolve(overrides)?;
            let (_, outcome) = pipeline::run_pipeline(&run_cfg)?;
            println!(
                "staged accuracy {:.4} | fractions {:.2}%/{:.2}%/{:.2}% | expected cost {:.4}",
                outcome.staged_metrics.acc,
                outcome.staged.stage_fractions[0] * 100.0,
                outcome.staged.stage_fractions[1] * 100.0,
                outcome.staged.stage_fractions[2] * 100.0,
                outcome.cost.expected_cost
            );
            println!("artifacts in {}", run_cfg.out_dir.display());
            Ok(())
        }
        Command::Stage { run, costs } => {
            let costs = costs.map(|c| [c[0], c[1], c[2]]);
            let state = pipeline::stage_from_state(&run, true, costs, None)?;
            println!(
                "re-staged run {}: t1 {:.6}, t2 {:.6}",
                run.display(),
                state.thresholds.t1,
                state.thresholds.t2
            );
            Ok(())
        }
        Command::Predict { run, data } => {
            let out = cli.out.unwrap_or_else(|| run.join("predict"));
            pipeline::predict_with_checkpoints(&run, &data, &out)?;
            println!("predictions in {}", out.join("predictions.csv").display());
            Ok(())
        }
        Command::Synth { spec } => {
            let out = cli
                .out
                .ok_or_else(|| Error::Config("synth needs --out".to_string()))?;
            let seed = cli.seed.unwrap_or(42);
            let ds = generate_synthetic(spec.samples, spec.features, snr_array(&spec), seed)?;
            write_dataset(&ds, &out)?;
            println!(
                "wrote {} samples x {} views to {}",
                ds.n_samples(),
                ds.views.len(),
                out.display()
            );
            Ok(())
        }
        Command::Report { run, bins } => {
            pipeline::stage_from_state(&run, false, None, bins)?;
            println!("reports regenerated in {}", run.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
