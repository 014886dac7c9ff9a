use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use labelflip::config::{Mode, RunConfig, KEYS};
use labelflip::data::{generate_gaussian_task, load_csv, save_csv, CsvSchema, GaussianTaskSpec};
use labelflip::harness::{
    compare_before_after, run_sweep, write_compare_outputs, write_sweep_outputs,
};
use labelflip::models::predict_scores;
use labelflip::{Classifier, Error, MetricsReport, RngSeed};

const CONFIG_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "labelflip",
    version,
    about = "Label-flip retraining, class-weight and threshold baselines, and sweeps",
    after_help = "Exit codes: 0 success, 2 config or usage error, 3 runtime error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded two-class Gaussian dataset as CSV (id,x0..,label).
    Generate {
        /// Positive examples; negatives are round(n_per_class * imbalance).
        #[arg(long, default_value_t = 200)]
        n_per_class: usize,
        /// Positive-class mean on every feature (negative mean is 0).
        #[arg(long, default_value_t = 1.5)]
        sep: f64,
        /// Negatives per positive.
        #[arg(long, default_value_t = 1.0)]
        imbalance: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Per-feature standard deviation.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sweep or a before/after comparison described by a config file.
    #[command(after_help = config_help())]
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a CSV dataset with a saved model and print a metrics row.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Predict positive iff score > threshold.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value = "label")]
        label_column: String,
    },
}

fn config_help() -> String {
    let mut s = String::from("Config keys (key = value, '#' comments):\n");
    for (k, d, desc) in KEYS {
        s.push_str(&format!("  {k:<15} default {d:<16} {desc}\n"));
    }
    s
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn generate(
    n_per_class: usize,
    sep: f64,
    imbalance: f64,
    dim: usize,
    scale: f64,
    seed: u64,
    out: PathBuf,
) -> Result<(), Failure> {
    let spec = GaussianTaskSpec {
        scale,
        ..GaussianTaskSpec::diagonal(dim, sep, n_per_class, imbalance, RngSeed(seed))
    };
    let data = generate_gaussian_task(&spec).map_err(Failure::Config)?;
    save_csv(&data, &out, &CsvSchema::standard(dim)).map_err(Failure::Runtime)
}

fn run(config: PathBuf, out: PathBuf) -> Result<(), Failure> {
    let cfg = RunConfig::load(&config).map_err(Failure::Config)?;
    match cfg.mode {
        Mode::Sweep => {
            let spec = cfg.sweep_spec().map_err(Failure::Config)?;
            let report = run_sweep(&spec).map_err(Failure::Runtime)?;
            write_sweep_outputs(&spec, &report, &out).map_err(Failure::Runtime)?;
        }
        Mode::Compare => {
            let task = cfg.task().map_err(Failure::Config)?;
            let specs = cfg
                .model_specs(task.feature_dim())
                .map_err(Failure::Config)?;
            let train = cfg.train_config();
            train.validate().map_err(Failure::Config)?;
            let flip = cfg.flip_settings().map_err(Failure::Config)?;
            if cfg.replicates == 0 {
                return Err(Failure::Config(Error::Config(
                    "replicates must be >= 1".into(),
                )));
            }
            let seed = RngSeed(cfg.seed);
            let report = compare_before_after(&task, &specs, &train, flip, cfg.replicates, seed)
                .map_err(Failure::Runtime)?;
            write_compare_outputs(&task, &report, seed, &out).map_err(Failure::Runtime)?;
        }
    }
    let echo = out.join("config.resolved");
    fs::write(&echo, cfg.to_text()).map_err(|e| {
        Failure::Runtime(Error::Io {
            path: echo.clone(),
            source: e,
        })
    })
}

fn eval(
    model: PathBuf,
    data: PathBuf,
    threshold: f64,
    label_column: String,
) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::Config(Error::Config(format!(
            "--threshold {threshold} is outside [0, 1]"
        ))));
    }
    let model = Classifier::load(&model).map_err(Failure::Runtime)?;
    let schema = CsvSchema::from_header(&data, &label_column).map_err(Failure::Runtime)?;
    let data = load_csv(&data, &schema).map_err(Failure::Runtime)?;
    let scores = predict_scores(&model, &data).map_err(Failure::Runtime)?;
    let report = MetricsReport::evaluate(&scores, &data, threshold).map_err(Failure::Runtime)?;
    println!("{}", MetricsReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            n_per_class,
            sep,
            imbalance,
            dim,
            scale,
            seed,
            out,
        } => generate(n_per_class, sep, imbalance, dim, scale, seed, out),
        Command::Run { config, out } => run(config, out),
        Command::Eval {
            model,
            data,
            threshold,
            label_column,
        } => eval(model, data, threshold, label_column),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}
