use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mrsvdd::pipeline::{self, ModelArtifact, RunConfig};
use mrsvdd::timeseries::{self, standard_anomaly_segments};

/// Anomaly detection on multivariate time series with a manifold-regularised
/// large-margin SVDD over signature kernels.
#[derive(Parser)]
#[command(name = "mrsvdd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-search hyperparameters on a validation split and fit a model.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a test series with a trained model and report metrics.
    Score {
        #[command(flatten)]
        common: Common,
        /// Model JSON written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Effective-kernel and complexity-bound checks across the c3 grid.
    Diagnose {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic benchmark series with labelled anomalies.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        length: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        /// Steps written to the anomaly-free training file.
        #[arg(long, default_value_t = 2000)]
        train_length: usize,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; unset fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when neither this nor the config's `output` is set).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    max_train_windows: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)
                .with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.train_data {
            cfg.train_data = Some(v.clone());
        }
        if let Some(v) = &self.train_labels {
            cfg.train_labels = Some(v.clone());
        }
        if let Some(v) = &self.test_data {
            cfg.test_data = Some(v.clone());
        }
        if let Some(v) = &self.test_labels {
            cfg.test_labels = Some(v.clone());
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.max_train_windows {
            cfg.max_train_windows = v;
        }
        if let Some(v) = &self.out {
            cfg.output = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(json: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{json}\n"))
            .with_context(|| format!("writing {}", path.display())),
        None => match writeln!(std::io::stdout().lock(), "{json}") {
            // a closed reader (`| head`) is not an error
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r.context("writing to stdout"),
        },
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Train { common } => {
            let cfg = common.config()?;
            let artifact = pipeline::run_train(&cfg)?;
            emit(&artifact.to_json()?, cfg.output.as_deref())
        }
        Command::Score {
            common,
            model,
            threshold,
        } => {
            let mut cfg = common.config()?;
            if let Some(t) = threshold {
                cfg.threshold = t;
            }
            let artifact = ModelArtifact::from_json_file(&model)
                .with_context(|| format!("reading {}", model.display()))?;
            let report = pipeline::run_score(&cfg, &artifact)?;
            emit(
                &serde_json::to_string_pretty(&report)?,
                cfg.output.as_deref(),
            )
        }
        Command::Diagnose { common } => {
            let cfg = common.config()?;
            let report = pipeline::run_diagnostics(&cfg)?;
            emit(
                &serde_json::to_string_pretty(&report)?,
                cfg.output.as_deref(),
            )
        }
        Command::Synth {
            out,
            seed,
            length,
            channels,
            train_length,
        } => {
            anyhow::ensure!(
                train_length < length,
                "train length must be below the series length"
            );
            let series = timeseries::synthetic_benchmark(
                seed,
                length,
                channels,
                &standard_anomaly_segments(length),
            )?;
            std::fs::create_dir_all(&out)?;
            let labels = series
                .point_labels()
                .expect("synthetic series are labelled");
            timeseries::write_series_csv(&series, out.join("series.csv"))?;
            timeseries::write_labels_csv(labels, out.join("labels.csv"))?;
            let train = series.slice(0, train_length)?;
            let test = series.slice(train_length, length)?;
            timeseries::write_series_csv(&train, out.join("train.csv"))?;
            timeseries::write_series_csv(&test, out.join("test.csv"))?;
            timeseries::write_labels_csv(&labels[train_length..], out.join("test_labels.csv"))?;
            eprintln!(
                "wrote {} steps x {channels} channels to {}",
                length,
                out.display()
            );
            Ok(())
        }
    }
}
