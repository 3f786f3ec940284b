//! Command-line front end: feature extraction, training, cross-validation,
//! calibration metrics, linguistic analysis, and gradient checking.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 numeric error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lingfuse::calibration::{ace, ece, read_predictions_csv, write_reliability_csv};
use lingfuse::error::Error;
use lingfuse::experiment::{
    load_config, prepare_features, run_experiment, run_linguistic_analysis, ExperimentConfig,
    SplitMode,
};
use lingfuse::features::{write_feature_matrix, LexiconDictionary};
use lingfuse::gradcheck::{gradient_check, CheckOp};
use lingfuse::{analysis, corpus};

#[derive(Parser)]
#[command(name = "lingfuse", version, about = "Gated feature fusion for text classifiers: train, calibrate, analyze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the config-driven commands. Every flag overrides the
/// corresponding config field.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Training seed
    #[arg(long)]
    seed: Option<u64>,
    /// Label-smoothing strength
    #[arg(long)]
    alpha: Option<f64>,
    /// Fusion shift cap
    #[arg(long)]
    beta: Option<f64>,
    /// ECE bin count
    #[arg(long)]
    bins: Option<usize>,
    /// ACE range count
    #[arg(long)]
    ranges: Option<usize>,
    /// Category dictionary path
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Feature CSV path (topics for goss, vectors for dense)
    #[arg(long)]
    features: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> lingfuse::Result<ExperimentConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(beta) = self.beta {
            cfg.beta = beta;
        }
        if let Some(bins) = self.bins {
            cfg.calibration.num_bins_m = bins;
        }
        if let Some(ranges) = self.ranges {
            cfg.calibration.num_ranges_r = ranges;
        }
        if let Some(dict) = &self.dict {
            cfg.dict_path = Some(dict.clone());
        }
        if let Some(features) = &self.features {
            cfg.features_path = Some(features.clone());
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OpArg {
    Fusion,
    Loss,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the configured feature matrix to CSV
    Features(ConfigArgs),
    /// Train one model (holdout, or fixed-test when the config names a test corpus)
    Train(ConfigArgs),
    /// Stratified k-fold cross-validation
    Crossval(ConfigArgs),
    /// Calibration metrics for a saved prediction CSV
    Calibrate {
        /// Prediction CSV (id,true_label,p0,...)
        predictions: PathBuf,
        /// ECE bin count
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// ACE range count
        #[arg(long, default_value_t = 10)]
        ranges: usize,
        /// Directory for calibration.json and reliability.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlate dictionary categories with a binary label
    Analyze {
        /// Experiment config (JSON) naming the corpus
        #[arg(long)]
        config: PathBuf,
        /// Category dictionary path (overrides the config)
        #[arg(long)]
        dict: Option<PathBuf>,
        /// False-discovery rate for the correction
        #[arg(long, default_value_t = 0.05)]
        q: f64,
        /// Output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients against finite differences
    Gradcheck {
        /// Which gradient path to check
        #[arg(long, value_enum, default_value_t = OpArg::Fusion)]
        op: OpArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference step
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Maximum allowed relative error
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

fn summarize(report: &lingfuse::experiment::ExperimentReport) -> String {
    let m = &report.mean;
    let mut line = format!(
        "mean accuracy {:.4}, weighted F1 {:.4}, ECE {:.4}, ACE {:.4}",
        m.metrics.accuracy, m.metrics.weighted_f1, m.ece, m.ace
    );
    if let Some(f1) = m.metrics.f1 {
        line.push_str(&format!(", binary F1 {f1:.4}"));
    }
    line
}

fn run(cli: Cli) -> lingfuse::Result<()> {
    match cli.command {
        Command::Features(args) => {
            let cfg = args.load()?;
            cfg.validate()?;
            let corpus = corpus::load_corpus(&cfg.corpus)?;
            let features = prepare_features(&corpus, &cfg)?;
            fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
            let path = cfg.out_dir.join("features.csv");
            write_feature_matrix(&path, &corpus.ids(), &features)?;
            println!(
                "wrote {} ({} rows, {} columns)",
                path.display(),
                features.rows,
                features.cols
            );
            Ok(())
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let mode = if cfg.test_corpus.is_some() {
                SplitMode::FixedTest
            } else {
                SplitMode::Holdout
            };
            let report = run_experiment(&cfg, mode)?;
            println!("wrote {}", cfg.out_dir.join("report.json").display());
            println!("{}", summarize(&report));
            Ok(())
        }
        Command::Crossval(args) => {
            let cfg = args.load()?;
            let report = run_experiment(&cfg, SplitMode::CrossVal)?;
            println!("wrote {}", cfg.out_dir.join("report.json").display());
            println!("{} folds, {}", report.folds.len(), summarize(&report));
            Ok(())
        }
        Command::Calibrate {
            predictions,
            bins,
            ranges,
            out,
        } => {
            let (_, set) = read_predictions_csv(&predictions)?;
            let (ece_value, table) = ece(&set, bins)?;
            let ace_value = ace(&set, ranges)?;
            let summary = serde_json::json!({
                "ece": ece_value,
                "ace": ace_value,
                "m": bins,
                "r": ranges,
                "n": set.len(),
                "k": set.num_classes(),
            });
            println!("{summary}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let json_path = dir.join("calibration.json");
                fs::write(&json_path, format!("{summary:#}\n"))
                    .map_err(|e| Error::io(&json_path, e))?;
                write_reliability_csv(&dir.join("reliability.csv"), &table)?;
            }
            Ok(())
        }
        Command::Analyze {
            config,
            dict,
            q,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(dict) = dict {
                cfg.dict_path = Some(dict);
            }
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let dict_path = cfg.dict_path.as_ref().ok_or_else(|| {
                Error::Validation("analyze needs a dictionary (--dict or dict_path)".into())
            })?;
            let corpus = corpus::load_corpus(&cfg.corpus)?;
            let dictionary = LexiconDictionary::load(dict_path)?;
            let report = run_linguistic_analysis(&corpus, &dictionary, q)?;
            fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
            let path = cfg.out_dir.join("analysis.csv");
            analysis::write_correlation_csv(&path, &report)?;
            for name in &report.undefined {
                eprintln!("warning: category {name:?} has no defined correlation (constant feature)");
            }
            let significant = report
                .rows
                .iter()
                .filter(|r| r.significant_after_bh)
                .count();
            println!(
                "wrote {}: {} categories, {} significant at q = {q}, {} undefined",
                path.display(),
                report.rows.len(),
                significant,
                report.undefined.len()
            );
            Ok(())
        }
        Command::Gradcheck {
            op,
            seed,
            step,
            tolerance,
        } => {
            let op = match op {
                OpArg::Fusion => CheckOp::Fusion,
                OpArg::Loss => CheckOp::Loss,
            };
            let report = gradient_check(op, seed, step, tolerance);
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.pass {
                return Err(Error::Numeric(format!(
                    "gradient check failed: max relative error {:e} exceeds {:e}",
                    report.max_rel_error, report.tolerance
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests arrive here too; they are not errors
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
