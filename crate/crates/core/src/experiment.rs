//! End-to-end experiments: corpus and feature loading, stratified splits,
//! toy-model training per split, evaluation (classification metrics, ECE,
//! ACE), and machine-readable reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::analysis::{classification_metrics, linguistic_analysis, CorrelationReport, MetricReport};
use crate::calibration::{
    ace, ece, write_predictions_csv, write_reliability_csv, BinStat, CalibrationConfig,
    PredictionSet,
};
use crate::corpus::{load_corpus, Corpus};
use crate::error::{Error, Result};
use crate::features::{
    goss, load_dense_features, load_topic_matrix, normalize_sum_to_one, LexiconDictionary,
};
use crate::loss::SmoothingConfig;
use crate::matrix::Matrix;
use crate::model::{toy_forward, ModelDims, ToyModelParams};
use crate::split::{stratified_holdout, stratified_kfold, stratified_validation_split};
use crate::tokenizer::{token_ids, DEFAULT_VOCAB};
use crate::train::{mix_seed, train, EpochStats, Sample, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;
/// Validation fraction carved out of every training pool.
pub const VAL_FRACTION: f64 = 0.1;
/// Test fraction of the holdout split.
pub const TEST_FRACTION: f64 = 0.2;

/// Where the auxiliary feature vectors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    /// Emotion/sentiment lexicon proportions from a category dictionary.
    Lexicon,
    /// Category dictionary proportions (same mechanics as `lexicon`; the
    /// separate name mirrors LIWC-style dictionaries).
    Dictionary,
    /// Standardized topic columns from a topic-proportion file.
    Goss,
    /// Dense per-document vectors loaded from file, used as-is.
    Dense,
    /// All-zero vectors: the feature path carries no information.
    #[serde(rename = "none")]
    NoFeatures,
}

/// How the corpus is split for training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    #[serde(rename = "fixed-test")]
    FixedTest,
    #[serde(rename = "holdout-80-20")]
    Holdout,
    #[serde(rename = "stratified-5-fold")]
    CrossVal,
}

fn default_alpha() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.0001
}
fn default_dropout() -> f64 {
    0.1
}
fn default_vocab() -> usize {
    DEFAULT_VOCAB
}
fn default_embed_dim() -> usize {
    32
}
fn default_none_dim() -> usize {
    8
}
fn default_num_folds() -> usize {
    5
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    /// Separate evaluation corpus; `train` runs in fixed-test mode when set.
    #[serde(default)]
    pub test_corpus: Option<PathBuf>,
    pub feature_set: FeatureSet,
    /// Category dictionary, required for `lexicon` and `dictionary`.
    #[serde(default)]
    pub dict_path: Option<PathBuf>,
    /// Feature CSV, required for `goss` (topics) and `dense` (vectors).
    #[serde(default)]
    pub features_path: Option<PathBuf>,
    /// Label-smoothing strength.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fusion shift cap.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Post-fusion dropout rate.
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    pub vocab: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Feature width used by `feature_set = "none"`.
    #[serde(default = "default_none_dim")]
    pub none_dim: usize,
    #[serde(default = "default_num_folds")]
    pub num_folds: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Minimal config for a corpus with no auxiliary features.
    pub fn new(corpus: impl Into<PathBuf>, feature_set: FeatureSet) -> ExperimentConfig {
        ExperimentConfig {
            corpus: corpus.into(),
            test_corpus: None,
            feature_set,
            dict_path: None,
            features_path: None,
            alpha: default_alpha(),
            beta: default_beta(),
            dropout: default_dropout(),
            vocab: default_vocab(),
            embed_dim: default_embed_dim(),
            none_dim: default_none_dim(),
            num_folds: default_num_folds(),
            train: TrainConfig::default(),
            calibration: CalibrationConfig::default(),
            out_dir: default_out_dir(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::Validation(format!(
                "fusion beta must be positive, got {}",
                self.beta
            )));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!(
                "smoothing alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.vocab < 2 || self.embed_dim == 0 {
            return Err(Error::Validation(
                "vocab must be at least 2 and embed_dim positive".into(),
            ));
        }
        if self.num_folds < 2 {
            return Err(Error::Validation("num_folds must be at least 2".into()));
        }
        match self.feature_set {
            FeatureSet::Lexicon | FeatureSet::Dictionary => {
                if self.dict_path.is_none() {
                    return Err(Error::Validation(format!(
                        "feature set {:?} needs dict_path",
                        self.feature_set
                    )));
                }
            }
            FeatureSet::Goss | FeatureSet::Dense => {
                if self.features_path.is_none() {
                    return Err(Error::Validation(format!(
                        "feature set {:?} needs features_path",
                        self.feature_set
                    )));
                }
            }
            FeatureSet::NoFeatures => {
                if self.none_dim == 0 {
                    return Err(Error::Validation(
                        "none_dim must be positive for feature set \"none\"".into(),
                    ));
                }
            }
        }
        for path in [
            Some(&self.corpus),
            self.test_corpus.as_ref(),
            self.dict_path.as_ref(),
            self.features_path.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(Error::Validation(format!(
                    "referenced file does not exist: {}",
                    path.display()
                )));
            }
        }
        self.train.validate()?;
        self.calibration.validate()
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Build the per-document feature matrix for the configured feature set.
pub fn prepare_features(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<Matrix> {
    match cfg.feature_set {
        FeatureSet::Lexicon | FeatureSet::Dictionary => {
            // validate() guarantees the path is present
            let dict = LexiconDictionary::load(cfg.dict_path.as_ref().unwrap())?;
            let rows: Vec<Vec<f64>> = corpus
                .records
                .iter()
                .map(|r| dict.features(&r.text))
                .collect();
            Matrix::from_rows(&rows)
        }
        FeatureSet::Goss => {
            let topics = load_topic_matrix(cfg.features_path.as_ref().unwrap(), &corpus.ids())?;
            goss(&topics)
        }
        FeatureSet::Dense => {
            load_dense_features(cfg.features_path.as_ref().unwrap(), &corpus.ids())
        }
        FeatureSet::NoFeatures => Ok(Matrix::zeros(corpus.len(), cfg.none_dim)),
    }
}

fn make_samples(corpus: &Corpus, features: &Matrix, vocab: usize) -> Vec<Sample> {
    corpus
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| Sample {
            tokens: token_ids(&r.text, vocab),
            features: features.row(i).to_vec(),
            label: r.label,
        })
        .collect()
}

/// Evaluation-mode predictions for a sample set.
pub fn predict_set(params: &ToyModelParams, samples: &[Sample]) -> Result<PredictionSet> {
    let mut probs = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        let (p, _) = toy_forward(&s.tokens, &s.features, params, 0.0, false, 0)?;
        probs.push(p);
        labels.push(s.label);
    }
    PredictionSet::new(probs, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub selected_epoch: usize,
    pub stopped_early: bool,
    pub history: Vec<EpochStats>,
    pub metrics: MetricReport,
    pub ece: f64,
    pub ace: f64,
}

/// Arithmetic means over folds (binary metric means only when K = 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub metrics: MetricReport,
    pub ece: f64,
    pub ace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub mode: SplitMode,
    /// The only field that changes between reruns of the same config.
    pub timestamp_unix: u64,
    pub config: ExperimentConfig,
    pub label_mapping: Vec<String>,
    pub feature_dim: usize,
    pub folds: Vec<FoldReport>,
    pub mean: MeanReport,
}

/// Per-fold outputs that back the report: predictions, reliability bins, and
/// the selected model.
#[derive(Debug, Clone)]
pub struct FoldArtifact {
    pub fold: usize,
    pub ids: Vec<String>,
    pub predictions: PredictionSet,
    pub reliability: Vec<BinStat>,
    pub model: ToyModelParams,
}

fn with_fold_context(e: Error, fold: usize) -> Error {
    match e {
        Error::Validation(m) => Error::Validation(format!("fold {fold}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("fold {fold}: {m}")),
        other => other,
    }
}

fn gather(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    fold: usize,
    train_set: &[Sample],
    val_set: &[Sample],
    test_set: &[Sample],
    test_ids: Vec<String>,
    dims: ModelDims,
    cfg: &ExperimentConfig,
) -> Result<(FoldReport, FoldArtifact)> {
    let mut tc = cfg.train;
    tc.seed = mix_seed(cfg.train.seed, 0xF01D + fold as u64);
    let smoothing = SmoothingConfig::new(cfg.alpha, dims.num_classes)?;
    let outcome = train(
        train_set,
        val_set,
        dims,
        cfg.beta,
        cfg.dropout,
        &tc,
        &smoothing,
    )
    .map_err(|e| with_fold_context(e, fold))?;

    let set = predict_set(&outcome.selected, test_set).map_err(|e| with_fold_context(e, fold))?;
    let predicted: Vec<usize> = (0..set.len()).map(|i| set.predicted(i)).collect();
    let metrics = classification_metrics(set.labels(), &predicted, dims.num_classes)?;
    let (ece_value, bins) = ece(&set, cfg.calibration.num_bins_m)?;
    let ace_value =
        ace(&set, cfg.calibration.num_ranges_r).map_err(|e| with_fold_context(e, fold))?;

    let report = FoldReport {
        fold,
        train_size: train_set.len(),
        val_size: val_set.len(),
        test_size: test_set.len(),
        selected_epoch: outcome.selected_epoch,
        stopped_early: outcome.stopped_early,
        history: outcome.history,
        metrics,
        ece: ece_value,
        ace: ace_value,
    };
    let artifact = FoldArtifact {
        fold,
        ids: test_ids,
        predictions: set,
        reliability: bins,
        model: outcome.selected,
    };
    Ok((report, artifact))
}

fn mean_option(folds: &[FoldReport], f: impl Fn(&MetricReport) -> Option<f64>) -> Option<f64> {
    let values: Option<Vec<f64>> = folds.iter().map(|r| f(&r.metrics)).collect();
    values.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

fn mean_report(folds: &[FoldReport]) -> MeanReport {
    let n = folds.len() as f64;
    let mean = |f: &dyn Fn(&FoldReport) -> f64| folds.iter().map(f).sum::<f64>() / n;
    MeanReport {
        metrics: MetricReport {
            accuracy: mean(&|r| r.metrics.accuracy),
            precision: mean_option(folds, |m| m.precision),
            recall: mean_option(folds, |m| m.recall),
            f1: mean_option(folds, |m| m.f1),
            weighted_precision: mean(&|r| r.metrics.weighted_precision),
            weighted_recall: mean(&|r| r.metrics.weighted_recall),
            weighted_f1: mean(&|r| r.metrics.weighted_f1),
        },
        ece: mean(&|r| r.ece),
        ace: mean(&|r| r.ace),
    }
}

/// Map test-corpus labels onto the training corpus's class order.
fn align_test_labels(train: &Corpus, test: &Corpus) -> Result<Vec<usize>> {
    test.records
        .iter()
        .map(|r| {
            let raw = &test.label_names[r.label];
            train
                .label_names
                .iter()
                .position(|n| n == raw)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "test corpus label {raw:?} does not occur in the training corpus"
                    ))
                })
        })
        .collect()
}

/// Run the configured experiment on an already-loaded corpus. Returns the
/// report and the per-fold artifacts (predictions, reliability, model).
pub fn run_with_corpus(
    corpus: &Corpus,
    test_corpus: Option<&Corpus>,
    mode: SplitMode,
    cfg: &ExperimentConfig,
) -> Result<(ExperimentReport, Vec<FoldArtifact>)> {
    let features = prepare_features(corpus, cfg)?;
    let feature_dim = features.cols;
    let samples = make_samples(corpus, &features, cfg.vocab);
    let labels = corpus.labels();
    let num_classes = corpus.num_classes;
    let dims = ModelDims {
        vocab: cfg.vocab,
        embed_dim: cfg.embed_dim,
        feature_dim,
        num_classes,
    };

    let mut folds = Vec::new();
    let mut artifacts = Vec::new();
    match mode {
        SplitMode::CrossVal => {
            let assignment =
                stratified_kfold(&labels, num_classes, cfg.num_folds, cfg.train.seed)?;
            for fold in 0..cfg.num_folds {
                let test_idx: Vec<usize> = (0..samples.len())
                    .filter(|&i| assignment[i] == fold)
                    .collect();
                let pool: Vec<usize> = (0..samples.len())
                    .filter(|&i| assignment[i] != fold)
                    .collect();
                let (train_idx, val_idx) = stratified_validation_split(
                    &labels,
                    num_classes,
                    &pool,
                    VAL_FRACTION,
                    mix_seed(cfg.train.seed, 0x7A11 + fold as u64),
                )
                .map_err(|e| with_fold_context(e, fold))?;
                let test_ids: Vec<String> =
                    test_idx.iter().map(|&i| corpus.records[i].id.clone()).collect();
                let (report, artifact) = run_fold(
                    fold,
                    &gather(&samples, &train_idx),
                    &gather(&samples, &val_idx),
                    &gather(&samples, &test_idx),
                    test_ids,
                    dims,
                    cfg,
                )?;
                folds.push(report);
                artifacts.push(artifact);
            }
        }
        SplitMode::Holdout => {
            let (pool, test_idx) =
                stratified_holdout(&labels, num_classes, TEST_FRACTION, cfg.train.seed)?;
            let (train_idx, val_idx) = stratified_validation_split(
                &labels,
                num_classes,
                &pool,
                VAL_FRACTION,
                mix_seed(cfg.train.seed, 0x7A11),
            )?;
            let test_ids: Vec<String> =
                test_idx.iter().map(|&i| corpus.records[i].id.clone()).collect();
            let (report, artifact) = run_fold(
                0,
                &gather(&samples, &train_idx),
                &gather(&samples, &val_idx),
                &gather(&samples, &test_idx),
                test_ids,
                dims,
                cfg,
            )?;
            folds.push(report);
            artifacts.push(artifact);
        }
        SplitMode::FixedTest => {
            let test = test_corpus.ok_or_else(|| {
                Error::Validation("fixed-test mode needs a test corpus".into())
            })?;
            let test_labels = align_test_labels(corpus, test)?;
            let test_features = prepare_features(test, cfg)?;
            if test_features.cols != feature_dim {
                return Err(Error::dim(
                    "test corpus feature width",
                    feature_dim,
                    test_features.cols,
                ));
            }
            let mut test_set = make_samples(test, &test_features, cfg.vocab);
            for (s, &l) in test_set.iter_mut().zip(&test_labels) {
                s.label = l;
            }
            let all: Vec<usize> = (0..samples.len()).collect();
            let (train_idx, val_idx) = stratified_validation_split(
                &labels,
                num_classes,
                &all,
                VAL_FRACTION,
                mix_seed(cfg.train.seed, 0x7A11),
            )?;
            let (report, artifact) = run_fold(
                0,
                &gather(&samples, &train_idx),
                &gather(&samples, &val_idx),
                &test_set,
                test.ids(),
                dims,
                cfg,
            )?;
            folds.push(report);
            artifacts.push(artifact);
        }
    }

    let mean = mean_report(&folds);
    let timestamp_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        mode,
        timestamp_unix,
        config: cfg.clone(),
        label_mapping: corpus.label_names.clone(),
        feature_dim,
        folds,
        mean,
    };
    Ok((report, artifacts))
}

/// Load the configured corpora, run the experiment, and write the report
/// plus per-fold predictions and reliability CSVs (and the trained model for
/// single-split modes) into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig, mode: SplitMode) -> Result<ExperimentReport> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.corpus)?;
    let test_corpus = match (&cfg.test_corpus, mode) {
        (Some(path), SplitMode::FixedTest) => Some(load_corpus(path)?),
        (None, SplitMode::FixedTest) => {
            return Err(Error::Validation(
                "fixed-test mode needs test_corpus in the config".into(),
            ))
        }
        _ => None,
    };
    let (report, artifacts) = run_with_corpus(&corpus, test_corpus.as_ref(), mode, cfg)?;

    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let report_path = cfg.out_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;
    for artifact in &artifacts {
        let pred_path = cfg.out_dir.join(format!("predictions_fold{}.csv", artifact.fold));
        write_predictions_csv(&pred_path, &artifact.ids, &artifact.predictions)?;
        let rel_path = cfg.out_dir.join(format!("reliability_fold{}.csv", artifact.fold));
        write_reliability_csv(&rel_path, &artifact.reliability)?;
    }
    if mode != SplitMode::CrossVal {
        // single split: persist the selected model
        artifacts[0].model.save(&cfg.out_dir.join("model.json"))?;
    }
    Ok(report)
}

/// Dictionary features, sum-to-1 normalized per document, correlated with
/// the binary label and BH-corrected at rate `q`.
pub fn run_linguistic_analysis(
    corpus: &Corpus,
    dict: &LexiconDictionary,
    q: f64,
) -> Result<CorrelationReport> {
    if corpus.num_classes != 2 {
        return Err(Error::Validation(format!(
            "linguistic analysis needs a binary corpus, got {} classes",
            corpus.num_classes
        )));
    }
    let rows: Vec<Vec<f64>> = corpus
        .records
        .iter()
        .map(|r| normalize_sum_to_one(&dict.features(&r.text)))
        .collect::<Result<_>>()?;
    let features = Matrix::from_rows(&rows)?;
    linguistic_analysis(&features, dict.categories(), &corpus.labels(), q)
}
