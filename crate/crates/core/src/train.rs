//! Training loop: Adam, a step learning-rate schedule (decay by gamma every
//! step_size epochs), per-epoch validation loss, min-val-loss checkpointing,
//! and optional early stopping. Deterministic for a given seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{smooth_label, smoothed_ce_from_logits, SmoothingConfig};
use crate::model::{toy_backward, toy_forward, ModelDims, ToyGradients, ToyModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Run all epochs, return the parameters from the epoch with the lowest
    /// validation loss.
    BestValLossCheckpoint,
    /// Stop once the validation loss has not improved for `patience` epochs.
    EarlyStopping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub step_size: usize,
    pub gamma: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub selection_mode: SelectionMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            step_size: 5,
            gamma: 0.1,
            batch_size: 8,
            max_epochs: 30,
            patience: 7,
            selection_mode: SelectionMode::BestValLossCheckpoint,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::Validation(
                "learning rate and gamma must be positive".into(),
            ));
        }
        if self.step_size == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Validation(
                "step size, batch size, and max epochs must be positive".into(),
            ));
        }
        if self.selection_mode == SelectionMode::EarlyStopping && self.patience == 0 {
            return Err(Error::Validation(
                "early stopping needs a positive patience".into(),
            ));
        }
        Ok(())
    }
}

/// lr(epoch) = lr0 * gamma^floor((epoch - 1) / step_size), epochs 1-indexed.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    debug_assert!(epoch >= 1);
    let decays = (epoch - 1) / cfg.step_size;
    cfg.learning_rate * cfg.gamma.powi(decays as i32)
}

/// 1-indexed argmin over validation losses, ties broken by earliest epoch.
pub fn select_best_epoch(val_losses: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in val_losses.iter().enumerate() {
        if v < val_losses[best] {
            best = i;
        }
    }
    best + 1
}

/// One pre-tokenized training sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the smallest validation loss.
    pub selected: ToyModelParams,
    /// Parameters after the last trained epoch (differs from `selected`
    /// whenever the best epoch was not the last).
    pub final_epoch: ToyModelParams,
    pub history: Vec<EpochStats>,
    pub selected_epoch: usize,
    pub stopped_early: bool,
}

/// Adam with bias correction over the model's flat tensor list.
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(shapes: &[usize]) -> Self {
        Adam {
            m: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            v: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// splitmix64-style mixing for derived per-sample seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn check_samples(name: &str, set: &[Sample], dims: &ModelDims) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Validation(format!("{name} set is empty")));
    }
    for (i, s) in set.iter().enumerate() {
        if s.tokens.is_empty() {
            return Err(Error::Validation(format!("{name} sample {i} has no tokens")));
        }
        if s.features.len() != dims.feature_dim {
            return Err(Error::dim(
                &format!("{name} sample {i} features"),
                dims.feature_dim,
                s.features.len(),
            ));
        }
        if s.label >= dims.num_classes {
            return Err(Error::Validation(format!(
                "{name} sample {i} label {} out of range",
                s.label
            )));
        }
    }
    Ok(())
}

fn mean_loss(
    set: &[Sample],
    params: &ToyModelParams,
    smoothing: &SmoothingConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for s in set {
        let (_, cache) = toy_forward(&s.tokens, &s.features, params, 0.0, false, 0)?;
        let y_ls = smooth_label(s.label, smoothing)?;
        let (loss, _, _) = smoothed_ce_from_logits(&cache.logits, &y_ls);
        total += loss;
    }
    Ok(total / set.len() as f64)
}

/// Train the toy model. The validation loss uses the same smoothed objective
/// as training; checkpointing keeps the parameters of the best epoch.
#[allow(clippy::too_many_arguments)]
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    dims: ModelDims,
    fusion_beta: f64,
    dropout_rate: f64,
    cfg: &TrainConfig,
    smoothing: &SmoothingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    dims.validate()?;
    if smoothing.num_classes != dims.num_classes {
        return Err(Error::dim(
            "smoothing classes",
            dims.num_classes,
            smoothing.num_classes,
        ));
    }
    check_samples("train", train_set, &dims)?;
    check_samples("validation", val_set, &dims)?;

    let mut params = ToyModelParams::init(dims, fusion_beta, cfg.seed)?;
    let shapes: Vec<usize> = params.tensors_mut().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(&shapes);
    let mut grads = ToyGradients::zeros(&dims);

    let mut history = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut epochs_since_best = 0usize;
    let mut stopped_early = false;

    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let lr = lr_at_epoch(cfg, epoch);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0xEC0C + epoch as u64));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let weight = 1.0 / batch.len() as f64;
            for &si in batch {
                let s = &train_set[si];
                let sample_seed = mix_seed(cfg.seed, (epoch as u64) << 32 | si as u64);
                let (_, cache) =
                    toy_forward(&s.tokens, &s.features, &params, dropout_rate, true, sample_seed)?;
                let y_ls = smooth_label(s.label, smoothing)?;
                let (loss, _, mut d_logits) = smoothed_ce_from_logits(&cache.logits, &y_ls);
                epoch_loss += loss;
                for g in d_logits.iter_mut() {
                    *g *= weight;
                }
                toy_backward(&cache, &params, &d_logits, &mut grads)?;
            }
            adam.step(&mut params.tensors_mut(), &grads.tensors(), lr);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss became non-finite at epoch {epoch}"
            )));
        }

        let val_loss = mean_loss(val_set, &params, smoothing)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "validation loss became non-finite at epoch {epoch}"
            )));
        }
        history.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if cfg.selection_mode == SelectionMode::EarlyStopping
                && epochs_since_best >= cfg.patience
            {
                stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        selected: best_params,
        final_epoch: params,
        history,
        selected_epoch: best_epoch,
        stopped_early,
    })
}
