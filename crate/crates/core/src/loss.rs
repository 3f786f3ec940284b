//! Label smoothing and the smoothed cross-entropy loss. The loss is always
//! evaluated through log-sum-exp in logit space, so a probability of exactly
//! zero can push the loss to infinity but never produces NaN, and the logit
//! gradient is the clean p - y_smoothed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha_smooth: f64,
    pub num_classes: usize,
}

impl SmoothingConfig {
    pub fn new(alpha_smooth: f64, num_classes: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha_smooth) {
            return Err(Error::Validation(format!(
                "smoothing alpha {alpha_smooth} outside [0,1)"
            )));
        }
        if num_classes < 2 {
            return Err(Error::Validation(
                "smoothing needs at least two classes".into(),
            ));
        }
        Ok(SmoothingConfig {
            alpha_smooth,
            num_classes,
        })
    }
}

fn check_one_hot(y: &[f64], k: usize) -> Result<usize> {
    if y.len() != k {
        return Err(Error::dim("target vector", k, y.len()));
    }
    let mut hot = None;
    for (i, &v) in y.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::Validation("target is not one-hot: two ones".into()));
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::Validation(format!(
                "target is not one-hot: entry {i} = {v}"
            )));
        }
    }
    hot.ok_or_else(|| Error::Validation("target is not one-hot: no one".into()))
}

/// y (1 - alpha) + alpha / K, elementwise over a one-hot target.
pub fn smooth_targets(y: &[f64], cfg: &SmoothingConfig) -> Result<Vec<f64>> {
    check_one_hot(y, cfg.num_classes)?;
    Ok(y.iter()
        .map(|&v| v * (1.0 - cfg.alpha_smooth) + cfg.alpha_smooth / cfg.num_classes as f64)
        .collect())
}

/// Smoothed target straight from a class index.
pub fn smooth_label(label: usize, cfg: &SmoothingConfig) -> Result<Vec<f64>> {
    if label >= cfg.num_classes {
        return Err(Error::Validation(format!(
            "label {label} out of range for {} classes",
            cfg.num_classes
        )));
    }
    let uniform = cfg.alpha_smooth / cfg.num_classes as f64;
    let mut t = vec![uniform; cfg.num_classes];
    t[label] += 1.0 - cfg.alpha_smooth;
    Ok(t)
}

/// Core logit-space evaluation: loss = sum_k -y_k log softmax(z)_k and its
/// gradient softmax(z) - y. Terms with y_k = 0 are skipped, so -inf logits
/// (log of an exact zero probability) cannot poison the sum with NaN.
pub fn smoothed_ce_from_logits(logits: &[f64], y_smoothed: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    debug_assert_eq!(logits.len(), y_smoothed.len());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let probs: Vec<f64> = logits.iter().map(|&z| (z - lse).exp()).collect();
    let mut loss = 0.0;
    for (z, y) in logits.iter().zip(y_smoothed) {
        if *y > 0.0 {
            loss += y * (lse - z);
        }
    }
    let d_logits: Vec<f64> = probs.iter().zip(y_smoothed).map(|(p, y)| p - y).collect();
    (loss, probs, d_logits)
}

/// Smoothed cross-entropy of a probability vector against a one-hot target.
/// Returns the loss and its gradient with respect to the logits the
/// probabilities came from.
pub fn smoothed_cross_entropy(
    p: &[f64],
    y: &[f64],
    cfg: &SmoothingConfig,
) -> Result<(f64, Vec<f64>)> {
    let k = cfg.num_classes;
    if p.len() != k {
        return Err(Error::dim("probability vector", k, p.len()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Validation("probability outside [0,1]".into()));
    }
    let y_ls = smooth_targets(y, cfg)?;
    let logits: Vec<f64> = p.iter().map(|&v| v.ln()).collect(); // ln 0 = -inf is fine
    let (loss, _, d_logits) = smoothed_ce_from_logits(&logits, &y_ls);
    Ok((loss, d_logits))
}
