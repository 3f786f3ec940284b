//! Calibration metrics over a set of predicted probability vectors: expected
//! calibration error with equal-width confidence bins, and adaptive
//! calibration error with equal-mass ranges per class.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions with ground truth. Each row is a probability vector over the
/// classes (non-negative, sums to one within 1e-9) plus the true label.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    probs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl PredictionSet {
    pub fn new(probs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<PredictionSet> {
        if probs.is_empty() {
            return Err(Error::Validation("prediction set is empty".into()));
        }
        if probs.len() != labels.len() {
            return Err(Error::dim("prediction labels", probs.len(), labels.len()));
        }
        let num_classes = probs[0].len();
        if num_classes < 2 {
            return Err(Error::Validation(
                "predictions need at least 2 classes".into(),
            ));
        }
        for (i, p) in probs.iter().enumerate() {
            if p.len() != num_classes {
                return Err(Error::dim(
                    &format!("prediction row {i}"),
                    num_classes,
                    p.len(),
                ));
            }
            let mut sum = 0.0;
            for &v in p {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Validation(format!(
                        "prediction row {i} has an entry outside [0, 1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "prediction row {i} sums to {sum}, expected 1"
                )));
            }
            if labels[i] >= num_classes {
                return Err(Error::Validation(format!(
                    "label {} at row {i} out of range for {num_classes} classes",
                    labels[i]
                )));
            }
        }
        Ok(PredictionSet {
            probs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Predicted class: argmax probability, ties to the lowest class index.
    pub fn predicted(&self, i: usize) -> usize {
        let p = &self.probs[i];
        let mut best = 0usize;
        for k in 1..p.len() {
            if p[k] > p[best] {
                best = k;
            }
        }
        best
    }

    /// Confidence: the maximum probability.
    pub fn confidence(&self, i: usize) -> f64 {
        let p = &self.probs[i];
        p.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    pub fn accuracy(&self) -> f64 {
        let correct = (0..self.len())
            .filter(|&i| self.predicted(i) == self.labels[i])
            .count();
        correct as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Equal-width confidence bins for ECE.
    pub num_bins_m: usize,
    /// Equal-mass ranges per class for ACE.
    pub num_ranges_r: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            num_bins_m: 10,
            num_ranges_r: 10,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_bins_m == 0 || self.num_ranges_r == 0 {
            return Err(Error::Validation(
                "calibration bin and range counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One ECE bin: the half-open interval (lo, hi], its population, and the
/// mean accuracy and confidence inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub accuracy: f64,
    pub confidence: f64,
}

/// Expected calibration error with `m` equal-width bins over confidence.
/// Bin i covers ((i-1)/m, i/m]; the first bin additionally picks up any
/// confidence at or below its lower edge so every sample lands somewhere.
pub fn ece(set: &PredictionSet, num_bins: usize) -> Result<(f64, Vec<BinStat>)> {
    if num_bins == 0 {
        return Err(Error::Validation("ECE needs at least one bin".into()));
    }
    let m = num_bins as f64;
    let n = set.len() as f64;
    let mut bins = Vec::with_capacity(num_bins);
    let mut total = 0.0;
    for b in 0..num_bins {
        let lo = b as f64 / m;
        let hi = (b + 1) as f64 / m;
        let mut count = 0usize;
        let mut hits = 0usize;
        let mut conf_sum = 0.0;
        for i in 0..set.len() {
            let c = set.confidence(i);
            if (c > lo || b == 0) && c <= hi {
                count += 1;
                conf_sum += c;
                if set.predicted(i) == set.labels()[i] {
                    hits += 1;
                }
            }
        }
        let (accuracy, confidence) = if count > 0 {
            (hits as f64 / count as f64, conf_sum / count as f64)
        } else {
            (0.0, 0.0)
        };
        if count > 0 {
            total += count as f64 / n * (accuracy - confidence).abs();
        }
        bins.push(BinStat {
            lo,
            hi,
            count,
            accuracy,
            confidence,
        });
    }
    Ok((total, bins))
}

/// Adaptive calibration error: for each class, sort that class's predicted
/// probabilities ascending (stable, so ties keep input order) and split them
/// into `r` contiguous equal-mass ranges; when N is not divisible by r the
/// later ranges take the extra element. The score averages |accuracy -
/// confidence| over all class/range cells.
pub fn ace(set: &PredictionSet, num_ranges: usize) -> Result<f64> {
    if num_ranges == 0 {
        return Err(Error::Validation("ACE needs at least one range".into()));
    }
    let n = set.len();
    if n < num_ranges {
        return Err(Error::Validation(format!(
            "ACE with {num_ranges} ranges needs at least that many predictions, got {n}"
        )));
    }
    let k = set.num_classes();
    let r = num_ranges;
    let base = n / r;
    let extra = n % r;
    let mut total = 0.0;
    for class in 0..k {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| set.probs()[a][class].total_cmp(&set.probs()[b][class]));
        let mut start = 0usize;
        for g in 0..r {
            // the last `extra` ranges take one extra element
            let size = if g < r - extra { base } else { base + 1 };
            let group = &order[start..start + size];
            start += size;
            let mut conf_sum = 0.0;
            let mut hits = 0usize;
            for &i in group {
                conf_sum += set.probs()[i][class];
                if set.labels()[i] == class {
                    hits += 1;
                }
            }
            let accuracy = hits as f64 / size as f64;
            let confidence = conf_sum / size as f64;
            total += (accuracy - confidence).abs();
        }
    }
    Ok(total / (k * r) as f64)
}

/// Per-bin reliability rows for the ECE binning.
pub fn reliability_table(set: &PredictionSet, num_bins: usize) -> Result<Vec<BinStat>> {
    Ok(ece(set, num_bins)?.1)
}

/// Read a `id,true_label,p0,...,p{K-1}` CSV back into a prediction set.
pub fn read_predictions_csv(path: &Path) -> Result<(Vec<String>, PredictionSet)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.len() < 4 || headers.get(0) != Some("id") || headers.get(1) != Some("true_label") {
        return Err(Error::Validation(format!(
            "{}: expected header `id,true_label,p0,...`",
            path.display()
        )));
    }
    let k = headers.len() - 2;
    let mut ids = Vec::new();
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != k + 2 {
            return Err(Error::Validation(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                record.len(),
                k + 2
            )));
        }
        ids.push(record[0].to_string());
        let label: usize = record[1].trim().parse().map_err(|_| {
            Error::Validation(format!(
                "{}: row {}: bad true_label {:?}",
                path.display(),
                i + 2,
                &record[1]
            ))
        })?;
        labels.push(label);
        let mut row = Vec::with_capacity(k);
        for f in 2..record.len() {
            let v: f64 = record[f].trim().parse().map_err(|_| {
                Error::Validation(format!(
                    "{}: row {}: bad probability {:?}",
                    path.display(),
                    i + 2,
                    &record[f]
                ))
            })?;
            row.push(v);
        }
        probs.push(row);
    }
    Ok((ids, PredictionSet::new(probs, labels)?))
}

/// Write predictions as `id,true_label,p0,...,p{K-1}`.
pub fn write_predictions_csv(path: &Path, ids: &[String], set: &PredictionSet) -> Result<()> {
    if ids.len() != set.len() {
        return Err(Error::dim("prediction ids", set.len(), ids.len()));
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["id".to_string(), "true_label".to_string()];
    header.extend((0..set.num_classes()).map(|k| format!("p{k}")));
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for i in 0..set.len() {
        let mut record = vec![ids[i].clone(), set.labels()[i].to_string()];
        record.extend(set.probs()[i].iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write the reliability table as `bin_lo,bin_hi,count,accuracy,confidence`.
pub fn write_reliability_csv(path: &Path, bins: &[BinStat]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["bin_lo", "bin_hi", "count", "accuracy", "confidence"])
        .map_err(|e| Error::csv(path, e))?;
    for b in bins {
        writer
            .write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                b.accuracy.to_string(),
                b.confidence.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
