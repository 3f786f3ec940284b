//! Classification metrics (binary and support-weighted multiclass) and the
//! linguistic feature analysis: point-biserial correlation of each feature
//! against a binary label with Benjamini-Hochberg multiple-test correction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats::student_t_two_sided;

/// Performance summary. The plain binary fields take label 1 as the positive
/// class and are only present for two-class problems; the weighted fields are
/// support-weighted means over per-class values and exist for any K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

/// Per-class precision/recall/F1 with the zero-division conventions: a class
/// never predicted has precision 0, a class with no true samples has recall
/// 0, and F1 is 0 when precision and recall are both 0.
fn per_class_prf(
    true_labels: &[usize],
    predicted: &[usize],
    class: usize,
) -> (f64, f64, f64, usize) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut support = 0usize;
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t == class {
            support += 1;
            if p == class {
                tp += 1;
            } else {
                fn_ += 1;
            }
        } else if p == class {
            fp += 1;
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1, support)
}

pub fn classification_metrics(
    true_labels: &[usize],
    predicted: &[usize],
    num_classes: usize,
) -> Result<MetricReport> {
    if true_labels.len() != predicted.len() {
        return Err(Error::dim(
            "predicted labels",
            true_labels.len(),
            predicted.len(),
        ));
    }
    if true_labels.is_empty() {
        return Err(Error::Validation("no labels to score".into()));
    }
    if num_classes < 2 {
        return Err(Error::Validation("metrics need at least 2 classes".into()));
    }
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::Validation(format!(
                "label out of range for {num_classes} classes"
            )));
        }
    }
    let n = true_labels.len() as f64;
    let correct = true_labels
        .iter()
        .zip(predicted)
        .filter(|(t, p)| t == p)
        .count();
    let accuracy = correct as f64 / n;

    let mut weighted_precision = 0.0;
    let mut weighted_recall = 0.0;
    let mut weighted_f1 = 0.0;
    let mut binary = None;
    for class in 0..num_classes {
        let (p, r, f1, support) = per_class_prf(true_labels, predicted, class);
        let w = support as f64 / n;
        weighted_precision += w * p;
        weighted_recall += w * r;
        weighted_f1 += w * f1;
        if num_classes == 2 && class == 1 {
            binary = Some((p, r, f1));
        }
    }
    Ok(MetricReport {
        accuracy,
        precision: binary.map(|b| b.0),
        recall: binary.map(|b| b.1),
        f1: binary.map(|b| b.2),
        weighted_precision,
        weighted_recall,
        weighted_f1,
    })
}

/// Point-biserial correlation of `values` against a binary label, plus the
/// two-sided p-value from the exact Student-t distribution with n-2 degrees
/// of freedom. Equals the Pearson correlation of values against the labels
/// coded 0/1 (population standard deviation).
pub fn point_biserial(values: &[f64], labels: &[usize]) -> Result<(f64, f64)> {
    let n = values.len();
    if labels.len() != n {
        return Err(Error::dim("correlation labels", n, labels.len()));
    }
    if n < 3 {
        return Err(Error::Validation(
            "correlation undefined: need at least 3 samples".into(),
        ));
    }
    let mut n1 = 0usize;
    let mut sum1 = 0.0;
    let mut sum0 = 0.0;
    for (&v, &l) in values.iter().zip(labels) {
        if !v.is_finite() {
            return Err(Error::NonFinite("correlation values".into()));
        }
        match l {
            0 => sum0 += v,
            1 => {
                n1 += 1;
                sum1 += v;
            }
            _ => {
                return Err(Error::Validation(format!(
                    "correlation labels must be 0 or 1, got {l}"
                )))
            }
        }
    }
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Validation(
            "correlation undefined: labels contain only one group".into(),
        ));
    }
    let nf = n as f64;
    let mean = (sum0 + sum1) / nf;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
    if var == 0.0 {
        return Err(Error::Validation(
            "correlation undefined: values are constant".into(),
        ));
    }
    let m1 = sum1 / n1 as f64;
    let m0 = sum0 / n0 as f64;
    let r = ((m1 - m0) / var.sqrt()) * ((n1 * n0) as f64 / (nf * nf)).sqrt();
    let r = r.clamp(-1.0, 1.0);
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_two_sided(t, df)?
    };
    Ok((r, p))
}

/// Benjamini-Hochberg step-up procedure: with the p-values sorted ascending,
/// find the largest rank k with p_(k) <= k*q/m and reject every hypothesis
/// whose p-value is at most p_(k). Identical p-values always share a
/// decision. Returns per-input rejection flags.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Result<Vec<bool>> {
    if p_values.is_empty() {
        return Err(Error::Validation("no p-values to correct".into()));
    }
    if !q.is_finite() || q <= 0.0 || q > 1.0 {
        return Err(Error::Validation(format!(
            "false-discovery rate must lie in (0, 1], got {q}"
        )));
    }
    for &p in p_values {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!("p-value {p} outside [0, 1]")));
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut threshold = None;
    for k in (1..=m).rev() {
        if p_values[order[k - 1]] <= k as f64 * q / m as f64 {
            threshold = Some(p_values[order[k - 1]]);
            break;
        }
    }
    let mut reject = vec![false; m];
    if let Some(thr) = threshold {
        for (i, &p) in p_values.iter().enumerate() {
            reject[i] = p <= thr;
        }
    }
    Ok(reject)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Larger feature values go with label 1.
    PositiveClass,
    /// Larger feature values go with label 0.
    NegativeClass,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::PositiveClass => "positive-class",
            Direction::NegativeClass => "negative-class",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub feature: String,
    pub r_pb: f64,
    pub p_value: f64,
    pub significant_after_bh: bool,
    pub direction: Direction,
}

/// Correlation analysis output. `rows` hold every feature with a defined
/// correlation, sorted by |r_pb| descending (ties by feature name);
/// `undefined` lists features whose correlation does not exist (constant
/// columns), which take no part in the correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub q: f64,
    pub rows: Vec<CorrelationRow>,
    pub undefined: Vec<String>,
}

pub fn linguistic_analysis(
    features: &Matrix,
    feature_names: &[String],
    labels: &[usize],
    q: f64,
) -> Result<CorrelationReport> {
    if features.rows != labels.len() {
        return Err(Error::dim("analysis labels", features.rows, labels.len()));
    }
    if features.cols != feature_names.len() {
        return Err(Error::dim(
            "feature names",
            features.cols,
            feature_names.len(),
        ));
    }
    if features.cols == 0 {
        return Err(Error::Validation("no feature columns to analyze".into()));
    }
    if features.rows < 3 {
        return Err(Error::Validation(
            "analysis needs at least 3 samples".into(),
        ));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Validation("analysis labels must be 0 or 1".into()));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Validation(
            "analysis needs both label groups present".into(),
        ));
    }

    // With sample count and label groups checked above, the only failure
    // point_biserial can hit per column is a constant column.
    let mut defined: Vec<(usize, f64, f64)> = Vec::new();
    let mut undefined = Vec::new();
    for c in 0..features.cols {
        let column = features.column(c);
        match point_biserial(&column, labels) {
            Ok((r, p)) => defined.push((c, r, p)),
            Err(Error::Validation(_)) => undefined.push(feature_names[c].clone()),
            Err(e) => return Err(e),
        }
    }

    let flags = if defined.is_empty() {
        Vec::new()
    } else {
        let ps: Vec<f64> = defined.iter().map(|d| d.2).collect();
        benjamini_hochberg(&ps, q)?
    };

    let mut rows: Vec<CorrelationRow> = defined
        .iter()
        .zip(&flags)
        .map(|(&(c, r, p), &significant)| CorrelationRow {
            feature: feature_names[c].clone(),
            r_pb: r,
            p_value: p,
            significant_after_bh: significant,
            direction: if r >= 0.0 {
                Direction::PositiveClass
            } else {
                Direction::NegativeClass
            },
        })
        .collect();
    rows.sort_by(|a, b| {
        b.r_pb
            .abs()
            .total_cmp(&a.r_pb.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(CorrelationReport {
        q,
        rows,
        undefined,
    })
}

/// Write the correlation rows as CSV with columns
/// `class_direction,feature,correlation,p_value,significant`.
pub fn write_correlation_csv(path: &Path, report: &CorrelationReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record([
            "class_direction",
            "feature",
            "correlation",
            "p_value",
            "significant",
        ])
        .map_err(|e| Error::csv(path, e))?;
    for row in &report.rows {
        writer
            .write_record([
                row.direction.as_str().to_string(),
                row.feature.clone(),
                row.r_pb.to_string(),
                row.p_value.to_string(),
                row.significant_after_bh.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let labels = vec![0, 1, 0, 1, 1];
        let m = classification_metrics(&labels, &labels, 2).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.recall, Some(1.0));
        assert_eq!(m.f1, Some(1.0));
        assert_eq!(m.weighted_f1, 1.0);
    }

    #[test]
    fn binary_hand_example() {
        let m = classification_metrics(&[1, 1, 0, 0], &[1, 0, 0, 0], 2).unwrap();
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.recall, Some(0.5));
        assert!((m.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.75);
    }

    #[test]
    fn weighted_hand_example() {
        // per-class F1 (1.0, 0.5, 0.0) with supports (2, 2, 4)
        let true_labels = [0, 0, 1, 1, 2, 2, 2, 2];
        let predicted = [0, 0, 1, 1, 1, 1, 1, 1];
        let m = classification_metrics(&true_labels, &predicted, 3).unwrap();
        assert!((m.weighted_f1 - 0.375).abs() < 1e-15);
        assert!((m.weighted_recall - 0.5).abs() < 1e-15);
        assert!((m.weighted_precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn zero_division_conventions() {
        // class 1 never predicted -> precision 0, and its recall is 0 too
        let m = classification_metrics(&[1, 1, 0], &[0, 0, 0], 2).unwrap();
        assert_eq!(m.precision, Some(0.0));
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, Some(0.0));
        // class 2 has no true samples and is never predicted
        let m = classification_metrics(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(m.weighted_f1, 1.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(classification_metrics(&[0, 1], &[0], 2).is_err());
        assert!(classification_metrics(&[], &[], 2).is_err());
        assert!(classification_metrics(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn point_biserial_perfect_separation() {
        let (r, p) = point_biserial(&[1.0, 1.0, 2.0, 2.0], &[0, 0, 1, 1]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn point_biserial_hand_example() {
        let (r, p) = point_biserial(&[1.0, 2.0, 3.0, 4.0], &[0, 0, 1, 1]).unwrap();
        // r = 2/sqrt(5); p = 1 - sqrt(0.8) from the closed-form t(2) tail
        assert!((r - 0.8944271909999159).abs() < 1e-12, "r {r}");
        assert!((p - 0.10557280900008414).abs() < 1e-10, "p {p}");
    }

    #[test]
    fn label_flip_negates_r_and_keeps_p() {
        let values = [0.3, -1.2, 2.0, 0.7, -0.5, 1.1];
        let labels = [0, 1, 0, 1, 1, 0];
        let flipped: Vec<usize> = labels.iter().map(|&l| 1 - l).collect();
        let (r1, p1) = point_biserial(&values, &labels).unwrap();
        let (r2, p2) = point_biserial(&values, &flipped).unwrap();
        assert!((r1 + r2).abs() < 1e-12);
        assert!((p1 - p2).abs() < 1e-12);
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (&a, &b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx.sqrt() * syy.sqrt())
    }

    #[test]
    fn point_biserial_equals_pearson_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.gen_range(3..40usize);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2usize)).collect();
            labels[0] = 0;
            labels[n - 1] = 1;
            let (r, _) = point_biserial(&values, &labels).unwrap();
            let coded: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
            let expect = pearson(&values, &coded);
            assert!((r - expect).abs() < 1e-12, "r {r} pearson {expect}");
        }
    }

    #[test]
    fn point_biserial_affine_invariance() {
        let values = [1.0, 4.0, 2.0, 8.0, 5.0];
        let labels = [0, 1, 0, 1, 1];
        let (r, p) = point_biserial(&values, &labels).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| 3.0 * v + 7.0).collect();
        let (r2, p2) = point_biserial(&scaled, &labels).unwrap();
        assert!((r - r2).abs() < 1e-12);
        assert!((p - p2).abs() < 1e-12);
        let negated: Vec<f64> = values.iter().map(|v| -2.0 * v).collect();
        let (r3, _) = point_biserial(&negated, &labels).unwrap();
        assert!((r + r3).abs() < 1e-12);
    }

    #[test]
    fn point_biserial_undefined_cases() {
        let e = point_biserial(&[1.0, 2.0], &[0, 1]).unwrap_err();
        assert!(e.to_string().contains("at least 3"));
        let e = point_biserial(&[1.0, 2.0, 3.0], &[1, 1, 1]).unwrap_err();
        assert!(e.to_string().contains("one group"));
        let e = point_biserial(&[2.0, 2.0, 2.0], &[0, 1, 1]).unwrap_err();
        assert!(e.to_string().contains("constant"));
        assert!(point_biserial(&[1.0, 2.0, 3.0], &[0, 2, 1]).is_err());
    }

    #[test]
    fn bh_hand_example_rejects_all_three() {
        let flags = benjamini_hochberg(&[0.01, 0.02, 0.04], 0.05).unwrap();
        assert_eq!(flags, vec![true, true, true]);
    }

    #[test]
    fn bh_rejects_none_when_p_exceeds_q() {
        let flags = benjamini_hochberg(&[0.9, 0.6, 0.7], 0.05).unwrap();
        assert_eq!(flags, vec![false, false, false]);
    }

    #[test]
    fn bh_ties_share_a_decision() {
        // sorted: 0.01, 0.04, 0.04, 0.9; k=3 threshold 0.0375 fails,
        // but k=2: 0.04 > 0.025 fails, k=1: 0.01 <= 0.0125 passes
        let flags = benjamini_hochberg(&[0.04, 0.01, 0.04, 0.9], 0.05).unwrap();
        assert_eq!(flags, vec![false, true, false, false]);
        // raise q so the tied pair passes together
        let flags = benjamini_hochberg(&[0.04, 0.01, 0.04, 0.9], 0.08).unwrap();
        assert_eq!(flags, vec![true, true, true, false]);
    }

    #[test]
    fn bh_validates_inputs() {
        assert!(benjamini_hochberg(&[], 0.05).is_err());
        assert!(benjamini_hochberg(&[1.5], 0.05).is_err());
        assert!(benjamini_hochberg(&[0.5], 0.0).is_err());
        assert!(benjamini_hochberg(&[0.5], 1.1).is_err());
        // q = 1 is allowed and rejects everything: p_(m) <= m/m holds
        assert_eq!(
            benjamini_hochberg(&[0.5, 1.0, 0.2], 1.0).unwrap(),
            vec![true, true, true]
        );
    }

    /// Step-up search written as an exhaustive scan over every rank.
    fn bh_brute_force(p: &[f64], q: f64) -> Vec<bool> {
        let m = p.len();
        let mut sorted: Vec<f64> = p.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut best: Option<f64> = None;
        for k in 1..=m {
            if sorted[k - 1] <= k as f64 * q / m as f64 {
                best = Some(sorted[k - 1]);
            }
        }
        p.iter()
            .map(|&v| best.is_some_and(|thr| v <= thr))
            .collect()
    }

    proptest! {
        #[test]
        fn bh_matches_brute_force(
            ps in proptest::collection::vec(0.0f64..=1.0, 1..12),
            q in 0.01f64..0.99,
        ) {
            let got = benjamini_hochberg(&ps, q).unwrap();
            prop_assert_eq!(got, bh_brute_force(&ps, q));
        }

        #[test]
        fn bh_rejections_grow_when_a_p_drops(
            ps in proptest::collection::vec(0.0f64..=1.0, 2..10),
            idx in 0usize..10,
            shrink in 0.0f64..1.0,
        ) {
            let idx = idx % ps.len();
            let before = benjamini_hochberg(&ps, 0.1).unwrap();
            let mut lowered = ps.clone();
            lowered[idx] *= shrink;
            let after = benjamini_hochberg(&lowered, 0.1).unwrap();
            for i in 0..ps.len() {
                if i != idx {
                    prop_assert!(!before[i] || after[i]);
                }
            }
        }

        #[test]
        fn weighted_f1_with_equal_supports_is_the_macro_mean(
            seed in 0u64..500,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = 3usize;
            let per_class = 8usize;
            let mut true_labels = Vec::new();
            let mut predicted = Vec::new();
            for c in 0..k {
                for _ in 0..per_class {
                    true_labels.push(c);
                    predicted.push(rng.gen_range(0..k));
                }
            }
            let m = classification_metrics(&true_labels, &predicted, k).unwrap();
            let macro_mean = (0..k)
                .map(|c| per_class_prf(&true_labels, &predicted, c).2)
                .sum::<f64>() / k as f64;
            prop_assert!((m.weighted_f1 - macro_mean).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&m.weighted_f1));
            prop_assert!((0.0..=1.0).contains(&m.weighted_precision));
            prop_assert!((0.0..=1.0).contains(&m.weighted_recall));
        }
    }

    #[test]
    fn analysis_sorts_by_absolute_correlation() {
        // feature 0 is pure noise, feature 1 fires only for label 1
        let labels = vec![0, 0, 0, 1, 1, 1];
        let rows: Vec<Vec<f64>> = vec![
            vec![0.4, 0.0],
            vec![0.1, 0.0],
            vec![0.5, 0.0],
            vec![0.2, 0.8],
            vec![0.6, 0.9],
            vec![0.3, 0.7],
        ];
        let features = Matrix::from_rows(&rows).unwrap();
        let names = vec!["noise".to_string(), "signal".to_string()];
        let report = linguistic_analysis(&features, &names, &labels, 0.05).unwrap();
        assert_eq!(report.rows[0].feature, "signal");
        assert_eq!(report.rows[0].direction, Direction::PositiveClass);
        assert!(report.rows[0].r_pb > 0.9);
        assert!(report.rows[0].significant_after_bh);
        assert_eq!(report.rows.len(), 2);
        assert!(report.undefined.is_empty());
    }

    #[test]
    fn analysis_reports_constant_columns_as_undefined() {
        let labels = vec![0, 1, 0, 1];
        let rows: Vec<Vec<f64>> = vec![
            vec![0.5, 1.0],
            vec![0.7, 1.0],
            vec![0.2, 1.0],
            vec![0.9, 1.0],
        ];
        let features = Matrix::from_rows(&rows).unwrap();
        let names = vec!["varies".to_string(), "constant".to_string()];
        let report = linguistic_analysis(&features, &names, &labels, 0.05).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.undefined, vec!["constant".to_string()]);
    }

    #[test]
    fn analysis_requires_both_groups() {
        let features = Matrix::from_rows(&[vec![0.1], vec![0.2]]).unwrap();
        let names = vec!["f".to_string()];
        assert!(linguistic_analysis(&features, &names, &[1, 1], 0.05).is_err());
    }

    #[test]
    fn false_rejections_stay_near_the_nominal_rate() {
        // all-null setting: any rejection is false, so the fraction of
        // trials with at least one rejection is bounded by q (up to noise)
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let trials = 200;
        let mut trials_with_rejection = 0;
        for _ in 0..trials {
            let n = 40;
            let c = 10;
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..c).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let features = Matrix::from_rows(&rows).unwrap();
            let names: Vec<String> = (0..c).map(|i| format!("f{i}")).collect();
            let report = linguistic_analysis(&features, &names, &labels, 0.05).unwrap();
            if report.rows.iter().any(|r| r.significant_after_bh) {
                trials_with_rejection += 1;
            }
        }
        // 3 sigma above q = 0.05 over 200 trials
        let bound = 0.05 + 3.0 * (0.05f64 * 0.95 / trials as f64).sqrt();
        let rate = trials_with_rejection as f64 / trials as f64;
        assert!(rate <= bound, "false rejection rate {rate} > {bound}");
    }

    #[test]
    fn correlation_csv_has_the_expected_layout() {
        let labels = vec![0, 0, 1, 1, 0, 1];
        let rows: Vec<Vec<f64>> = vec![
            vec![0.1],
            vec![0.2],
            vec![0.8],
            vec![0.9],
            vec![0.15],
            vec![0.85],
        ];
        let features = Matrix::from_rows(&rows).unwrap();
        let names = vec!["signal".to_string()];
        let report = linguistic_analysis(&features, &names, &labels, 0.05).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corr.csv");
        write_correlation_csv(&path, &report).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "class_direction,feature,correlation,p_value,significant"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("positive-class,signal,"), "{row}");
    }
}
