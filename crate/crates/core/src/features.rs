//! Auxiliary feature sources: lexicon category counts, dense per-document
//! feature files, topic proportion files, and GOSS column standardization.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tokenizer::tokenize;

/// A dictionary pattern: either a literal token or a prefix stem written with
/// a trailing `*` (e.g. `abandon*` matches "abandon", "abandoned", ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Exact(String),
    Prefix(String),
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Pattern> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(Error::Validation("empty dictionary pattern".into()));
        }
        if let Some(stem) = raw.strip_suffix('*') {
            if stem.is_empty() {
                return Err(Error::Validation("bare `*` is not a valid pattern".into()));
            }
            if stem.contains('*') {
                return Err(Error::Validation(format!(
                    "pattern {raw:?}: `*` is only allowed at the end"
                )));
            }
            return Ok(Pattern::Prefix(stem.to_lowercase()));
        }
        if raw.contains('*') {
            return Err(Error::Validation(format!(
                "pattern {raw:?}: `*` is only allowed at the end"
            )));
        }
        Ok(Pattern::Exact(raw.to_lowercase()))
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            Pattern::Exact(w) => token == w,
            Pattern::Prefix(stem) => token.starts_with(stem.as_str()),
        }
    }
}

/// Category dictionary mapping tokens to one or more categories. Feature
/// order follows the first appearance of each category in the source.
#[derive(Debug, Clone)]
pub struct LexiconDictionary {
    categories: Vec<String>,
    patterns: Vec<(Pattern, usize)>,
}

impl LexiconDictionary {
    pub fn new(entries: &[(String, String)]) -> Result<LexiconDictionary> {
        if entries.is_empty() {
            return Err(Error::Validation("dictionary has no entries".into()));
        }
        let mut categories: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut patterns = Vec::with_capacity(entries.len());
        for (category, raw) in entries {
            let category = category.trim();
            if category.is_empty() {
                return Err(Error::Validation("empty dictionary category".into()));
            }
            let cat_id = *index.entry(category.to_string()).or_insert_with(|| {
                categories.push(category.to_string());
                categories.len() - 1
            });
            patterns.push((Pattern::parse(raw)?, cat_id));
        }
        Ok(LexiconDictionary {
            categories,
            patterns,
        })
    }

    /// Load a `category<TAB>pattern` file. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn load(path: &Path) -> Result<LexiconDictionary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (category, pattern) = line.split_once('\t').ok_or_else(|| {
                Error::Validation(format!(
                    "{}:{}: expected `category<TAB>pattern`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            entries.push((category.to_string(), pattern.to_string()));
        }
        LexiconDictionary::new(&entries)
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Per-category match counts normalized by token count. A token can hit
    /// several categories; an empty text yields all zeros.
    pub fn features(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut counts = vec![0.0; self.categories.len()];
        if tokens.is_empty() {
            return counts;
        }
        for token in &tokens {
            for (pattern, cat) in &self.patterns {
                if pattern.matches(token) {
                    counts[*cat] += 1.0;
                }
            }
        }
        let n = tokens.len() as f64;
        for c in counts.iter_mut() {
            *c /= n;
        }
        counts
    }
}

/// Topic proportions per document: each row is non-negative and sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMatrix(pub Matrix);

impl TopicMatrix {
    pub fn new(m: Matrix) -> Result<TopicMatrix> {
        if m.rows == 0 || m.cols == 0 {
            return Err(Error::Validation("topic matrix is empty".into()));
        }
        for r in 0..m.rows {
            let row = m.row(r);
            let mut sum = 0.0;
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!(
                        "topic row {r} has a negative or non-finite entry"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "topic row {r} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(TopicMatrix(m))
    }
}

/// Column-wise standardization: subtract the column mean, then divide by the
/// column's centered L2 norm so each column has mean zero and unit norm.
/// Constant columns become all zeros. Needs at least two rows.
pub fn goss_columns(m: &Matrix) -> Result<Matrix> {
    if m.rows < 2 {
        return Err(Error::Validation(format!(
            "column standardization needs at least 2 rows, got {}",
            m.rows
        )));
    }
    if !m.all_finite() {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    let mut out = Matrix::zeros(m.rows, m.cols);
    for c in 0..m.cols {
        let col = m.column(c);
        let mu = col.iter().sum::<f64>() / col.len() as f64;
        let norm = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for r in 0..m.rows {
                out.set(r, c, (col[r] - mu) / norm);
            }
        }
        // zero norm: the column is constant and stays all zeros
    }
    Ok(out)
}

/// GOSS over topic proportions.
pub fn goss(topics: &TopicMatrix) -> Result<Matrix> {
    goss_columns(&topics.0)
}

/// Rescale a non-negative row to sum to one. All-zero rows are returned
/// unchanged.
pub fn normalize_sum_to_one(row: &[f64]) -> Result<Vec<f64>> {
    let mut sum = 0.0;
    for &v in row {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Validation(
                "row normalization needs non-negative finite entries".into(),
            ));
        }
        sum += v;
    }
    if sum == 0.0 {
        return Ok(row.to_vec());
    }
    Ok(row.iter().map(|v| v / sum).collect())
}

fn read_feature_csv(path: &Path, prefix: &str) -> Result<(Vec<String>, Matrix)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.is_empty() || headers.get(0) != Some("id") {
        return Err(Error::Validation(format!(
            "{}: first column must be `id`",
            path.display()
        )));
    }
    let cols = headers.len() - 1;
    if cols == 0 {
        return Err(Error::Validation(format!(
            "{}: no {prefix} columns after `id`",
            path.display()
        )));
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != cols + 1 {
            return Err(Error::Validation(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                record.len(),
                cols + 1
            )));
        }
        ids.push(record[0].to_string());
        for f in 1..record.len() {
            let v: f64 = record[f].trim().parse().map_err(|_| {
                Error::Validation(format!(
                    "{}: row {} column {:?}: {:?} is not a number",
                    path.display(),
                    i + 2,
                    headers.get(f).unwrap_or(""),
                    &record[f]
                ))
            })?;
            data.push(v);
        }
    }
    if ids.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let matrix = Matrix {
        rows: ids.len(),
        cols,
        data,
    };
    if !matrix.all_finite() {
        return Err(Error::NonFinite(format!("{}", path.display())));
    }
    Ok((ids, matrix))
}

fn align_rows(
    path: &Path,
    file_ids: &[String],
    matrix: &Matrix,
    wanted: &[String],
) -> Result<Matrix> {
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(file_ids.len());
    for (i, id) in file_ids.iter().enumerate() {
        if by_id.insert(id.as_str(), i).is_some() {
            return Err(Error::Validation(format!(
                "{}: duplicate id {id:?}",
                path.display()
            )));
        }
    }
    let mut missing = Vec::new();
    let mut out = Matrix::zeros(wanted.len(), matrix.cols);
    for (r, id) in wanted.iter().enumerate() {
        match by_id.get(id.as_str()) {
            Some(&src) => out.row_mut(r).copy_from_slice(matrix.row(src)),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        missing.truncate(5);
        return Err(Error::Validation(format!(
            "{}: no feature row for corpus ids {missing:?}",
            path.display()
        )));
    }
    Ok(out)
}

/// Load a dense feature CSV (`id,f0,f1,...`) aligned to `ids`. Every corpus
/// id must be present; extra rows in the file are ignored.
pub fn load_dense_features(path: &Path, ids: &[String]) -> Result<Matrix> {
    let (file_ids, matrix) = read_feature_csv(path, "feature")?;
    align_rows(path, &file_ids, &matrix, ids)
}

/// Load a topic proportion CSV (`id,t0,t1,...`) aligned to `ids`; rows must
/// sum to one.
pub fn load_topic_matrix(path: &Path, ids: &[String]) -> Result<TopicMatrix> {
    let (file_ids, matrix) = read_feature_csv(path, "topic")?;
    TopicMatrix::new(align_rows(path, &file_ids, &matrix, ids)?)
}

/// Write a feature matrix as `id,f0,f1,...` CSV.
pub fn write_feature_matrix(path: &Path, ids: &[String], m: &Matrix) -> Result<()> {
    if ids.len() != m.rows {
        return Err(Error::dim("feature matrix rows", ids.len(), m.rows));
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["id".to_string()];
    header.extend((0..m.cols).map(|c| format!("f{c}")));
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (r, id) in ids.iter().enumerate() {
        let mut record = vec![id.clone()];
        record.extend(m.row(r).iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
