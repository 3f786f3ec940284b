//! Corpus ingestion: CSV files with `text` and `label` columns (and an
//! optional `id`), with raw labels remapped to dense class indices.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub label: usize,
}

/// A loaded corpus: unique ids, dense labels in [0, K), and the mapping back
/// to the raw label strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    pub num_classes: usize,
    /// Raw label string for each dense class index.
    pub label_names: Vec<String>,
    /// Source path of the file the corpus was read from.
    pub provenance: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }
}

/// Dense class order for the raw labels: numeric ascending when every label
/// parses as a non-negative integer (so files labeled 0/1 keep their
/// convention), otherwise order of first appearance.
fn class_order(raw_in_order: &[String]) -> Vec<String> {
    let mut distinct: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for raw in raw_in_order {
        if seen.insert(raw.clone()) {
            distinct.push(raw.clone());
        }
    }
    let numeric: Option<Vec<u64>> = distinct.iter().map(|s| s.parse::<u64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(u64, String)> = nums.into_iter().zip(distinct).collect();
        pairs.sort_by_key(|p| p.0);
        pairs.into_iter().map(|p| p.1).collect()
    } else {
        distinct
    }
}

/// Load a corpus CSV. The header must contain `text` and `label` columns;
/// an `id` column is optional (row indices are used otherwise).
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let text_col = col("text").ok_or_else(|| {
        Error::Validation(format!("{}: missing `text` column", path.display()))
    })?;
    let label_col = col("label").ok_or_else(|| {
        Error::Validation(format!("{}: missing `label` column", path.display()))
    })?;
    let id_col = col("id");

    let mut rows: Vec<(String, String, String)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let rowno = i + 2; // 1-based, after the header
        let text = record.get(text_col).unwrap_or("").to_string();
        let label = record.get(label_col).unwrap_or("").trim().to_string();
        if label.is_empty() {
            return Err(Error::Validation(format!(
                "{}: row {rowno}: empty label",
                path.display()
            )));
        }
        let id = match id_col {
            Some(c) => {
                let id = record.get(c).unwrap_or("").trim().to_string();
                if id.is_empty() {
                    return Err(Error::Validation(format!(
                        "{}: row {rowno}: empty id",
                        path.display()
                    )));
                }
                id
            }
            None => i.to_string(),
        };
        rows.push((id, text, label));
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no data rows",
            path.display()
        )));
    }

    let mut seen = HashSet::new();
    for (id, _, _) in &rows {
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!(
                "{}: duplicate id {id:?}",
                path.display()
            )));
        }
    }

    let raw_labels: Vec<String> = rows.iter().map(|r| r.2.clone()).collect();
    let label_names = class_order(&raw_labels);
    if label_names.len() < 2 {
        return Err(Error::Validation(format!(
            "{}: corpus has a single class {:?}, need at least 2",
            path.display(),
            label_names.first()
        )));
    }
    let records = rows
        .into_iter()
        .map(|(id, text, raw)| CorpusRecord {
            id,
            text,
            // position() always finds raw: label_names covers every distinct label
            label: label_names.iter().position(|n| *n == raw).unwrap(),
        })
        .collect();
    Ok(Corpus {
        records,
        num_classes: label_names.len(),
        label_names,
        provenance: path.display().to_string(),
    })
}
