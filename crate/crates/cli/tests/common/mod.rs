//! Shared fixtures for the CLI integration tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lingfuse"))
}

pub fn demo_dict() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/demo_lexicon.tsv")
}

/// 60-record binary corpus: distressed texts labeled 1, neutral texts 0,
/// with enough dictionary words for the lexicon features to fire.
pub fn write_corpus(path: &Path) {
    let distress = [
        "sad", "lonely", "worried", "stressed", "panicked", "crying", "miserable", "afraid",
        "hurt", "terrible",
    ];
    let neutral = [
        "calm", "great", "fine", "steady", "ready", "good", "relaxed", "wonderful", "peaceful",
        "happy",
    ];
    let mut lines = vec!["text,label".to_string()];
    for i in 0..30 {
        let (a, b) = (distress[i % 10], distress[(i + 3) % 10]);
        lines.push(format!("i feel {a} and {b} about day {i},1"));
        let (c, d) = (neutral[i % 10], neutral[(i + 3) % 10]);
        lines.push(format!("the plan for day {i} looks {c} and {d},0"));
    }
    fs::write(path, lines.join("\n")).unwrap();
}

/// A small lexicon-feature experiment config trained for three epochs.
pub fn write_config(path: &Path, corpus: &Path, out: &Path) {
    let cfg = serde_json::json!({
        "corpus": corpus,
        "feature_set": "lexicon",
        "dict_path": demo_dict(),
        "vocab": 512,
        "embed_dim": 16,
        "num_folds": 5,
        "train": {
            "learning_rate": 0.001,
            "step_size": 5,
            "gamma": 0.1,
            "batch_size": 8,
            "max_epochs": 3,
            "patience": 7,
            "selection_mode": "best-val-loss-checkpoint",
            "seed": 7
        },
        "out_dir": out
    });
    fs::write(path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}
