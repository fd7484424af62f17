//! Plain-text report artifacts: confidence table, confusion matrix,
//! per-epoch training log and the resolved run configuration.

use std::path::Path;

use crate::dataset::ClassVocab;
use crate::error::{Error, Result};
use crate::train::{Evaluation, TrainReport};

/// First line of `confidence.csv`.
pub const CONFIDENCE_NOTE: &str =
    "# confidence_pct = mean softmax probability of the true class over all test samples of that class";

/// One row per vocabulary class, in vocabulary order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceRow {
    pub sr_no: usize,
    pub class: String,
    /// Percent in [0,100]; `None` when the class had no test samples.
    pub confidence_pct: Option<f64>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceTable {
    pub rows: Vec<ConfidenceRow>,
}

impl ConfidenceTable {
    pub fn from_evaluation(eval: &Evaluation, vocab: &ClassVocab) -> Self {
        let rows = vocab
            .names()
            .enumerate()
            .map(|(i, name)| ConfidenceRow {
                sr_no: i + 1,
                class: name.to_string(),
                confidence_pct: eval.mean_confidence(i).map(|c| 100.0 * c),
                samples: eval.class_count(i),
            })
            .collect();
        ConfidenceTable { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CONFIDENCE_NOTE}\nsr_no,gesture_class,confidence_pct,samples\n");
        for r in &self.rows {
            let pct = r.confidence_pct.map_or_else(|| "n/a".to_string(), |p| format!("{p:.3}"));
            out.push_str(&format!("{},{},{},{}\n", r.sr_no, r.class, pct, r.samples));
        }
        out
    }
}

/// `K` lines of `K` comma-separated counts, rows = true class, no header.
pub fn confusion_csv(eval: &Evaluation) -> String {
    let mut out = String::new();
    for row in &eval.confusion {
        let line: Vec<String> = row.iter().map(usize::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses [`confusion_csv`] output back into a matrix.
pub fn parse_confusion_csv(text: &str) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::invalid(format!("confusion line {}: bad count '{v}'", i + 1)))
                })
                .collect()
        })
        .collect()
}

/// Accuracy in percent as trace/total.
pub fn accuracy_pct(confusion: &[Vec<usize>]) -> f64 {
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = confusion.iter().enumerate().map(|(i, r)| r[i]).sum();
    if total == 0 {
        0.0
    } else {
        100.0 * trace as f64 / total as f64
    }
}

pub fn accuracy_line(eval: &Evaluation) -> String {
    format!("accuracy: {:.2}", accuracy_pct(&eval.confusion))
}

/// `report.csv`: epoch, lr, loss, train_acc.
pub fn training_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,lr,loss,train_acc\n");
    for r in &report.epochs {
        out.push_str(&format!("{},{:e},{:.8},{:.6}\n", r.epoch, r.lr, r.loss, r.train_accuracy));
    }
    out
}

/// Fully resolved command configuration, written as `key = value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub entries: Vec<(String, String)>,
}

impl RunConfig {
    pub fn new(command: impl Into<String>) -> Self {
        RunConfig {
            command: command.into(),
            entries: Vec::new(),
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("command = {}\n", self.command);
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
