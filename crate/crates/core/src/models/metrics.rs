//! Confusion-matrix metrics: per-class precision/recall/F1 and macro
//! averages. Detection rate for an attack class is its recall.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Evaluation summary over a labelled dataset.
///
/// `classes` is the sorted union of model classes and observed labels.
/// When a class is never predicted its precision is undefined; it is
/// reported as 0 and flagged in `precision_undefined`. Macro averages run
/// over classes with non-zero support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub support: Vec<usize>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub precision_undefined: Vec<bool>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl EvalReport {
    /// Builds the report from `(true label, predicted label)` pairs.
    /// `extra_classes` lets callers include model classes that never
    /// appear in the data so the matrix shape is stable.
    pub fn from_predictions<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
        extra_classes: &[String],
    ) -> EvalReport {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let mut names: BTreeSet<&str> = extra_classes.iter().map(String::as_str).collect();
        for (t, p) in &pairs {
            names.insert(t);
            names.insert(p);
        }
        let classes: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let index = |name: &str| classes.iter().position(|c| c == name).expect("class listed");

        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (t, p) in &pairs {
            confusion[index(t)][index(p)] += 1;
        }

        let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
        let predicted: Vec<usize> = (0..k).map(|c| confusion.iter().map(|row| row[c]).sum()).collect();

        let mut precision = vec![0.0; k];
        let mut recall = vec![0.0; k];
        let mut f1 = vec![0.0; k];
        let mut precision_undefined = vec![false; k];
        for c in 0..k {
            let tp = confusion[c][c] as f64;
            if predicted[c] == 0 {
                precision_undefined[c] = true;
            } else {
                precision[c] = tp / predicted[c] as f64;
            }
            if support[c] > 0 {
                recall[c] = tp / support[c] as f64;
            }
            if precision[c] + recall[c] > 0.0 {
                f1[c] = 2.0 * precision[c] * recall[c] / (precision[c] + recall[c]);
            }
        }

        let present: Vec<usize> = (0..k).filter(|c| support[*c] > 0).collect();
        let mean = |v: &[f64]| {
            if present.is_empty() {
                0.0
            } else {
                present.iter().map(|c| v[*c]).sum::<f64>() / present.len() as f64
            }
        };
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let total: usize = support.iter().sum();

        EvalReport {
            macro_precision: mean(&precision),
            macro_recall: mean(&recall),
            macro_f1: mean(&f1),
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            classes,
            support,
            confusion,
            precision,
            recall,
            f1,
            precision_undefined,
        }
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Recall restricted to one class.
    pub fn detection_rate(&self, class: &str) -> Option<f64> {
        self.class_index(class).map(|i| self.recall[i])
    }
}
