//! Confusion matrix and per-class precision, sensitivity and F1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::class::Class;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], n_classes: usize) -> Self {
        assert_eq!(truth.len(), predicted.len(), "label lists differ in length");
        let mut m = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p);
        }
        m
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    /// Element-wise sum; counts merge associatively across shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub sensitivity: f64,
    pub f1: f64,
    /// True when any of the three hit a zero denominator and was set to 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassScores>,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl Metrics {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let per_class = (0..confusion.n_classes())
            .map(|c| {
                let tp = confusion.counts[c][c];
                let (precision, p_undef) = ratio(tp, confusion.col_sum(c));
                let (sensitivity, s_undef) = ratio(tp, confusion.row_sum(c));
                let (f1, f_undef) = if precision + sensitivity == 0.0 {
                    (0.0, true)
                } else {
                    (2.0 * precision * sensitivity / (precision + sensitivity), false)
                };
                ClassScores {
                    precision,
                    sensitivity,
                    f1,
                    undefined: p_undef || s_undef || f_undef,
                }
            })
            .collect();
        let (accuracy, _) = ratio(confusion.trace(), confusion.total());
        Self {
            confusion,
            per_class,
            accuracy,
        }
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], n_classes: usize) -> Self {
        Self::from_confusion(ConfusionMatrix::from_labels(truth, predicted, n_classes))
    }

    /// Text report: one row per class with precision, F-1 and sensitivity,
    /// overall accuracy as a percentage, then the raw confusion matrix.
    pub fn report(&self) -> String {
        let name = |i: usize| Class::from_index(i).map(|c| c.name().to_string()).unwrap_or_else(|| format!("class{i}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>9} {:>9} {:>11} {:>9}",
            "class", "precision", "f1", "sensitivity", "accuracy"
        );
        for (i, s) in self.per_class.iter().enumerate() {
            let acc = if i == 0 {
                format!("{:.2}", self.accuracy * 100.0)
            } else {
                String::new()
            };
            let flag = if s.undefined { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:<8} {:>9.3} {:>9.3} {:>11.3} {:>9}{}",
                name(i),
                s.precision,
                s.f1,
                s.sensitivity,
                acc,
                flag
            );
        }
        if self.per_class.iter().any(|s| s.undefined) {
            let _ = writeln!(out, "* zero denominator; reported as 0");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "confusion (rows = true, cols = predicted)");
        let header: Vec<String> = (0..self.confusion.n_classes()).map(|i| format!("{:>8}", name(i))).collect();
        let _ = writeln!(out, "{:<8}{}", "", header.join(""));
        for (i, row) in self.confusion.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>8}")).collect();
            let _ = writeln!(out, "{:<8}{}", name(i), cells.join(""));
        }
        out
    }
}
