use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Label;

/// Confusion counts with rumor as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Self::default();
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (Label::Rumor, Label::Rumor) => c.tp += 1,
                (Label::Rumor, Label::NonRumor) => c.fp += 1,
                (Label::NonRumor, Label::Rumor) => c.fn_ += 1,
                (Label::NonRumor, Label::NonRumor) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    fn from_counts(hit: usize, false_pos: usize, false_neg: usize) -> Self {
        let precision = ratio(hit, hit + false_pos);
        let recall = ratio(hit, hit + false_neg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub rumor: ClassMetrics,
    pub nonrumor: ClassMetrics,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Self {
        Self {
            accuracy: ratio(c.tp + c.tn, c.total()),
            rumor: ClassMetrics::from_counts(c.tp, c.fp, c.fn_),
            nonrumor: ClassMetrics::from_counts(c.tn, c.fn_, c.fp),
            confusion: c,
        }
    }

    /// Thresholds probabilities at 0.5 against the true labels.
    pub fn from_probabilities(probs: &[f64], labels: &[Label]) -> Self {
        let pairs = probs
            .iter()
            .zip(labels)
            .map(|(&p, &l)| (Label::from_probability(p), l));
        Self::from_confusion(Confusion::from_pairs(pairs))
    }

    /// Macro mean of every rate; confusion counts are summed.
    pub fn mean(reports: &[MetricsReport]) -> Self {
        if reports.is_empty() {
            return Self::default();
        }
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let class = |pick: &dyn Fn(&MetricsReport) -> ClassMetrics| ClassMetrics {
            precision: avg(&|r| pick(r).precision),
            recall: avg(&|r| pick(r).recall),
            f1: avg(&|r| pick(r).f1),
        };
        let mut confusion = Confusion::default();
        for r in reports {
            confusion.tp += r.confusion.tp;
            confusion.fp += r.confusion.fp;
            confusion.fn_ += r.confusion.fn_;
            confusion.tn += r.confusion.tn;
        }
        Self {
            accuracy: avg(&|r| r.accuracy),
            rumor: class(&|r| r.rumor),
            nonrumor: class(&|r| r.nonrumor),
            confusion,
        }
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1")?;
        for (name, m) in [("rumor", self.rumor), ("nonrumor", self.nonrumor)] {
            writeln!(
                f,
                "{:<10} {:>9.4} {:>9.4} {:>9.4}",
                name, m.precision, m.recall, m.f1
            )?;
        }
        writeln!(f, "accuracy   {:.4}", self.accuracy)?;
        let c = &self.confusion;
        write!(f, "confusion  tp={} fp={} fn={} tn={}", c.tp, c.fp, c.fn_, c.tn)
    }
}
