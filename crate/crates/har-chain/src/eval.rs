//! Confusion matrix and classification metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LabelMap;

/// K x K counts, rows indexed by true class, columns by predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<u64>,
    pub label_map: LabelMap,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn at(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes() + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        let k = self.classes();
        self.counts[class * k..(class + 1) * k].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        let k = self.classes();
        (0..k).map(|t| self.counts[t * k + class]).sum()
    }
}

pub fn confusion_matrix(
    truth: &[usize],
    pred: &[usize],
    label_map: &LabelMap,
) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::invalid(format!(
            "confusion matrix: {} truth labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let k = label_map.len();
    let mut counts = vec![0u64; k * k];
    for (i, (&t, &p)) in truth.iter().zip(pred.iter()).enumerate() {
        if t >= k || p >= k {
            return Err(Error::invalid(format!(
                "class id out of range at index {i}: truth {t}, pred {p}, K = {k}"
            )));
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        label_map: label_map.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Scores derived from a confusion matrix. Macro averages run over classes
/// with nonzero truth support only, so folds missing a class stay meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub total: u64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// precision = diag/colsum, recall = diag/rowsum, F1 their harmonic mean;
/// every 0/0 is defined as 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("cannot compute metrics of zero samples"));
    }
    let k = cm.classes();
    let mut per_class = Vec::with_capacity(k);
    let mut trace = 0u64;
    let (mut mp, mut mr, mut mf, mut present) = (0.0, 0.0, 0.0, 0u64);
    for c in 0..k {
        let diag = cm.at(c, c);
        trace += diag;
        let support = cm.row_sum(c);
        let precision = ratio(diag, cm.col_sum(c));
        let recall = ratio(diag, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support > 0 {
            mp += precision;
            mr += recall;
            mf += f1;
            present += 1;
        }
        per_class.push(ClassMetrics {
            name: cm.label_map.name(c).to_string(),
            precision,
            recall,
            f1,
            support,
        });
    }
    let present = present.max(1) as f64;
    Ok(MetricsReport {
        accuracy: trace as f64 / total as f64,
        macro_precision: mp / present,
        macro_recall: mr / present,
        macro_f1: mf / present,
        total,
        per_class,
    })
}

/// Confusion matrix as CSV with class names on both axes.
pub fn write_confusion_csv(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    let k = cm.classes();
    let mut header = vec!["truth\\pred".to_string()];
    header.extend(cm.label_map.names().iter().cloned());
    writer.write_record(&header)?;
    for t in 0..k {
        let mut row = vec![cm.label_map.name(t).to_string()];
        row.extend((0..k).map(|p| cm.at(t, p).to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
