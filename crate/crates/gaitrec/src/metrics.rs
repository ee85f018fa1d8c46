//! Evaluation metrics: confusion matrix, accuracy, per-class
//! precision/recall/F1, and rank-based one-vs-rest ROC-AUC.

use crate::dataset::ActivityLabel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const NUM_CLASSES: usize = 4;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("class index {index} out of range")]
    InvalidClassIndex { index: usize },
    #[error("probability vector has {found} entries, expected {expected}")]
    BadProbabilityVector { expected: usize, found: usize },
}

/// Rows are true classes, columns are predicted classes, both in the fixed
/// display order (Going Downstairs, Going Upstairs, Stationary, Walking).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Per-class support (how many evaluated windows carried each label).
    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        let mut sums = [0; NUM_CLASSES];
        for (i, row) in self.counts.iter().enumerate() {
            sums[i] = row.iter().sum();
        }
        sums
    }

    pub fn col_sums(&self) -> [u64; NUM_CLASSES] {
        let mut sums = [0; NUM_CLASSES];
        for row in &self.counts {
            for (j, v) in row.iter().enumerate() {
                sums[j] += v;
            }
        }
        sums
    }
}

pub fn confusion_matrix(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= NUM_CLASSES {
            return Err(MetricsError::InvalidClassIndex { index: p });
        }
        if t >= NUM_CLASSES {
            return Err(MetricsError::InvalidClassIndex { index: t });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Precision/recall/F1 for one class; 0/0 ratios are reported as 0 with
/// the matching `*_defined` flag cleared.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

pub fn prf1(cm: &ConfusionMatrix) -> [ClassPrf; NUM_CLASSES] {
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let mut out = [ClassPrf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        precision_defined: false,
        recall_defined: false,
    }; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let tp = cm.counts[c][c] as f64;
        let (p_def, precision) = if cols[c] > 0 {
            (true, tp / cols[c] as f64)
        } else {
            (false, 0.0)
        };
        let (r_def, recall) = if rows[c] > 0 {
            (true, tp / rows[c] as f64)
        } else {
            (false, 0.0)
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        out[c] = ClassPrf {
            precision,
            recall,
            f1,
            precision_defined: p_def,
            recall_defined: r_def,
        };
    }
    out
}

/// One-vs-rest AUC per class via the Mann–Whitney rank statistic with
/// average ranks for ties. `None` where a class has no positives or no
/// negatives. The macro average runs over the defined classes only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AucSummary {
    pub per_class: [Option<f64>; NUM_CLASSES],
    pub macro_auc: Option<f64>,
}

pub fn roc_auc_ovr(scores: &[Vec<f64>], labels: &[usize]) -> Result<AucSummary, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for s in scores {
        if s.len() != NUM_CLASSES {
            return Err(MetricsError::BadProbabilityVector {
                expected: NUM_CLASSES,
                found: s.len(),
            });
        }
    }
    for &t in labels {
        if t >= NUM_CLASSES {
            return Err(MetricsError::InvalidClassIndex { index: t });
        }
    }

    let mut per_class = [None; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let n_pos = labels.iter().filter(|&&t| t == c).count();
        let n_neg = labels.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            continue;
        }
        // Sort sample indices by the class-c score, then hand out average
        // ranks within each group of exactly equal scores.
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a][c].total_cmp(&scores[b][c]));
        let mut rank_sum_pos = 0.0f64;
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j < order.len() && scores[order[j]][c] == scores[order[i]][c] {
                j += 1;
            }
            // 1-based ranks i+1..=j share the average (i + j + 1) / 2.
            let avg_rank = (i + j + 1) as f64 / 2.0;
            for &idx in &order[i..j] {
                if labels[idx] == c {
                    rank_sum_pos += avg_rank;
                }
            }
            i = j;
        }
        let np = n_pos as f64;
        let auc = (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64);
        per_class[c] = Some(auc);
    }

    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(AucSummary {
        per_class,
        macro_auc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `null` in JSON when the class had no positives or no negatives.
    pub auc: Option<f64>,
}

/// The full evaluation result. Serializes to exactly
/// `{"accuracy": .., "per_class": {..}, "confusion": [[..]]}`; the macro
/// AUC and mean loss live only in memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Keyed by display label; BTreeMap ordering happens to match the
    /// fixed class order because the labels sort alphabetically.
    pub per_class: BTreeMap<String, ClassReport>,
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    #[serde(skip)]
    pub macro_auc: Option<f64>,
    #[serde(skip)]
    pub mean_loss: f64,
}

/// Assemble a report from per-window predictions, probability vectors,
/// and true labels.
pub fn build_report(
    preds: &[usize],
    probs: &[Vec<f64>],
    labels: &[usize],
    mean_loss: f64,
) -> Result<EvalReport, MetricsError> {
    let cm = confusion_matrix(preds, labels)?;
    let prf = prf1(&cm);
    let auc = roc_auc_ovr(probs, labels)?;
    let mut per_class = BTreeMap::new();
    for label in ActivityLabel::ALL {
        let c = label.class_index();
        per_class.insert(
            label.display_name().to_string(),
            ClassReport {
                precision: prf[c].precision,
                recall: prf[c].recall,
                f1: prf[c].f1,
                auc: auc.per_class[c],
            },
        );
    }
    Ok(EvalReport {
        accuracy: cm.accuracy(),
        per_class,
        confusion: cm.counts,
        macro_auc: auc.macro_auc,
        mean_loss,
    })
}

impl EvalReport {
    /// Human-readable report: overall accuracy to two decimals, per-class
    /// percentages to one decimal.
    pub fn render_text(&self) -> String {
        let mut out = format!("accuracy: {:.2}%\n\n", self.accuracy * 100.0);
        out.push_str(&format!(
            "{:<18} {:>9} {:>7} {:>7} {:>6}\n",
            "class", "precision", "recall", "f1", "auc"
        ));
        for label in ActivityLabel::ALL {
            let m = &self.per_class[label.display_name()];
            let auc = match m.auc {
                Some(a) => format!("{a:.3}"),
                None => "n/a".to_string(),
            };
            out.push_str(&format!(
                "{:<18} {:>8.1}% {:>6.1}% {:>6.1}% {:>6}\n",
                label.display_name(),
                m.precision * 100.0,
                m.recall * 100.0,
                m.f1 * 100.0,
                auc
            ));
        }
        if let Some(macro_auc) = self.macro_auc {
            out.push_str(&format!("macro auc: {macro_auc:.3}\n"));
        }
        out.push_str("\nconfusion (rows = true, cols = predicted):\n");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}
