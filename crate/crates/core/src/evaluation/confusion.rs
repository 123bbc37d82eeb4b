use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scoring::FrameAnalysis;
use crate::video::Diagnosis;

/// Column that collects frames predicted as undetected or pleura-only.
pub const NO_CLASS: &str = "No class";

/// Rows are actual labels, columns predicted labels (possibly with extra
/// columns such as [`NO_CLASS`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub counts: Vec<Vec<i64>>,
}

impl ConfusionMatrix {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.counts.len() != self.rows.len() {
            return Err(EvalError::InvalidMatrix(format!(
                "{} row labels but {} count rows",
                self.rows.len(),
                self.counts.len()
            )));
        }
        for (label, row) in self.rows.iter().zip(&self.counts) {
            if row.len() != self.columns.len() {
                return Err(EvalError::InvalidMatrix(format!(
                    "row {label:?} has {} counts for {} columns",
                    row.len(),
                    self.columns.len()
                )));
            }
            if let Some(neg) = row.iter().find(|c| **c < 0) {
                return Err(EvalError::InvalidMatrix(format!(
                    "row {label:?} has negative count {neg}"
                )));
            }
        }
        Ok(())
    }

    pub fn row_sums(&self) -> Vec<i64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetric {
    pub label: String,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub excluded_columns: Vec<String>,
    pub classes: Vec<ClassMetric>,
}

fn ratio(num: i64, den: i64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

/// One-vs-rest accuracy, sensitivity and specificity over the square core
/// left after dropping `excluded` columns.
pub fn confusion_metrics(m: &ConfusionMatrix, excluded: &[String]) -> Result<ClassMetrics, EvalError> {
    m.validate()?;
    for name in excluded {
        if !m.columns.contains(name) {
            return Err(EvalError::InvalidMatrix(format!("excluded column {name:?} not found")));
        }
    }
    let core_cols: Vec<usize> = (0..m.columns.len())
        .filter(|&j| !excluded.contains(&m.columns[j]))
        .collect();
    let core_labels: Vec<&String> = core_cols.iter().map(|&j| &m.columns[j]).collect();
    if core_labels.len() != m.rows.len() || core_labels.iter().zip(&m.rows).any(|(c, r)| *c != r) {
        return Err(EvalError::InvalidMatrix(format!(
            "core columns {core_labels:?} do not match rows {:?}",
            m.rows
        )));
    }

    let core: Vec<Vec<i64>> = m
        .counts
        .iter()
        .map(|row| core_cols.iter().map(|&j| row[j]).collect())
        .collect();
    let total: i64 = core.iter().flatten().sum();
    let classes = (0..core.len())
        .map(|k| {
            let tp = core[k][k];
            let fn_ = core[k].iter().sum::<i64>() - tp;
            let fp = core.iter().map(|r| r[k]).sum::<i64>() - tp;
            let tn = total - tp - fn_ - fp;
            ClassMetric {
                label: m.rows[k].clone(),
                accuracy: ratio(tp + tn, total),
                sensitivity: ratio(tp, tp + fn_),
                specificity: ratio(tn, tn + fp),
            }
        })
        .collect();
    Ok(ClassMetrics {
        excluded_columns: excluded.to_vec(),
        classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryVideoMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Rows {Abnormal, Normal} by columns {Abnormal, Normal, Undetected};
/// Abnormal is the positive class and Undetected predictions count
/// against accuracy and recall.
pub fn binary_video_metrics(counts: [[u64; 3]; 2]) -> BinaryVideoMetrics {
    let [[tp, fn_normal, fn_undetected], [fp, tn, normal_undetected]] = counts.map(|r| r.map(|c| c as i64));
    let total = tp + fn_normal + fn_undetected + fp + tn + normal_undetected;
    BinaryVideoMetrics {
        accuracy: ratio(tp + tn, total),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_normal + fn_undetected),
    }
}

/// Tallies (ground truth, prediction) pairs; ground truth must be Abnormal or Normal.
pub fn binary_video_matrix(pairs: &[(Diagnosis, Diagnosis)]) -> Result<[[u64; 3]; 2], EvalError> {
    let mut counts = [[0u64; 3]; 2];
    for (gt, pred) in pairs {
        let row = match gt {
            Diagnosis::Abnormal => 0,
            Diagnosis::Normal => 1,
            Diagnosis::Undetected => {
                return Err(EvalError::Mismatch(
                    "ground-truth video label must be Abnormal or Normal".into(),
                ))
            }
        };
        let col = match pred {
            Diagnosis::Abnormal => 0,
            Diagnosis::Normal => 1,
            Diagnosis::Undetected => 2,
        };
        counts[row][col] += 1;
    }
    Ok(counts)
}

/// Frame-level matrix: rows are ground-truth classes 1..5, columns the
/// predicted severity class with classes 0 and 6 folded into [`NO_CLASS`].
pub fn build_frame_confusion(gt_classes: &[u8], analyses: &[FrameAnalysis]) -> Result<ConfusionMatrix, EvalError> {
    if gt_classes.len() != analyses.len() {
        return Err(EvalError::Mismatch(format!(
            "{} ground-truth labels for {} frames",
            gt_classes.len(),
            analyses.len()
        )));
    }
    let labels: Vec<String> = (1..=5).map(|c| format!("Class {c}")).collect();
    let mut columns = labels.clone();
    columns.push(NO_CLASS.to_string());
    let mut counts = vec![vec![0i64; 6]; 5];
    for (&gt, a) in gt_classes.iter().zip(analyses) {
        if !(1..=5).contains(&gt) {
            return Err(EvalError::LabelOutOfRange(gt));
        }
        let col = match a.severity.class {
            c @ 1..=5 => usize::from(c) - 1,
            _ => 5,
        };
        counts[usize::from(gt) - 1][col] += 1;
    }
    Ok(ConfusionMatrix {
        rows: labels,
        columns,
        counts,
    })
}
