//! Classification metrics and report rendering.
//!
//! Confusion rows are gold classes, columns predicted classes. Any 0/0 in
//! precision, recall or F1 is reported as 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::EmotionLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 || counts.iter().any(|r| r.len() != c) {
            return Err(Error::InvalidParameter("confusion counts must be a non-empty square matrix".into()));
        }
        Ok(Self { counts })
    }

    /// Build from class indices in `0..classes`.
    pub fn from_indices(golds: &[usize], preds: &[usize], classes: usize) -> Result<Self> {
        if golds.len() != preds.len() {
            return Err(Error::InvalidParameter(format!(
                "{} gold labels but {} predictions",
                golds.len(),
                preds.len()
            )));
        }
        if golds.is_empty() {
            return Err(Error::InvalidParameter("no samples to evaluate".into()));
        }
        let mut cm = Self::zeros(classes);
        for (&g, &p) in golds.iter().zip(preds) {
            for i in [g, p] {
                if i >= classes {
                    return Err(Error::ClassIndex { index: i, classes });
                }
            }
            cm.counts[g][p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold][pred]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

pub fn confusion_matrix(golds: &[EmotionLabel], preds: &[EmotionLabel]) -> Result<ConfusionMatrix> {
    let g: Vec<usize> = golds.iter().map(|l| l.index()).collect();
    let p: Vec<usize> = preds.iter().map(|l| l.index()).collect();
    ConfusionMatrix::from_indices(&g, &p, EmotionLabel::COUNT)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `count` as a percentage of `total`, 0 when `total` is 0.
fn percent(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 * 100.0 / total as f64
    }
}

/// Harmonic mean of precision and recall.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn per_class_prf(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let support = cm.support(c);
            let precision = percent(tp, cm.predicted(c)) / 100.0;
            // Same arithmetic path as the row-normalized diagonal.
            let recall = percent(tp, support) / 100.0;
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
            }
        })
        .collect()
}

/// Unweighted mean over all classes, zero-support ones included.
pub fn macro_average(per_class: &[ClassMetrics]) -> Averages {
    let n = per_class.len().max(1) as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    Averages {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    }
}

/// Support-weighted mean.
pub fn weighted_average(per_class: &[ClassMetrics]) -> Result<Averages> {
    let total: u64 = per_class.iter().map(|m| m.support).sum();
    if total == 0 {
        return Err(Error::InvalidParameter("weighted average needs nonzero total support".into()));
    }
    let mean =
        |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / total as f64;
    Ok(Averages {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowNormalized {
    /// Row percentages; all zero for rows without support.
    pub percent: Vec<Vec<f64>>,
    pub zero_rows: Vec<usize>,
}

pub fn row_normalize(cm: &ConfusionMatrix) -> RowNormalized {
    let mut zero_rows = Vec::new();
    let percent = cm
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let s: u64 = row.iter().sum();
            if s == 0 {
                zero_rows.push(i);
            }
            row.iter().map(|&c| percent(c, s)).collect()
        })
        .collect();
    RowNormalized { percent, zero_rows }
}

/// Weighted F1 from index lists.
pub fn weighted_f1(golds: &[usize], preds: &[usize], classes: usize) -> Result<f64> {
    let cm = ConfusionMatrix::from_indices(golds, preds, classes)?;
    Ok(weighted_average(&per_class_prf(&cm))?.f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    #[serde(rename = "weighted")]
    pub weighted_avg: Averages,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let per_class = per_class_prf(&cm);
        let labels = (0..cm.classes())
            .map(|i| EmotionLabel::from_index(i).map_or_else(|| format!("class{i}"), |l| l.to_string()))
            .collect();
        Ok(Self {
            labels,
            macro_avg: macro_average(&per_class),
            weighted_avg: weighted_average(&per_class)?,
            per_class,
            confusion: cm,
        })
    }

    pub fn from_indices(golds: &[usize], preds: &[usize], classes: usize) -> Result<Self> {
        Self::from_confusion(ConfusionMatrix::from_indices(golds, preds, classes)?)
    }

    /// Aligned table, three decimals.
    pub fn to_text_table(&self) -> String {
        let width = self.labels.iter().map(String::len).chain([13]).max().unwrap_or(13);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>6}  {:>8}  {:>7}",
            "Emotion", "Precision", "Recall", "F1-score", "Support"
        );
        for (label, m) in self.labels.iter().zip(&self.per_class) {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.3}  {:>6.3}  {:>8.3}  {:>7}",
                label, m.precision, m.recall, m.f1, m.support
            );
        }
        let total: u64 = self.per_class.iter().map(|m| m.support).sum();
        for (name, a) in [("Macro Avg.", &self.macro_avg), ("Weighted Avg.", &self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.3}  {:>6.3}  {:>8.3}  {:>7}",
                name, a.precision, a.recall, a.f1, total
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("eval report", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("eval report", e))
    }

    /// Row-normalized confusion matrix, one decimal.
    pub fn confusion_csv(&self) -> String {
        let rn = row_normalize(&self.confusion);
        let mut out = String::from("gold");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&rn.percent) {
            out.push_str(l);
            for v in row {
                let _ = write!(out, ",{v:.1}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EmotionLabel::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn small_confusion() {
        let cm = confusion_matrix(&[Anger, Anger, Joy], &[Anger, Joy, Joy]).unwrap();
        assert_eq!(cm.get(0, 0), 1);
        assert_eq!(cm.get(0, 3), 1);
        assert_eq!(cm.get(3, 3), 1);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn single_sample_one_cell() {
        let cm = confusion_matrix(&[Fear], &[Sadness]).unwrap();
        let nonzero: usize = cm.rows().iter().flatten().filter(|c| **c > 0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn input_errors() {
        assert!(confusion_matrix(&[Anger], &[]).is_err());
        assert!(confusion_matrix(&[], &[]).is_err());
        assert!(matches!(
            ConfusionMatrix::from_indices(&[0], &[9], 7),
            Err(Error::ClassIndex { index: 9, .. })
        ));
    }

    #[test]
    fn f1_examples() {
        assert!(close(f1_score(0.497, 0.487), 0.492, 1e-3));
        assert!(close(f1_score(0.616, 0.868), 0.721, 1e-3));
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn absent_class_is_all_zero() {
        let cm = confusion_matrix(&[Anger, Joy], &[Anger, Joy]).unwrap();
        let m = per_class_prf(&cm)[Disgust.index()];
        assert_eq!((m.precision, m.recall, m.f1, m.support), (0.0, 0.0, 0.0, 0));
        assert_eq!(row_normalize(&cm).zero_rows, vec![1, 2, 4, 5, 6]);
    }

    #[test]
    fn weighted_examples() {
        let pc = [
            ClassMetrics {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                support: 3,
            },
            ClassMetrics {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                support: 1,
            },
        ];
        assert_eq!(weighted_average(&pc).unwrap().f1, 0.75);
        let zero = [ClassMetrics { support: 0, ..pc[0] }];
        assert!(weighted_average(&zero).is_err());
    }

    #[test]
    fn row_normalize_halves() {
        let mut counts = vec![vec![0; 7]; 7];
        counts[0][0] = 1;
        counts[0][1] = 1;
        let rn = row_normalize(&ConfusionMatrix::from_counts(counts).unwrap());
        assert_eq!(&rn.percent[0][..3], &[50.0, 50.0, 0.0]);
    }

    #[test]
    fn report_renderings() {
        let golds = [0, 0, 1, 2, 2, 2];
        let preds = [0, 1, 1, 2, 2, 0];
        let r = EvalReport::from_indices(&golds, &preds, 7).unwrap();
        let table = r.to_text_table();
        assert!(table.contains("Weighted Avg."));
        assert!(table.lines().nth(1).unwrap().starts_with("anger"));
        let csv = r.confusion_csv();
        assert_eq!(csv.lines().next().unwrap(), "gold,anger,disgust,fear,joy,neutral,sadness,surprise");
        assert_eq!(csv.lines().nth(1).unwrap(), "anger,50.0,50.0,0.0,0.0,0.0,0.0,0.0");
        let back = EvalReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
