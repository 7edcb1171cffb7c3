//! Confusion matrix, per-class and macro precision/recall/F1, and the
//! error-analysis table. Degenerate 0/0 ratios resolve to 0 so macro
//! averages stay total; reported values round to 4 decimal places.

use serde::{Deserialize, Serialize};

use crate::corpus::ParagraphRecord;
use crate::error::{Error, Result};
use crate::predictor::Prediction;

/// 2x2 counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// Precision, recall, F1 for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class and macro-averaged metrics. The per-class recalls are the
/// "predicted correctly" percentages of the heatmap rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub class0: ClassMetrics,
    pub class1: ClassMetrics,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Tally predictions against gold labels. Inputs must be equal-length,
/// non-empty lists of binary labels.
pub fn confusion(preds: &[u8], golds: &[u8]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::Invalid(format!(
            "length mismatch: {} predictions vs {} golds",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Invalid("no examples to score".to_string()));
    }
    let mut cm = ConfusionMatrix {
        true_pos: 0,
        false_pos: 0,
        false_neg: 0,
        true_neg: 0,
    };
    for (&p, &g) in preds.iter().zip(golds) {
        match (p, g) {
            (1, 1) => cm.true_pos += 1,
            (1, 0) => cm.false_pos += 1,
            (0, 1) => cm.false_neg += 1,
            (0, 0) => cm.true_neg += 1,
            _ => {
                return Err(Error::Invalid(format!(
                    "labels must be 0 or 1 (saw pred {p}, gold {g})"
                )))
            }
        }
    }
    Ok(cm)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, and F1 for the chosen class (the matrix roles swap
/// for class 0). Any 0/0 resolves to 0.
pub fn prf(cm: &ConfusionMatrix, class_id: u8) -> Result<ClassMetrics> {
    let (tp, fp, fn_) = match class_id {
        1 => (cm.true_pos, cm.false_pos, cm.false_neg),
        0 => (cm.true_neg, cm.false_neg, cm.false_pos),
        other => return Err(Error::Invalid(format!("class_id {other} outside {{0, 1}}"))),
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ClassMetrics {
        precision,
        recall,
        f1,
    })
}

/// Full report: per-class metrics plus their unweighted means.
pub fn macro_report(cm: &ConfusionMatrix) -> MetricsReport {
    let class0 = prf(cm, 0).expect("class 0 is valid");
    let class1 = prf(cm, 1).expect("class 1 is valid");
    MetricsReport {
        confusion: *cm,
        class0,
        class1,
        macro_precision: (class0.precision + class1.precision) / 2.0,
        macro_recall: (class0.recall + class1.recall) / 2.0,
        macro_f1: (class0.f1 + class1.f1) / 2.0,
    }
}

/// Reporting precision: 4 decimal places (Rust's formatter rounds ties to
/// even).
pub fn round4(value: f64) -> String {
    format!("{value:.4}")
}

impl MetricsReport {
    /// Aligned plain-text rendering.
    pub fn render_text(&self) -> String {
        let cm = &self.confusion;
        let mut out = String::new();
        out.push_str("confusion matrix (rows = gold, cols = predicted)\n");
        out.push_str(&format!(
            "            pred 0      pred 1\n  gold 0  {:>8}    {:>8}\n  gold 1  {:>8}    {:>8}\n",
            cm.true_neg, cm.false_pos, cm.false_neg, cm.true_pos
        ));
        out.push_str(&format!(
            "  class 0 predicted correctly: {}%\n",
            round_pct(self.class0.recall)
        ));
        out.push_str(&format!(
            "  class 1 predicted correctly: {}%\n",
            round_pct(self.class1.recall)
        ));
        out.push_str("\nclass        P         R         F1\n");
        for (name, m) in [("0 (neg)", self.class0), ("1 (pos)", self.class1)] {
            out.push_str(&format!(
                "{name:<9}{:>8}  {:>8}  {:>8}\n",
                round4(m.precision),
                round4(m.recall),
                round4(m.f1)
            ));
        }
        out.push_str(&format!(
            "macro    {:>8}  {:>8}  {:>8}\n",
            round4(self.macro_precision),
            round4(self.macro_recall),
            round4(self.macro_f1)
        ));
        out
    }

    /// Static SVG heatmap of the confusion matrix.
    pub fn render_svg(&self) -> String {
        let cm = &self.confusion;
        let cells = [
            (0, 0, cm.true_neg),
            (1, 0, cm.false_pos),
            (0, 1, cm.false_neg),
            (1, 1, cm.true_pos),
        ];
        let max = cells.iter().map(|&(_, _, v)| v).max().unwrap_or(0).max(1);
        let mut svg = String::from(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"260\" height=\"260\" \
             font-family=\"monospace\" font-size=\"14\">\n",
        );
        svg.push_str("<text x=\"130\" y=\"20\" text-anchor=\"middle\">predicted</text>\n");
        svg.push_str(
            "<text x=\"16\" y=\"140\" text-anchor=\"middle\" transform=\"rotate(-90 16 140)\">gold</text>\n",
        );
        for (col, row, value) in cells {
            let x = 40 + col * 100;
            let y = 40 + row * 100;
            // Darker cell = larger count.
            let shade = 255 - (value as f64 / max as f64 * 160.0) as u32;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"100\" height=\"100\" \
                 fill=\"rgb({shade},{shade},255)\" stroke=\"black\"/>\n"
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{value}</text>\n",
                x + 50,
                y + 55
            ));
        }
        for (i, label) in ["0", "1"].iter().enumerate() {
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"36\" text-anchor=\"middle\">{label}</text>\n",
                90 + i * 100
            ));
            svg.push_str(&format!(
                "<text x=\"32\" y=\"{}\" text-anchor=\"end\">{label}</text>\n",
                95 + i * 100
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn round_pct(rate: f64) -> String {
    format!("{:.1}", rate * 100.0)
}

/// One row of the error-analysis table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub predicted: u8,
    pub text: String,
    pub gold: u8,
}

/// Aligned (prediction, paragraph, gold) rows plus the agreement count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub agreements: usize,
}

/// Build the error table. `preds`, `records`, and `golds` must be aligned:
/// same length, with matching par_ids between predictions and records.
pub fn error_table(
    preds: &[Prediction],
    records: &[ParagraphRecord],
    golds: &[u8],
) -> Result<ErrorTable> {
    if preds.len() != records.len() || preds.len() != golds.len() {
        return Err(Error::Invalid(format!(
            "misaligned inputs: {} predictions, {} records, {} golds",
            preds.len(),
            records.len(),
            golds.len()
        )));
    }
    let mut rows = Vec::with_capacity(preds.len());
    let mut agreements = 0;
    for ((pred, rec), &gold) in preds.iter().zip(records).zip(golds) {
        if pred.par_id != rec.par_id {
            return Err(Error::Invalid(format!(
                "misaligned inputs: prediction {:?} vs record {:?}",
                pred.par_id, rec.par_id
            )));
        }
        if pred.label == gold {
            agreements += 1;
        }
        rows.push(ErrorRow {
            predicted: pred.label,
            text: rec.text.clone(),
            gold,
        });
    }
    Ok(ErrorTable { rows, agreements })
}

impl ErrorTable {
    pub fn disagreements(&self) -> Vec<&ErrorRow> {
        self.rows.iter().filter(|r| r.predicted != r.gold).collect()
    }

    /// Plain-text rendering; `only_disagreements` filters to errors. The
    /// summary line reports agreements out of the total.
    pub fn render_text(&self, only_disagreements: bool) -> String {
        let mut out = String::from("pred  gold  paragraph\n");
        for row in &self.rows {
            if only_disagreements && row.predicted == row.gold {
                continue;
            }
            out.push_str(&format!(
                "{:>4}  {:>4}  {}\n",
                row.predicted, row.gold, row.text
            ));
        }
        out.push_str(&format!(
            "agreement: {} of {}\n",
            self.agreements,
            self.rows.len()
        ));
        out
    }
}
