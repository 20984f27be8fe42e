//! Counting accuracy, confusion matrices and the squared length error.

use std::fmt::Write as _;

use kinchain_core::chain::{LENGTH_LABEL_WIDTH, MAX_MOVING_LINKS};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

fn check_pairs(preds: &[usize], truths: &[usize]) -> Result<()> {
    if preds.is_empty() {
        return Err(invalid("no predictions to score"));
    }
    if preds.len() != truths.len() {
        return Err(invalid(format!(
            "{} predictions for {} ground-truth labels",
            preds.len(),
            truths.len()
        )));
    }
    Ok(())
}

/// Fraction of predictions equal to the truth.
pub fn accuracy(preds: &[usize], truths: &[usize]) -> Result<f64> {
    check_pairs(preds, truths)?;
    let hits = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Link-count confusion: `counts[truth - 1][pred - 1]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; MAX_MOVING_LINKS]; MAX_MOVING_LINKS],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..MAX_MOVING_LINKS).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// Each row divided by its sum; empty rows stay zero.
    pub fn row_normalized(&self) -> [[f64; MAX_MOVING_LINKS]; MAX_MOVING_LINKS] {
        let mut out = [[0.0; MAX_MOVING_LINKS]; MAX_MOVING_LINKS];
        for (row, counts) in out.iter_mut().zip(&self.counts) {
            let sum: u64 = counts.iter().sum();
            if sum > 0 {
                for (o, c) in row.iter_mut().zip(counts) {
                    *o = *c as f64 / sum as f64;
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth\\pred");
        for p in 1..=MAX_MOVING_LINKS {
            let _ = write!(s, ",{p}");
        }
        s.push('\n');
        for (t, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "{}", t + 1);
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    /// Binary PGM heatmap of the row-normalized matrix, `cell` pixels per entry.
    pub fn to_pgm(&self, cell: usize) -> Vec<u8> {
        let cell = cell.max(1);
        let side = MAX_MOVING_LINKS * cell;
        let norm = self.row_normalized();
        let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
        for y in 0..side {
            for x in 0..side {
                out.push((norm[y / cell][x / cell] * 255.0).round() as u8);
            }
        }
        out
    }
}

/// Tallies `(truth, pred)` pairs; classes are link counts 1..=6.
pub fn confusion(preds: &[usize], truths: &[usize]) -> Result<ConfusionMatrix> {
    check_pairs(preds, truths)?;
    let mut m = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truths) {
        for v in [p, t] {
            if !(1..=MAX_MOVING_LINKS).contains(&v) {
                return Err(invalid(format!("link count {v} outside 1..={MAX_MOVING_LINKS}")));
            }
        }
        m.counts[t - 1][p - 1] += 1;
    }
    Ok(m)
}

/// Sum of squared differences between two padded seven-vectors.
pub fn length_error(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != LENGTH_LABEL_WIDTH || pred.len() != LENGTH_LABEL_WIDTH {
        return Err(invalid(format!(
            "length vectors must have {LENGTH_LABEL_WIDTH} entries, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    Ok(truth.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum())
}

pub fn mean_length_error(truths: &[[f64; LENGTH_LABEL_WIDTH]], preds: &[[f64; LENGTH_LABEL_WIDTH]]) -> Result<f64> {
    if truths.is_empty() || truths.len() != preds.len() {
        return Err(invalid(format!(
            "{} predictions for {} ground-truth vectors",
            preds.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    for (t, p) in truths.iter().zip(preds) {
        total += length_error(t, p)?;
    }
    Ok(total / truths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_size() {
        let m = confusion(&[1, 2, 2], &[1, 2, 3]).unwrap();
        let pgm = m.to_pgm(4);
        let header = b"P5\n24 24\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 24 * 24);
        // row 3 is all "predicted 2": full intensity at (row 2, col 1)
        assert_eq!(pgm[header.len() + (2 * 4) * 24 + 4], 255);
        assert_eq!(pgm[header.len() + (2 * 4) * 24 + 8], 0);
    }

    #[test]
    fn csv_layout() {
        let m = confusion(&[5], &[2]).unwrap();
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "truth\\pred,1,2,3,4,5,6");
        assert_eq!(lines[2], "2,0,0,0,0,1,0");
    }
}
