//! Result tables: one row per evaluated architecture.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use kinchain_core::dataset::{Modality, StackMode};
use kinchain_models::{Architecture, Network};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EvalError, Result};

/// What a row measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Evaluation {
    /// Link counting, scored by accuracy.
    Count,
    /// Counter routed to per-count length regressors, scored by E_L.
    Lengths,
    /// A single network regressing all seven lengths, scored by E_L.
    EndToEnd,
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Evaluation::Count => "# moving links",
            Evaluation::Lengths => "link lengths",
            Evaluation::EndToEnd => "end-to-end",
        })
    }
}

impl FromStr for Evaluation {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "count" | "# moving links" | "links" => Ok(Evaluation::Count),
            "lengths" | "link lengths" | "naive" => Ok(Evaluation::Lengths),
            "end-to-end" | "e2e" | "endtoend" => Ok(Evaluation::EndToEnd),
            _ => Err(invalid(format!("unknown evaluation {s:?}"))),
        }
    }
}

/// Published figures for the same architecture and evaluation, shown next
/// to desk-scale results for orientation.
pub fn reference_value(arch: Architecture, evaluation: Evaluation) -> Option<f64> {
    use Modality::*;
    use Network::*;
    use StackMode::*;
    let key = (arch.network, arch.modality, arch.mode, evaluation);
    Some(match key {
        (Conv3d, Depth, Temporal, Evaluation::Count) => 0.682,
        (CnnLstm, Depth, Temporal, Evaluation::Count) => 0.638,
        (Conv3d, Depth, Multiview, Evaluation::Count) => 0.949,
        (CnnLstm, Depth, Multiview, Evaluation::Count) => 0.956,
        (Conv3d, Gray, Temporal, Evaluation::Count) => 0.559,
        (CnnLstm, Gray, Multiview, Evaluation::Count) => 0.891,
        (Conv3d, Depth, Temporal, Evaluation::Lengths) => 6.64,
        (Conv3d, Depth, Multiview, Evaluation::Lengths) => 0.543,
        (Conv3d, Depth, Temporal, Evaluation::EndToEnd) => 14.8,
        (Conv3d, Depth, Multiview, Evaluation::EndToEnd) => 0.415,
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub arch: Architecture,
    pub evaluation: Evaluation,
    /// Frames per stack along time (temporal input), else 0.
    pub temporal: usize,
    /// Cameras per stack (multiview input), else 0.
    pub views: usize,
    pub train_instances: usize,
    pub test_instances: usize,
    /// Stacks drawn for training over one epoch.
    pub train_stacks: usize,
    pub test_stacks: usize,
    pub accuracy: Option<f64>,
    /// Mean squared length error.
    pub error: Option<f64>,
    pub reference: Option<f64>,
}

impl ReportRow {
    /// Square root of the mean error, in meters.
    pub fn root_error(&self) -> Option<f64> {
        self.error.map(f64::sqrt)
    }

    fn cells(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        vec![
            self.arch.to_string(),
            self.evaluation.to_string(),
            u8::from(self.arch.modality == Modality::Gray).to_string(),
            u8::from(self.arch.modality == Modality::Depth).to_string(),
            self.temporal.to_string(),
            self.views.to_string(),
            (self.temporal + self.views).to_string(),
            self.train_instances.to_string(),
            self.test_instances.to_string(),
            self.train_stacks.to_string(),
            self.test_stacks.to_string(),
            opt(self.accuracy),
            opt(self.error),
            opt(self.root_error()),
            opt(self.reference),
        ]
    }
}

pub const REPORT_COLUMNS: [&str; 15] = [
    "architecture",
    "evaluation",
    "greyscale",
    "depth",
    "temporal",
    "views",
    "total",
    "train_instances",
    "test_instances",
    "train_stacks",
    "test_stacks",
    "accuracy",
    "error",
    "root_error",
    "reference",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut s = REPORT_COLUMNS.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.cells().join(","));
            s.push('\n');
        }
        s
    }

    /// Column-aligned plain text.
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = std::iter::once(REPORT_COLUMNS.iter().map(|c| c.to_string()).collect())
            .chain(self.rows.iter().map(ReportRow::cells))
            .collect();
        let widths: Vec<usize> = (0..REPORT_COLUMNS.len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| if c < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(s, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        s
    }

    /// Writes `report_<unix seconds>.csv` (and `.txt`) under `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.write_stamped(dir, &stamp.to_string())
    }

    pub fn write_stamped(&self, dir: &Path, stamp: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("report_{stamp}.csv"));
        fs::write(&path, self.to_csv())?;
        fs::write(dir.join(format!("report_{stamp}.txt")), self.to_text())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(evaluation: Evaluation) -> ReportRow {
        ReportRow {
            arch: "CONV3D-Depth-MV".parse().unwrap(),
            evaluation,
            temporal: 0,
            views: 8,
            train_instances: 360,
            test_instances: 180,
            train_stacks: 1440,
            test_stacks: 1800,
            accuracy: (evaluation == Evaluation::Count).then_some(0.5),
            error: (evaluation != Evaluation::Count).then_some(0.25),
            reference: None,
        }
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let report = BenchmarkReport {
            rows: vec![row(Evaluation::Count), row(Evaluation::EndToEnd)],
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), REPORT_COLUMNS.len());
        assert_eq!(lines[1], "CONV3D-Depth-MV,# moving links,0,1,0,8,8,360,180,1440,1800,0.5000,,,");
        assert_eq!(lines[2], "CONV3D-Depth-MV,end-to-end,0,1,0,8,8,360,180,1440,1800,,0.2500,0.5000,");
    }

    #[test]
    fn text_columns_line_up() {
        let report = BenchmarkReport {
            rows: vec![row(Evaluation::Count), row(Evaluation::Lengths)],
        };
        let text = report.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        let end = |l: &str, col: &str| l.find(col).map(|i| i + col.len());
        let acc_end = end(lines[0], "accuracy").unwrap();
        assert_eq!(end(lines[2], "0.5000"), Some(acc_end));
    }

    #[test]
    fn evaluation_names_round_trip() {
        for e in [Evaluation::Count, Evaluation::Lengths, Evaluation::EndToEnd] {
            assert_eq!(e.to_string().parse::<Evaluation>().unwrap(), e);
        }
    }

    #[test]
    fn references_exist_for_multiview_counters() {
        let mv: Architecture = "CONV3D-Depth-MV".parse().unwrap();
        assert_eq!(reference_value(mv, Evaluation::Count), Some(0.949));
        let lstm: Architecture = "LSTM-Depth-MV".parse().unwrap();
        assert_eq!(reference_value(lstm, Evaluation::Count), Some(0.956));
        let tmp: Architecture = "LSTM-Grey-TMP".parse().unwrap();
        assert_eq!(reference_value(tmp, Evaluation::Count), None);
    }
}
