//! Run reports and the model comparison table.

use serde::Serialize;

use crate::dataset::Dataset;
use crate::eval::metrics::{ConfidenceInterval, Metric};
use crate::eval::protocol::{ModelReport, ProtocolConfig};

pub const REPORT_FORMAT: &str = "hemorisk-report/1";
pub const TABLE_FORMAT: &str = "hemorisk-table/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub positives: usize,
    pub width: usize,
}

impl DatasetSummary {
    pub fn of(data: &Dataset) -> Self {
        Self {
            rows: data.n_rows(),
            positives: data.positives(),
            width: data.width(),
        }
    }
}

/// Everything needed to audit a run. Wall-clock timings are deliberately
/// absent so that reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub format_version: &'static str,
    pub seed: u64,
    /// The run configuration as given, echoed verbatim.
    pub config: String,
    pub dataset: DatasetSummary,
    pub protocol: ProtocolConfig,
    pub models: Vec<ModelReport>,
}

fn cell(ci: Option<&ConfidenceInterval>) -> String {
    match ci {
        None => "undefined".to_string(),
        Some(ci) => match (ci.lower, ci.upper) {
            (Some(lo), Some(hi)) => format!("{:.1}% ({:.1}%–{:.1}%)", 100.0 * ci.mean, 100.0 * lo, 100.0 * hi),
            _ => format!("{:.1}% (n/a)", 100.0 * ci.mean),
        },
    }
}

/// One row per model, one column per threshold metric, each as
/// `mean (lower–upper)` in percent.
pub fn comparison_table(models: &[ModelReport]) -> String {
    let mut rows = vec![std::iter::once("Model".to_string())
        .chain(Metric::THRESHOLD.iter().map(|m| m.label().to_string()))
        .collect::<Vec<_>>()];
    for m in models {
        rows.push(
            std::iter::once(m.kind.display_name().to_string())
                .chain(Metric::THRESHOLD.iter().map(|&metric| cell(m.interval(metric))))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("# format: {TABLE_FORMAT}\n");
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
