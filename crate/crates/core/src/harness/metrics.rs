//! Metrics rows and the versioned CSV schema.

use serde::{Deserialize, Serialize};

/// Schema tag written as a comment on the first CSV line. Bump on any
/// column change.
pub const METRICS_SCHEMA: &str = "mdlab.metrics.v1";

/// Column order of the metrics CSV. `mean_latency_s` is the only
/// non-deterministic column.
pub const METRICS_HEADER: &str =
    "strategy,B,seeds,accuracy,tie_rate,collapse_rate,mean_latency_s";

/// One strategy-setting summary over a task set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub strategy: String,
    /// Decodes per item.
    pub b: usize,
    /// Seeds per block size (1 for single-decode strategies).
    pub seeds: usize,
    pub accuracy: f64,
    pub tie_rate: f64,
    pub collapse_rate: f64,
    pub mean_latency_s: f64,
}

impl MetricsRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.strategy,
            self.b,
            self.seeds,
            self.accuracy,
            self.tie_rate,
            self.collapse_rate,
            self.mean_latency_s
        )
    }
}

/// Render the metrics CSV: schema comment, header, one row per
/// strategy-setting in config order.
pub fn write_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("# schema: {METRICS_SCHEMA}\n{METRICS_HEADER}\n");
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// The CSV with the latency column blanked, for byte-level determinism
/// comparisons.
pub fn strip_latency_column(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            if line.starts_with('#') || line == METRICS_HEADER {
                line.to_string()
            } else {
                match line.rfind(',') {
                    Some(i) => format!("{},-", &line[..i]),
                    None => line.to_string(),
                }
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// One line of the optional per-item record stream (JSON lines).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ItemRecord {
    pub task_id: String,
    pub strategy: String,
    /// Winning parsed answer, if any candidate parsed.
    pub winner: Option<String>,
    pub correct: bool,
    pub tie: bool,
    pub collapse: bool,
}
