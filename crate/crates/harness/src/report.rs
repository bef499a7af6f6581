//! Comparison tables in the `.761±.009` style.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ktbench_core::Metric;
use serde::{Deserialize, Serialize};

use crate::cv::RunResult;
use crate::error::{HarnessError, Result};
use crate::grid::select_best;
use crate::kind::ModelKind;
use crate::selection::LossMatrix;

/// Marker for a value that is mathematically undefined.
pub const UNDEFINED: &str = "\u{2014}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: ModelKind,
    pub name: String,
    pub config: String,
    pub mean: Vec<Option<f64>>,
    pub std: Vec<Option<f64>>,
    /// Whether the row holds the best value of each column.
    pub best: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTable {
    pub dataset: String,
    pub metrics: Vec<Metric>,
    pub rows: Vec<ReportRow>,
}

/// Three decimals without the leading zero: `.761`, `-.050`, `1.000`.
pub fn format_score(v: f64) -> String {
    let s = format!("{v:.3}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        if rest.chars().all(|c| c == '0') {
            format!(".{rest}")
        } else {
            format!("-.{rest}")
        }
    } else {
        s
    }
}

pub fn format_cell(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{}±{}", format_score(m), format_score(s)),
        (Some(m), None) => format_score(m),
        _ => UNDEFINED.to_string(),
    }
}

/// One table per dataset with one row per model. A model with several
/// configurations is represented by its best one under `select`.
pub fn aggregate_report(results: &[RunResult], select: Metric) -> Result<Vec<DatasetTable>> {
    if results.is_empty() {
        return Err(HarnessError::Config("no results to report".into()));
    }
    let mut by_dataset: BTreeMap<&str, BTreeMap<ModelKind, Vec<RunResult>>> = BTreeMap::new();
    for r in results {
        by_dataset
            .entry(&r.dataset)
            .or_default()
            .entry(r.model)
            .or_default()
            .push(r.clone());
    }
    let metrics = Metric::ALL.to_vec();
    let mut tables = Vec::new();
    for (dataset, models) in by_dataset {
        let mut rows = Vec::new();
        for (model, runs) in models {
            let chosen = select_best(&runs, select).unwrap_or(&runs[0]);
            rows.push(ReportRow {
                model,
                name: model.display_name(),
                config: chosen.config.clone(),
                mean: metrics.iter().map(|&m| chosen.summary.mean.get(m)).collect(),
                std: metrics.iter().map(|&m| chosen.summary.std.get(m)).collect(),
                best: vec![false; metrics.len()],
            });
        }
        for (c, &m) in metrics.iter().enumerate() {
            let best = rows
                .iter()
                .filter_map(|r| r.mean[c])
                .reduce(|a, b| if m.better(b, a) { b } else { a });
            if let Some(best) = best {
                for row in &mut rows {
                    row.best[c] = row.mean[c] == Some(best);
                }
            }
        }
        tables.push(DatasetTable {
            dataset: dataset.to_string(),
            metrics: metrics.clone(),
            rows,
        });
    }
    Ok(tables)
}

pub fn render_text(tables: &[DatasetTable]) -> String {
    let mut out = String::new();
    for t in tables {
        let _ = writeln!(out, "Dataset: {}", t.dataset);
        let mut header = vec!["Model".to_string()];
        header.extend(t.metrics.iter().map(|m| m.name().to_uppercase()));
        let mut lines = vec![header];
        for row in &t.rows {
            let mut cells = vec![row.name.clone()];
            for c in 0..t.metrics.len() {
                let mut cell = format_cell(row.mean[c], row.std[c]);
                if row.best[c] {
                    cell.push('*');
                }
                cells.push(cell);
            }
            lines.push(cells);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        for line in &lines {
            let padded: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        }
        out.push_str("(* best in column)\n\n");
    }
    out
}

pub fn render_csv(tables: &[DatasetTable]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["dataset".to_string(), "model".to_string(), "config".to_string()];
    for m in Metric::ALL {
        header.push(m.name().to_string());
        header.push(format!("{}_std", m.name()));
    }
    header.push("best".to_string());
    w.write_record(&header).map_err(csv_error)?;
    for t in tables {
        for row in &t.rows {
            let mut rec = vec![t.dataset.clone(), row.model.tag(), row.config.clone()];
            for c in 0..t.metrics.len() {
                rec.push(row.mean[c].map(|v| v.to_string()).unwrap_or_default());
                rec.push(row.std[c].map(|v| v.to_string()).unwrap_or_default());
            }
            let best: Vec<&str> = t
                .metrics
                .iter()
                .zip(&row.best)
                .filter(|(_, &b)| b)
                .map(|(m, _)| m.name())
                .collect();
            rec.push(best.join(";"));
            w.write_record(&rec).map_err(csv_error)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Invariant(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Invariant(e.to_string()))
}

pub fn render_json(tables: &[DatasetTable]) -> Result<String> {
    serde_json::to_string_pretty(tables).map_err(|e| HarnessError::Invariant(e.to_string()))
}

fn csv_error(e: csv::Error) -> HarnessError {
    HarnessError::Invariant(format!("csv output: {e}"))
}

pub fn render_loss_matrix(matrix: &LossMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Selection loss over {} model/dataset groups (rows: selection metric, columns: evaluation metric)",
        matrix.groups
    );
    for (label, grid) in [("mean", &matrix.mean), ("max", &matrix.max)] {
        let _ = writeln!(out, "\n[{label}]");
        let mut header = format!("{:<10}", "");
        for m in &matrix.metrics {
            let _ = write!(header, "{:>10}", m.name());
        }
        let _ = writeln!(out, "{}", header.trim_end());
        for (a, row) in grid.iter().enumerate() {
            let mut line = format!("{:<10}", matrix.metrics[a].name());
            for v in row {
                let cell = v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.4}"));
                let _ = write!(line, "{cell:>10}");
            }
            let _ = writeln!(out, "{line}");
        }
    }
    for w in &matrix.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

pub fn render_loss_matrix_csv(matrix: &LossMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["select", "eval", "mean", "max", "groups"]).map_err(csv_error)?;
    for (a, sel) in matrix.metrics.iter().enumerate() {
        for (b, eval) in matrix.metrics.iter().enumerate() {
            w.write_record([
                sel.name().to_string(),
                eval.name().to_string(),
                matrix.mean[a][b].map(|v| v.to_string()).unwrap_or_default(),
                matrix.max[a][b].map(|v| v.to_string()).unwrap_or_default(),
                matrix.counts[a][b].to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Invariant(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Invariant(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_format() {
        assert_eq!(format_score(0.7612), ".761");
        assert_eq!(format_score(0.0091), ".009");
        assert_eq!(format_score(1.0), "1.000");
        assert_eq!(format_score(-0.05), "-.050");
        assert_eq!(format_score(-0.0001), ".000");
        assert_eq!(format_cell(Some(0.761), Some(0.009)), ".761±.009");
        assert_eq!(format_cell(None, None), UNDEFINED);
    }
}
