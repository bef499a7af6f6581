//! Persisted results.
//!
//! A results directory holds `results.csv`, one row per (model, dataset,
//! configuration, fold) with every metric (empty when undefined), and
//! `summary.json`, the full list of run results. The analysis commands
//! read `summary.json` back. Neither file records timings, so reruns with
//! the same inputs reproduce them byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use ktbench_core::Metric;

use crate::cv::RunResult;
use crate::error::{HarnessError, Result};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sorts results canonically: dataset, model, configuration.
pub fn sort_results(results: &mut [RunResult]) {
    results.sort_by(|a, b| {
        (a.dataset.as_str(), a.model, a.config.as_str()).cmp(&(b.dataset.as_str(), b.model, b.config.as_str()))
    });
}

pub fn results_csv(results: &[RunResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model", "dataset", "config", "fold", "targets", "epochs"];
    header.extend(Metric::ALL.iter().map(|m| m.name()));
    let fmt_err = |e: csv::Error| HarnessError::Invariant(format!("csv output: {e}"));
    w.write_record(&header).map_err(fmt_err)?;
    for r in results {
        for f in &r.folds {
            let mut rec = vec![
                r.model.tag(),
                r.dataset.clone(),
                r.config.clone(),
                f.fold.to_string(),
                f.targets.to_string(),
                f.epochs.to_string(),
            ];
            rec.extend(Metric::ALL.iter().map(|&m| f.report.get(m).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(fmt_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Invariant(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Invariant(e.to_string()))
}

/// Writes both result files into `dir`, creating it if needed, and returns
/// their paths.
pub fn save_results(results: &[RunResult], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    for r in &mut sorted {
        r.wall_clock = 0.0;
    }
    let csv_path = dir.join(RESULTS_CSV);
    fs::write(&csv_path, results_csv(&sorted)?).map_err(io(&csv_path))?;
    let json_path = dir.join(SUMMARY_JSON);
    let json = serde_json::to_string_pretty(&sorted).map_err(|e| HarnessError::Invariant(e.to_string()))?;
    fs::write(&json_path, json + "\n").map_err(io(&json_path))?;
    Ok(vec![csv_path, json_path])
}

pub fn load_results(dir: &Path) -> Result<Vec<RunResult>> {
    let path = dir.join(SUMMARY_JSON);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Format {
        path,
        message: e.to_string(),
    })
}
