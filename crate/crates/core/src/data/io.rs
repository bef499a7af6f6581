//! Canonical on-disk dataset layout.
//!
//! A dataset directory holds:
//! - `dataset.csv`: header `student,skill,correct`, then one attempt per
//!   line as dense indices, grouped by student in attempt order;
//! - `labels.json`: original student and skill labels plus metadata;
//! - `summary.json`: [`DatasetSummary`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, StudentSequence};
use crate::error::{DataError, Result};

pub const DATASET_FILE: &str = "dataset.csv";
pub const LABELS_FILE: &str = "labels.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Per-dataset statistics in the layout of the usual dataset overview table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub students: usize,
    pub attempts: usize,
    pub correct: usize,
    pub percent_correct: f64,
    pub skill_count: usize,
    pub max_attempts: usize,
    pub metadata: BTreeMap<String, String>,
}

impl DatasetSummary {
    pub fn of(dataset: &Dataset) -> Self {
        let attempts = dataset.attempt_count();
        let correct = dataset.correct_count();
        Self {
            students: dataset.student_count(),
            attempts,
            correct,
            percent_correct: if attempts == 0 {
                0.0
            } else {
                100.0 * correct as f64 / attempts as f64
            },
            skill_count: dataset.skill_count,
            max_attempts: dataset.max_sequence_len(),
            metadata: dataset.metadata.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Labels {
    skill_names: Vec<String>,
    student_names: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_canonical(dataset: &Dataset, dir: &Path) -> Result<DatasetSummary> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let csv_path = dir.join(DATASET_FILE);
    let mut out = std::io::BufWriter::new(fs::File::create(&csv_path).map_err(io_err(&csv_path))?);
    writeln!(out, "student,skill,correct").map_err(io_err(&csv_path))?;
    for seq in &dataset.sequences {
        for it in &seq.interactions {
            writeln!(out, "{},{},{}", seq.student, it.skill, it.correct).map_err(io_err(&csv_path))?;
        }
    }
    out.flush().map_err(io_err(&csv_path))?;

    let labels = Labels {
        skill_names: dataset.skill_names.clone(),
        student_names: dataset.student_names.clone(),
        metadata: dataset.metadata.clone(),
    };
    write_json(&dir.join(LABELS_FILE), &labels)?;
    let summary = DatasetSummary::of(dataset);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| DataError::Contract(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Reads a directory written by [`write_canonical`]; indices are taken as-is.
pub fn read_canonical(dir: &Path) -> Result<Dataset> {
    let labels_path = dir.join(LABELS_FILE);
    let labels: Labels = serde_json::from_str(&fs::read_to_string(&labels_path).map_err(io_err(&labels_path))?)
        .map_err(|e| DataError::Parse {
            path: labels_path.clone(),
            row: e.line(),
            message: e.to_string(),
        })?;

    let csv_path = dir.join(DATASET_FILE);
    let mut rdr = csv::Reader::from_path(&csv_path).map_err(|e| DataError::Parse {
        path: csv_path.clone(),
        row: 0,
        message: e.to_string(),
    })?;
    let mut sequences: Vec<(usize, Vec<(usize, u8)>)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let bad = |message: String| DataError::Parse {
            path: csv_path.clone(),
            row,
            message,
        };
        let record = record.map_err(|e| bad(e.to_string()))?;
        let num = |col: usize| -> Result<usize> {
            record
                .get(col)
                .ok_or_else(|| bad(format!("missing column {col}")))?
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(e.to_string()))
        };
        let (student, skill, correct) = (num(0)?, num(1)?, num(2)?);
        if correct > 1 {
            return Err(bad(format!("non-binary correctness {correct}")));
        }
        match sequences.last_mut() {
            Some((s, pairs)) if *s == student => pairs.push((skill, correct as u8)),
            _ => sequences.push((student, vec![(skill, correct as u8)])),
        }
    }
    if sequences.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let dataset = Dataset {
        sequences: sequences
            .into_iter()
            .map(|(s, pairs)| StudentSequence::from_pairs(s, pairs))
            .collect(),
        skill_count: labels.skill_names.len(),
        skill_names: labels.skill_names,
        student_names: labels.student_names,
        metadata: labels.metadata,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_dataset, toy_dataset, ColumnMapping};

    #[test]
    fn canonical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy_dataset(&[4, 2, 7], 5);
        let summary = write_canonical(&ds, dir.path()).unwrap();
        assert_eq!(summary.attempts, 13);
        assert_eq!(read_canonical(dir.path()).unwrap(), ds);
    }

    #[test]
    fn preprocessing_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw.csv");
        std::fs::write(
            &raw,
            "student,skill,correct\nA,k9,1\nB,k2,0\nA,k2,0\nB,k9,1\nA,k5,1\nC,k1,1\nB,,1\n",
        )
        .unwrap();
        let (first, _) = parse_dataset(&raw, &ColumnMapping::default()).unwrap();
        let out = dir.path().join("canon");
        write_canonical(&first, &out).unwrap();
        let (second, report) = parse_dataset(&out.join(DATASET_FILE), &ColumnMapping::default()).unwrap();
        assert_eq!(second.sequences, first.sequences);
        assert_eq!(second.skill_count, first.skill_count);
        assert_eq!(report.dropped_missing_field + report.dropped_non_binary + report.dropped_students, 0);
    }

    #[test]
    fn summary_columns() {
        let ds = toy_dataset(&[4, 2], 3);
        let s = DatasetSummary::of(&ds);
        assert_eq!((s.students, s.attempts, s.max_attempts, s.skill_count), (2, 6, 4, 3));
        assert!((s.percent_correct - 100.0 * ds.correct_count() as f64 / 6.0).abs() < 1e-12);
    }
}
