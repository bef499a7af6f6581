use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, StudentSequence};
use crate::error::{DataError, Result};

/// Which header columns carry the student, skill and correctness fields.
///
/// Exercise-id-as-skill datasets are handled by pointing `skill` at the
/// exercise column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub student: String,
    pub skill: String,
    pub correct: String,
    pub delimiter: char,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            student: "student".into(),
            skill: "skill".into(),
            correct: "correct".into(),
            delimiter: ',',
        }
    }
}

/// Row and student drop counts from [`parse_dataset`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows_read: usize,
    pub dropped_missing_field: usize,
    pub dropped_non_binary: usize,
    pub dropped_students: usize,
    /// Rows that belonged to the dropped single-attempt students.
    pub dropped_student_rows: usize,
    pub students: usize,
    pub attempts: usize,
}

pub fn parse_dataset(path: &Path, mapping: &ColumnMapping) -> Result<(Dataset, ParseReport)> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset_from_reader(file, mapping, path)
}

/// Parses delimiter-separated rows.
///
/// Rows missing a student, skill or correctness value are dropped, as are
/// rows whose correctness is numeric but not 0 or 1. Students left with at
/// most one attempt are removed. Row order within a student is kept as the
/// attempt order. Student and skill labels are mapped to dense indices in
/// order of first appearance once rows are grouped by student (students in
/// order of first appearance), which makes the canonical output a fixed
/// point of this function.
pub fn parse_dataset_from_reader<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
    source: &Path,
) -> Result<(Dataset, ParseReport)> {
    let parse_err = |row: usize, message: String| DataError::Parse {
        path: PathBuf::from(source),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(u8::try_from(mapping.delimiter).map_err(|_| {
            DataError::Config(format!("delimiter {:?} is not a single byte", mapping.delimiter))
        })?)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let (student_col, skill_col, correct_col) = (
        column(&mapping.student)?,
        column(&mapping.skill)?,
        column(&mapping.correct)?,
    );

    let mut report = ParseReport::default();
    let mut student_order: Vec<String> = Vec::new();
    let mut rows_by_student: BTreeMap<String, Vec<(String, u8)>> = BTreeMap::new();

    for (i, record) in rdr.records().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(line);
            parse_err(row, e.to_string())
        })?;
        report.rows_read += 1;
        let field = |col: usize| record.get(col).unwrap_or("").trim();
        let (student, skill, correct) = (field(student_col), field(skill_col), field(correct_col));
        if student.is_empty() || skill.is_empty() || correct.is_empty() {
            report.dropped_missing_field += 1;
            continue;
        }
        let value: f64 = correct
            .parse()
            .map_err(|_| parse_err(line, format!("unparseable correctness value {correct:?}")))?;
        let correct = if value == 0.0 {
            0
        } else if value == 1.0 {
            1
        } else {
            report.dropped_non_binary += 1;
            continue;
        };
        let entry = rows_by_student.entry(student.to_string()).or_insert_with(|| {
            student_order.push(student.to_string());
            Vec::new()
        });
        entry.push((skill.to_string(), correct));
    }

    let mut skill_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut skill_names = Vec::new();
    let mut student_names = Vec::new();
    let mut sequences = Vec::new();
    for name in student_order {
        let rows = &rows_by_student[&name];
        if rows.len() <= 1 {
            report.dropped_students += 1;
            report.dropped_student_rows += rows.len();
            continue;
        }
        let student = student_names.len();
        student_names.push(name);
        let pairs: Vec<(usize, u8)> = rows
            .iter()
            .map(|(label, c)| {
                let next = skill_index.len();
                let idx = *skill_index.entry(label.clone()).or_insert_with(|| {
                    skill_names.push(label.clone());
                    next
                });
                (idx, *c)
            })
            .collect();
        sequences.push(StudentSequence::from_pairs(student, pairs));
    }

    if sequences.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let dataset = Dataset {
        sequences,
        skill_count: skill_names.len(),
        skill_names,
        student_names,
        metadata: BTreeMap::new(),
    };
    report.students = dataset.student_count();
    report.attempts = dataset.attempt_count();
    dataset.validate()?;
    Ok((dataset, report))
}
