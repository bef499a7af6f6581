//! Attempt datasets: the domain types plus ingestion, preprocessing,
//! partitioning and synthetic generation.

mod folds;
mod io;
mod parse;
mod policy;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub use folds::{make_folds, split_validation, FoldPlan};
pub use io::{read_canonical, write_canonical, DatasetSummary, DATASET_FILE, LABELS_FILE, SUMMARY_FILE};
pub use parse::{parse_dataset, parse_dataset_from_reader, ColumnMapping, ParseReport};
pub use policy::{apply_max_attempt, MaxAttemptPolicy};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// One student attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub student: usize,
    pub skill: usize,
    pub correct: u8,
    /// Position within the student's sequence, dense from 0.
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentSequence {
    pub student: usize,
    pub interactions: Vec<Interaction>,
}

impl StudentSequence {
    /// Builds a sequence for `student` from (skill, correct) pairs.
    pub fn from_pairs(student: usize, pairs: impl IntoIterator<Item = (usize, u8)>) -> Self {
        let interactions = pairs
            .into_iter()
            .enumerate()
            .map(|(order, (skill, correct))| Interaction {
                student,
                skill,
                correct,
                order,
            })
            .collect();
        Self {
            student,
            interactions,
        }
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn skills(&self) -> impl Iterator<Item = usize> + '_ {
        self.interactions.iter().map(|i| i.skill)
    }

    pub fn corrects(&self) -> impl Iterator<Item = u8> + '_ {
        self.interactions.iter().map(|i| i.correct)
    }

    /// Renumbers `order` from 0 and stamps `student` on every interaction.
    pub(crate) fn renumbered(student: usize, interactions: &[Interaction]) -> Self {
        Self::from_pairs(student, interactions.iter().map(|i| (i.skill, i.correct)))
    }
}

/// Ordered per-student attempt sequences plus the skill vocabulary.
///
/// Subsets produced by [`Dataset::subset`] keep the full skill vocabulary
/// and the original student indices, so a model fitted on one fold can be
/// scored on another without remapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sequences: Vec<StudentSequence>,
    pub skill_count: usize,
    pub skill_names: Vec<String>,
    pub student_names: Vec<String>,
    /// Free-form provenance, e.g. the synthetic generator's parameters.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    /// Checks the structural invariants: binary correctness, skill indices
    /// within the vocabulary, dense increasing order, length at least 2 and
    /// unique student indices.
    pub fn validate(&self) -> Result<()> {
        if self.skill_count == 0 {
            return Err(DataError::Contract("skill_count must be positive".into()));
        }
        if self.skill_names.len() != self.skill_count {
            return Err(DataError::Contract(format!(
                "{} skill names for {} skills",
                self.skill_names.len(),
                self.skill_count
            )));
        }
        let mut seen = BTreeSet::new();
        for seq in &self.sequences {
            if !seen.insert(seq.student) {
                return Err(DataError::Contract(format!(
                    "student {} appears twice",
                    seq.student
                )));
            }
            if seq.student >= self.student_names.len() {
                return Err(DataError::OutOfBounds {
                    index: seq.student,
                    bound: self.student_names.len(),
                });
            }
            if seq.len() < 2 {
                return Err(DataError::Contract(format!(
                    "student {} has {} attempt(s); at least 2 required",
                    seq.student,
                    seq.len()
                )));
            }
            for (pos, it) in seq.interactions.iter().enumerate() {
                if it.correct > 1 {
                    return Err(DataError::Contract(format!(
                        "non-binary correctness {} for student {}",
                        it.correct, seq.student
                    )));
                }
                if it.skill >= self.skill_count {
                    return Err(DataError::OutOfBounds {
                        index: it.skill,
                        bound: self.skill_count,
                    });
                }
                if it.order != pos || it.student != seq.student {
                    return Err(DataError::Contract(format!(
                        "student {} interaction {} carries order {} / student {}",
                        seq.student, pos, it.order, it.student
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn student_count(&self) -> usize {
        self.sequences.len()
    }

    pub fn attempt_count(&self) -> usize {
        self.sequences.iter().map(StudentSequence::len).sum()
    }

    pub fn correct_count(&self) -> usize {
        self.sequences
            .iter()
            .flat_map(|s| s.corrects())
            .filter(|&c| c == 1)
            .count()
    }

    pub fn max_sequence_len(&self) -> usize {
        self.sequences.iter().map(StudentSequence::len).max().unwrap_or(0)
    }

    /// Student indices in sequence order.
    pub fn students(&self) -> Vec<usize> {
        self.sequences.iter().map(|s| s.student).collect()
    }

    /// The sequences of the given students, in the order given. Unknown
    /// students are ignored.
    pub fn subset(&self, students: &[usize]) -> Dataset {
        let by_student: BTreeMap<usize, &StudentSequence> =
            self.sequences.iter().map(|s| (s.student, s)).collect();
        let sequences = students
            .iter()
            .filter_map(|s| by_student.get(s).map(|&seq| seq.clone()))
            .collect();
        Dataset {
            sequences,
            skill_count: self.skill_count,
            skill_names: self.skill_names.clone(),
            student_names: self.student_names.clone(),
            metadata: self.metadata.clone(),
        }
    }

    /// Skill indices that occur at least once.
    pub fn present_skills(&self) -> BTreeSet<usize> {
        self.sequences.iter().flat_map(|s| s.skills()).collect()
    }
}

/// Combines a (skill, correctness) pair into the index `2 * skill + correct`
/// within `[0, 2 * skill_count)`.
pub fn encode_attempt(skill: usize, correct: u8, skill_count: usize) -> Result<usize> {
    if skill >= skill_count {
        return Err(DataError::OutOfBounds {
            index: skill,
            bound: skill_count,
        });
    }
    if correct > 1 {
        return Err(DataError::Contract(format!(
            "correctness must be 0 or 1, got {correct}"
        )));
    }
    Ok(2 * skill + correct as usize)
}

#[cfg(test)]
pub(crate) fn toy_dataset(lengths: &[usize], skill_count: usize) -> Dataset {
    let sequences = lengths
        .iter()
        .enumerate()
        .map(|(student, &len)| {
            StudentSequence::from_pairs(
                student,
                (0..len).map(|t| ((student + t) % skill_count, ((student * 7 + t * 3) % 5 < 3) as u8)),
            )
        })
        .collect();
    Dataset {
        sequences,
        skill_count,
        skill_names: (0..skill_count).map(|s| format!("s{s}")).collect(),
        student_names: (0..lengths.len()).map(|s| format!("u{s}")).collect(),
        metadata: BTreeMap::new(),
    }
}
