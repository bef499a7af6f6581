//! Padded mini-batches.
//!
//! A sequence of `T` attempts yields `T - 1` steps. Step `j` (from 0) feeds
//! attempt `j` as the value input, skill `s_{j+1}` as the key, and is scored
//! against `c_{j+1}`. Sequences are padded to the longest in the batch and a
//! binary mask marks the real steps.

use ktbench_autodiff::Tensor;
use ktbench_core::data::encode_attempt;
use ktbench_core::StudentSequence;

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub students: Vec<usize>,
    /// Attempts per sequence.
    pub lengths: Vec<usize>,
    /// Steps per row after padding.
    pub steps: usize,
    /// Encoded attempt `2 s_j + c_j`, row-major `B x steps`.
    pub inputs: Vec<usize>,
    /// Skill of the attempt being predicted, row-major `B x steps`.
    pub next_skills: Vec<usize>,
    pub labels: Tensor,
    pub mask: Tensor,
    /// Absolute index of the first step; non-zero only for windows.
    pub offset: usize,
}

impl Batch {
    pub fn from_sequences(seqs: &[&StudentSequence], skill_count: usize) -> Result<Self> {
        if seqs.is_empty() {
            return Err(ModelError::Config("empty batch".into()));
        }
        for s in seqs {
            if s.len() < 2 {
                return Err(ModelError::TooShort {
                    student: s.student,
                    len: s.len(),
                });
            }
        }
        let steps = seqs.iter().map(|s| s.len() - 1).max().expect("non-empty");
        let b = seqs.len();
        let mut inputs = vec![0; b * steps];
        let mut next_skills = vec![0; b * steps];
        let mut labels = vec![0.0; b * steps];
        let mut mask = vec![0.0; b * steps];
        for (row, s) in seqs.iter().enumerate() {
            let it = &s.interactions;
            for j in 0..it.len() - 1 {
                let k = row * steps + j;
                inputs[k] = encode_attempt(it[j].skill, it[j].correct, skill_count)?;
                let next = it[j + 1].skill;
                if next >= skill_count {
                    return Err(ModelError::OutOfBounds {
                        index: next,
                        bound: skill_count,
                    });
                }
                next_skills[k] = next;
                labels[k] = f64::from(it[j + 1].correct);
                mask[k] = 1.0;
            }
        }
        Ok(Self {
            students: seqs.iter().map(|s| s.student).collect(),
            lengths: seqs.iter().map(|s| s.len()).collect(),
            steps,
            inputs,
            next_skills,
            labels: Tensor::matrix(b, steps, labels)?,
            mask: Tensor::matrix(b, steps, mask)?,
            offset: 0,
        })
    }

    pub fn size(&self) -> usize {
        self.students.len()
    }

    /// Number of real (unpadded) targets.
    pub fn target_count(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m != 0.0).count()
    }

    pub fn inputs_at(&self, step: usize) -> Vec<usize> {
        (0..self.size()).map(|b| self.inputs[b * self.steps + step]).collect()
    }

    pub fn next_at(&self, step: usize) -> Vec<usize> {
        (0..self.size()).map(|b| self.next_skills[b * self.steps + step]).collect()
    }

    /// The steps `start..start + len` as a batch of their own.
    pub fn window(&self, start: usize, len: usize) -> Result<Batch> {
        if len == 0 || start + len > self.steps {
            return Err(ModelError::Config(format!(
                "window {start}+{len} outside {} steps",
                self.steps
            )));
        }
        let pick = |v: &[usize]| -> Vec<usize> {
            (0..self.size())
                .flat_map(|b| v[b * self.steps + start..b * self.steps + start + len].to_vec())
                .collect()
        };
        let pick_t = |t: &Tensor| -> Result<Tensor> {
            let data = (0..self.size())
                .flat_map(|b| t.row(b)[start..start + len].to_vec())
                .collect();
            Ok(Tensor::matrix(self.size(), len, data)?)
        };
        Ok(Batch {
            students: self.students.clone(),
            lengths: self.lengths.clone(),
            steps: len,
            inputs: pick(&self.inputs),
            next_skills: pick(&self.next_skills),
            labels: pick_t(&self.labels)?,
            mask: pick_t(&self.mask)?,
            offset: self.offset + start,
        })
    }
}

/// Splits `seqs` into consecutive batches of at most `batch_size`.
pub fn make_batches(seqs: &[&StudentSequence], batch_size: usize, skill_count: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(ModelError::Config("batch size must be positive".into()));
    }
    seqs.chunks(batch_size)
        .map(|chunk| Batch::from_sequences(chunk, skill_count))
        .collect()
}

/// One scored target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub student: usize,
    /// Position of the predicted attempt within its sequence, from 0; always >= 1.
    pub position: usize,
    pub skill: usize,
    pub label: u8,
    pub probability: f64,
}

/// Aligned predictions for every unpadded target of one or more batches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionBatch {
    pub entries: Vec<Prediction>,
}

impl PredictionBatch {
    pub fn labels(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.probability).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: PredictionBatch) {
        self.entries.extend(other.entries);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_and_alignment() {
        let a = StudentSequence::from_pairs(0, [(1, 1), (2, 0), (0, 1)]);
        let b = StudentSequence::from_pairs(1, [(2, 0), (1, 1)]);
        let batch = Batch::from_sequences(&[&a, &b], 3).unwrap();
        assert_eq!(batch.steps, 2);
        assert_eq!(batch.inputs, vec![3, 4, 4, 0]);
        assert_eq!(batch.next_skills, vec![2, 0, 1, 0]);
        assert_eq!(batch.labels.data(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(batch.mask.data(), &[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(batch.target_count(), 3);
        let w = batch.window(1, 1).unwrap();
        assert_eq!(w.inputs, vec![4, 0]);
        assert_eq!(w.offset, 1);
        assert_eq!(w.mask.data(), &[1.0, 0.0]);
    }

    #[test]
    fn short_sequences_are_rejected() {
        let a = StudentSequence::from_pairs(4, [(0, 1)]);
        assert!(matches!(
            Batch::from_sequences(&[&a], 2),
            Err(ModelError::TooShort { student: 4, len: 1 })
        ));
    }
}
