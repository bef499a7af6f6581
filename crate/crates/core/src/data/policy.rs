use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Dataset, StudentSequence};
use crate::error::DataError;

/// How sequences longer than a limit are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "limit", rename_all = "lowercase")]
pub enum MaxAttemptPolicy {
    None,
    /// Keep only the first `limit` attempts.
    Cut(usize),
    /// Partition into consecutive pieces of `limit` attempts, each becoming
    /// its own pseudo-student.
    Split(usize),
}

impl MaxAttemptPolicy {
    pub fn limit(&self) -> Option<usize> {
        match *self {
            MaxAttemptPolicy::None => None,
            MaxAttemptPolicy::Cut(l) | MaxAttemptPolicy::Split(l) => Some(l),
        }
    }

    fn check(&self) -> Result<(), DataError> {
        match self.limit() {
            Some(l) if l < 2 => Err(DataError::Config(format!(
                "max-attempt limit must be at least 2, got {l}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MaxAttemptPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxAttemptPolicy::None => write!(f, "none"),
            MaxAttemptPolicy::Cut(l) => write!(f, "cut:{l}"),
            MaxAttemptPolicy::Split(l) => write!(f, "split:{l}"),
        }
    }
}

impl FromStr for MaxAttemptPolicy {
    type Err = DataError;

    /// Accepts `none`, `cut:L` and `split:L`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::Config(format!("invalid max-attempt policy {s:?}; expected none, cut:L or split:L"));
        let policy = match s.split_once(':') {
            None if s == "none" => MaxAttemptPolicy::None,
            Some(("cut", l)) => MaxAttemptPolicy::Cut(l.parse().map_err(|_| bad())?),
            Some(("split", l)) => MaxAttemptPolicy::Split(l.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        policy.check()?;
        Ok(policy)
    }
}

/// Applies a maximum-attempt policy.
///
/// `Split` renumbers students densely in sequence order; pseudo-students are
/// named `<original>#<piece>`. Pieces of length 1 are dropped.
pub fn apply_max_attempt(dataset: &Dataset, policy: MaxAttemptPolicy) -> Result<Dataset, DataError> {
    policy.check()?;
    let mut out = dataset.clone();
    match policy {
        MaxAttemptPolicy::None => {}
        MaxAttemptPolicy::Cut(limit) => {
            for seq in &mut out.sequences {
                seq.interactions.truncate(limit);
            }
        }
        MaxAttemptPolicy::Split(limit) => {
            let mut sequences = Vec::new();
            let mut names = Vec::new();
            for seq in &dataset.sequences {
                let original = &dataset.student_names[seq.student];
                for (piece, chunk) in seq.interactions.chunks(limit).enumerate() {
                    if chunk.len() < 2 {
                        continue;
                    }
                    let student = names.len();
                    names.push(if seq.len() > limit {
                        format!("{original}#{piece}")
                    } else {
                        original.clone()
                    });
                    sequences.push(StudentSequence::renumbered(student, chunk));
                }
            }
            out.sequences = sequences;
            out.student_names = names;
        }
    }
    Ok(out)
}
