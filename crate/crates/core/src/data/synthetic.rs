//! Simulated students answering a fixed exercise sequence.
//!
//! Each exercise belongs to one hidden concept (exercise `e` -> concept
//! `e mod C`) and has a difficulty `beta ~ N(0, difficulty_std^2)`. Each
//! student has a per-concept ability `alpha ~ N(0, ability_std^2)`. The
//! probability of a correct answer is
//! `guess + (1 - guess) * sigmoid(alpha - beta)`, and after every attempt
//! the ability on that exercise's concept grows by `learning_increment`.
//! Exercises are the skills of the resulting dataset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, StudentSequence};
use crate::error::DataError;
use crate::rng::KtRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub students: usize,
    pub exercises: usize,
    pub concepts: usize,
    pub guess: f64,
    pub learning_increment: f64,
    pub ability_std: f64,
    pub difficulty_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            students: 4000,
            exercises: 50,
            concepts: 2,
            guess: 0.25,
            learning_increment: 0.05,
            ability_std: 2.0,
            difficulty_std: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn new(students: usize, exercises: usize, concepts: usize, seed: u64) -> Self {
        Self {
            students,
            exercises,
            concepts,
            seed,
            ..Self::default()
        }
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        [
            ("generator", "irt-concept-learning".to_string()),
            ("students", self.students.to_string()),
            ("exercises", self.exercises.to_string()),
            ("concepts", self.concepts.to_string()),
            ("guess", self.guess.to_string()),
            ("learning_increment", self.learning_increment.to_string()),
            ("ability_std", self.ability_std.to_string()),
            ("difficulty_std", self.difficulty_std.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Probability of a correct answer for ability `alpha` on difficulty `beta`.
pub fn response_probability(guess: f64, alpha: f64, beta: f64) -> f64 {
    guess + (1.0 - guess) * sigmoid(alpha - beta)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset, DataError> {
    if cfg.students == 0 || cfg.exercises == 0 || cfg.concepts == 0 {
        return Err(DataError::Config("synthetic sizes must be positive".into()));
    }
    if cfg.concepts > cfg.exercises {
        return Err(DataError::Config(format!(
            "{} concepts exceed {} exercises",
            cfg.concepts, cfg.exercises
        )));
    }
    if cfg.exercises < 2 {
        return Err(DataError::Config("at least 2 exercises are needed per student".into()));
    }
    if !(0.0..1.0).contains(&cfg.guess) {
        return Err(DataError::Config(format!("guess must be in [0, 1), got {}", cfg.guess)));
    }

    let mut rng = KtRng::new(cfg.seed);
    let difficulty: Vec<f64> = (0..cfg.exercises).map(|_| cfg.difficulty_std * rng.normal()).collect();
    let concept_of = |e: usize| e % cfg.concepts;

    let sequences = (0..cfg.students)
        .map(|student| {
            let mut ability: Vec<f64> = (0..cfg.concepts).map(|_| cfg.ability_std * rng.normal()).collect();
            let pairs: Vec<(usize, u8)> = (0..cfg.exercises)
                .map(|e| {
                    let c = concept_of(e);
                    let p = response_probability(cfg.guess, ability[c], difficulty[e]);
                    let correct = rng.bernoulli(p) as u8;
                    ability[c] += cfg.learning_increment;
                    (e, correct)
                })
                .collect();
            StudentSequence::from_pairs(student, pairs)
        })
        .collect();

    let dataset = Dataset {
        sequences,
        skill_count: cfg.exercises,
        skill_names: (0..cfg.exercises).map(|e| format!("ex{e}")).collect(),
        student_names: (0..cfg.students).map(|s| format!("sim{s}")).collect(),
        metadata: cfg.metadata(),
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_matches_request() {
        let ds = generate_synthetic(&SyntheticConfig::new(4000, 50, 2, 1)).unwrap();
        assert_eq!(ds.student_count(), 4000);
        assert!(ds.sequences.iter().all(|s| s.len() == 50));
        assert_eq!(ds.skill_count, 50);
        assert_eq!(ds.metadata["guess"], "0.25");
        assert_eq!(ds.metadata["concepts"], "2");
    }

    #[test]
    fn huge_ability_forces_correct() {
        assert!((response_probability(0.25, 1e3, 0.0) - 1.0).abs() < 1e-12);
        assert!((response_probability(0.25, -1e3, 0.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mean_correctness_in_band_across_seeds() {
        for seed in 0..5 {
            let ds = generate_synthetic(&SyntheticConfig::new(1000, 50, 2, seed)).unwrap();
            let mean = ds.correct_count() as f64 / ds.attempt_count() as f64;
            assert!((0.55..=0.75).contains(&mean), "seed {seed}: mean {mean}");
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig::new(30, 10, 3, 5);
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
    }

    #[test]
    fn rejects_more_concepts_than_exercises() {
        assert!(generate_synthetic(&SyntheticConfig::new(3, 2, 3, 0)).is_err());
    }
}
