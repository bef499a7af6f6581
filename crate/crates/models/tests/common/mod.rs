#![allow(dead_code)]

use ktbench_core::{KtRng, StudentSequence};
use ktbench_models::{Architecture, HyperParams, InputVariant, OutputVariant};

pub const VARIANTS: [(InputVariant, OutputVariant); 4] = [
    (InputVariant::OneHot, OutputVariant::OutputPerSkill),
    (InputVariant::OneHot, OutputVariant::SkillsToScalar),
    (InputVariant::Embedding, OutputVariant::OutputPerSkill),
    (InputVariant::Embedding, OutputVariant::SkillsToScalar),
];

/// Small configuration used by the gradient and causality checks.
pub fn toy(arch: Architecture, input: InputVariant, output: OutputVariant) -> HyperParams {
    let mut hp = HyperParams::new(arch);
    hp.recurrent_size = 8;
    hp.key_embed_size = 6;
    hp.value_embed_size = 6;
    hp.summary_size = 6;
    hp.attention_heads = 1;
    hp.input = input;
    hp.output = output;
    hp
}

pub fn random_sequence(rng: &mut KtRng, student: usize, len: usize, skills: usize) -> StudentSequence {
    let pairs: Vec<(usize, u8)> = (0..len)
        .map(|_| (rng.below(skills as u64) as usize, u8::from(rng.bernoulli(0.6))))
        .collect();
    StudentSequence::from_pairs(student, pairs)
}
