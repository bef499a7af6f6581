mod common;

use common::{random_sequence, toy, VARIANTS};
use ktbench_core::{Interaction, KtRng, StudentSequence};
use ktbench_models::{build_model, Architecture, Batch, InputVariant, Model, OutputVariant};
use proptest::prelude::*;

const SKILLS: usize = 5;

/// Predictions for `target` when batched next to `companion`, plus the
/// companion's own predictions.
fn predict_pair(model: &Model, target: &StudentSequence, companion: &StudentSequence) -> (Vec<f64>, Vec<f64>) {
    let batch = Batch::from_sequences(&[target, companion], model.skill_count).unwrap();
    let preds = model.predict(&batch).unwrap();
    let mut mine = Vec::new();
    let mut other = Vec::new();
    for p in preds.entries {
        if p.student == target.student {
            mine.push(p.probability);
        } else {
            other.push(p.probability);
        }
    }
    (mine, other)
}

/// Positions are indices of predicted attempts; `preds[i]` is position `i + 1`.
fn prefix(preds: &[f64], through_position: usize) -> &[f64] {
    &preds[..through_position.min(preds.len())]
}

fn causality_holds(model: &Model, rng: &mut KtRng) -> (bool, bool) {
    let len = 3 + rng.below(10) as usize;
    let seq = random_sequence(rng, 0, len, SKILLS);
    let companion_len = 2 + rng.below(12) as usize;
    let companion = random_sequence(rng, 1, companion_len, SKILLS);
    let u = 1 + rng.below(len as u64 - 1) as usize;
    let (base, base_other) = predict_pair(model, &seq, &companion);

    let mut flipped = seq.clone();
    flipped.interactions[u].correct ^= 1;
    let (after_flip, other_flip) = predict_pair(model, &flipped, &companion);

    let mut rewritten = seq.clone();
    for it in &mut rewritten.interactions[u..] {
        *it = Interaction {
            skill: rng.below(SKILLS as u64) as usize,
            correct: u8::from(rng.bernoulli(0.5)),
            ..*it
        };
    }
    let (after_rewrite, other_rewrite) = predict_pair(model, &rewritten, &companion);

    let ok = prefix(&base, u) == prefix(&after_flip, u)
        && prefix(&base, u - 1) == prefix(&after_rewrite, u - 1)
        && base_other == other_flip
        && base_other == other_rewrite;
    let influenced = u + 1 < len && base[u..] != after_flip[u..];
    (ok, influenced)
}

#[test]
fn no_prediction_depends_on_its_own_or_later_attempts() {
    for arch in Architecture::ALL {
        for (input, output) in VARIANTS {
            let mut hp = toy(arch, input, output);
            hp.attention_heads = 2;
            let model = build_model(&hp, SKILLS, 16, 21).unwrap();
            let mut rng = KtRng::new(77);
            let mut influenced = 0;
            for trial in 0..100 {
                let (ok, inf) = causality_holds(&model, &mut rng);
                assert!(ok, "{arch} {input:?} {output:?}: causality broken in trial {trial}");
                influenced += usize::from(inf);
            }
            assert!(influenced > 20, "{arch}: later predictions never react ({influenced})");
        }
    }
}

#[test]
fn causality_survives_sakt_windowing() {
    let hp = toy(Architecture::Sakt, InputVariant::Embedding, OutputVariant::OutputPerSkill);
    let model = build_model(&hp, SKILLS, 3, 2).unwrap();
    let mut rng = KtRng::new(5);
    for _ in 0..50 {
        assert!(causality_holds(&model, &mut rng).0);
    }
}

#[test]
fn probabilities_are_strictly_inside_the_unit_interval() {
    let mut rng = KtRng::new(8);
    for arch in Architecture::ALL {
        for (input, output) in VARIANTS {
            let mut model = build_model(&toy(arch, input, output), SKILLS, 12, 1).unwrap();
            // Blow the output bias up so raw sigmoids saturate to exactly 0 or 1.
            let bias = model.params.get_mut("b_y").unwrap();
            for (i, v) in bias.data_mut().iter_mut().enumerate() {
                *v = if i % 2 == 0 { 800.0 } else { -800.0 };
            }
            let seq = random_sequence(&mut rng, 0, 12, SKILLS);
            let batch = Batch::from_sequences(&[&seq], SKILLS).unwrap();
            for p in model.predict(&batch).unwrap().probabilities() {
                assert!(p > 0.0 && p < 1.0, "{arch}: {p}");
            }
        }
    }
}

#[test]
fn per_skill_output_is_a_selection_from_one_vector() {
    // Swapping two output columns and the queried skill must give the same
    // prediction when the y-vector ignores the next skill.
    let mut rng = KtRng::new(31);
    for arch in [Architecture::VanillaDkt, Architecture::LstmDkt] {
        for input in [InputVariant::OneHot, InputVariant::Embedding] {
            let model = build_model(&toy(arch, input, OutputVariant::OutputPerSkill), SKILLS, 0, 4).unwrap();
            let mut swapped = model.clone();
            let (a, b) = (1, 3);
            for name in ["W_y", "b_y"] {
                let t = swapped.params.get_mut(name).unwrap();
                let cols = t.cols();
                for r in 0..t.rows() {
                    t.data_mut().swap(r * cols + a, r * cols + b);
                }
            }
            for _ in 0..20 {
                let mut seq = random_sequence(&mut rng, 0, 6, SKILLS);
                seq.interactions[5].skill = a;
                let mut other = seq.clone();
                other.interactions[5].skill = b;
                let batch = Batch::from_sequences(&[&seq], SKILLS).unwrap();
                let alt = Batch::from_sequences(&[&other], SKILLS).unwrap();
                let p = model.predict(&batch).unwrap().probabilities();
                let q = swapped.predict(&alt).unwrap().probabilities();
                assert_eq!(p[4], q[4], "{arch} {input:?}");
            }
        }
    }
}

#[test]
fn first_dkvmn_read_ignores_the_first_attempt() {
    let mut rng = KtRng::new(3);
    for arch in [Architecture::Dkvmn, Architecture::DkvmnPaper] {
        for (input, output) in VARIANTS {
            let model = build_model(&toy(arch, input, output), SKILLS, 0, 6).unwrap();
            for _ in 0..20 {
                let seq = random_sequence(&mut rng, 0, 4, SKILLS);
                let mut other = seq.clone();
                other.interactions[0].skill = (seq.interactions[0].skill + 1) % SKILLS;
                other.interactions[0].correct ^= 1;
                let p = model.predict(&Batch::from_sequences(&[&seq], SKILLS).unwrap()).unwrap();
                let q = model.predict(&Batch::from_sequences(&[&other], SKILLS).unwrap()).unwrap();
                assert_eq!(p.entries[0].probability, q.entries[0].probability);
                assert_ne!(p.entries[1].probability, q.entries[1].probability);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn batching_does_not_change_predictions(
        arch_idx in 0usize..6,
        seed in any::<u64>(),
        lens in proptest::collection::vec(2usize..9, 1..5),
    ) {
        let arch = Architecture::ALL[arch_idx];
        let model = build_model(&toy(arch, InputVariant::Embedding, OutputVariant::OutputPerSkill), SKILLS, 8, 3).unwrap();
        let mut rng = KtRng::new(seed);
        let seqs: Vec<StudentSequence> = lens.iter().enumerate().map(|(i, &l)| random_sequence(&mut rng, i, l, SKILLS)).collect();
        let refs: Vec<&StudentSequence> = seqs.iter().collect();
        let together = model.predict(&Batch::from_sequences(&refs, SKILLS).unwrap()).unwrap();
        let mut alone = Vec::new();
        for s in &seqs {
            alone.extend(model.predict(&Batch::from_sequences(&[s], SKILLS).unwrap()).unwrap().entries);
        }
        prop_assert_eq!(together.entries, alone);
    }
}
