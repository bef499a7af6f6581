mod common;

use std::collections::BTreeSet;

use common::{random_sequence, toy, VARIANTS};
use ktbench_autodiff::{Graph, ParamStore, Tensor};
use ktbench_core::{KtRng, StudentSequence};
use ktbench_models::cells::{self, GateWeights, LstmWeights};
use ktbench_models::{build_model, make_batches, Architecture, Batch, HyperParams, InputVariant, Model, OutputVariant};

fn names(model: &Model) -> BTreeSet<String> {
    model.params.names().cloned().collect()
}

fn predict_one(model: &Model, seq: &StudentSequence) -> Vec<f64> {
    let batch = Batch::from_sequences(&[seq], model.skill_count).unwrap();
    model.predict(&batch).unwrap().probabilities()
}

#[test]
fn lstm_inventory_with_one_hot_inputs() {
    let mut hp = HyperParams::new(Architecture::LstmDkt);
    hp.recurrent_size = 8;
    let model = build_model(&hp, 4, 0, 1).unwrap();
    let expected: BTreeSet<String> = ["i", "f", "o", "m"]
        .iter()
        .flat_map(|g| [format!("W_{g}"), format!("U_{g}"), format!("b_{g}")])
        .chain(["W_y".to_string(), "b_y".to_string()])
        .collect();
    assert_eq!(names(&model), expected);
    assert_eq!(model.params.get("W_i").unwrap().shape(), &[8, 8]);
    assert_eq!(model.params.get("W_y").unwrap().shape(), &[8, 4]);
    let per_gate = 8 * 8 + 8 * 8 + 8;
    assert_eq!(model.parameter_count(), 4 * per_gate + 8 * 4 + 4);
}

#[test]
fn dkvmn_embedding_shapes() {
    let skills = 7;
    let mut hp = HyperParams::new(Architecture::DkvmnPaper);
    hp.input = InputVariant::Embedding;
    hp.output = OutputVariant::SkillsToScalar;
    let model = build_model(&hp, skills, 0, 1).unwrap();
    assert_eq!(model.params.get("E_k").unwrap().shape(), &[skills, 20]);
    assert_eq!(model.params.get("E_v").unwrap().shape(), &[2 * skills, 20]);
    assert_eq!(model.params.get("M_k").unwrap().shape(), &[50, 20]);
    assert_eq!(model.params.get("M_v0").unwrap().shape(), &[50, 20]);
    assert_eq!(model.params.get("W_s").unwrap().shape(), &[40, 50]);

    let mut repo = hp;
    repo.architecture = Architecture::Dkvmn;
    let model = build_model(&repo, skills, 0, 1).unwrap();
    assert!(model.params.get("M_k").is_none());
    assert_eq!(model.params.get("W_w").unwrap().shape(), &[20, 50]);
}

#[test]
fn inputs_without_keys_have_no_key_table() {
    for arch in [Architecture::VanillaDkt, Architecture::LstmDkt] {
        let hp = toy(arch, InputVariant::Embedding, OutputVariant::OutputPerSkill);
        let model = build_model(&hp, 5, 0, 1).unwrap();
        assert!(model.params.get("E_k").is_none());
        assert_eq!(model.params.get("E_v").unwrap().shape(), &[10, 6]);
    }
    let hp = toy(Architecture::LstmDktSPlus, InputVariant::OneHot, OutputVariant::OutputPerSkill);
    let model = build_model(&hp, 5, 0, 1).unwrap();
    assert_eq!(model.params.get("W_i").unwrap().rows(), 15);
}

#[test]
fn sakt_inventory_follows_flags() {
    let hp = toy(Architecture::Sakt, InputVariant::OneHot, OutputVariant::SkillsToScalar);
    let model = build_model(&hp, 5, 9, 1).unwrap();
    assert_eq!(model.params.get("W_p").unwrap().shape(), &[9, 10]);
    assert!(model.params.contains("W_key"));
    assert_eq!(model.params.get("W_y").unwrap().shape(), &[6, 1]);
    let mut shared = hp;
    shared.flags.shared_kv_projection = true;
    let model = build_model(&shared, 5, 9, 1).unwrap();
    assert!(!model.params.contains("W_key"));
    assert!(build_model(&hp, 5, 0, 1).is_err());
}

#[test]
fn building_is_deterministic() {
    for arch in Architecture::ALL {
        let hp = toy(arch, InputVariant::Embedding, OutputVariant::OutputPerSkill);
        let a = build_model(&hp, 5, 6, 42).unwrap();
        let b = build_model(&hp, 5, 6, 42).unwrap();
        let c = build_model(&hp, 5, 6, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params.snapshot(), c.params.snapshot());
    }
}

#[test]
fn off_grid_contradictions_are_rejected() {
    let mut hp = HyperParams::new(Architecture::Dkvmn);
    hp.flags.paper_literal_lstm = true;
    assert!(build_model(&hp, 4, 0, 1).is_err());
    let hp = HyperParams::new(Architecture::LstmDkt);
    assert!(build_model(&hp, 0, 0, 1).is_err());
}

#[test]
fn one_hot_value_input() {
    // With an identity input weight and zero recurrence the hidden state is
    // tanh of the one-hot attempt vector.
    let mut hp = toy(Architecture::VanillaDkt, InputVariant::OneHot, OutputVariant::OutputPerSkill);
    hp.recurrent_size = 8;
    let mut model = build_model(&hp, 4, 0, 1).unwrap();
    let mut eye = Tensor::zeros(8, 8);
    for i in 0..8 {
        eye.data_mut()[i * 8 + i] = 1.0;
    }
    *model.params.get_mut("W_x").unwrap() = eye;
    *model.params.get_mut("W_h").unwrap() = Tensor::zeros(8, 8);
    *model.params.get_mut("W_y").unwrap() = Tensor::filled(8, 4, 1.0);
    *model.params.get_mut("b_y").unwrap() = Tensor::zeros(1, 4);
    let seq = StudentSequence::from_pairs(0, [(1, 1), (2, 0)]);
    let p = predict_one(&model, &seq);
    let expected = 1.0 / (1.0 + (-(1.0f64.tanh())).exp());
    assert!((p[0] - expected).abs() < 1e-12);
}

#[test]
fn equal_attempts_embed_identically() {
    let hp = toy(Architecture::Dkvmn, InputVariant::Embedding, OutputVariant::OutputPerSkill);
    let model = build_model(&hp, 5, 0, 3).unwrap();
    let mut g = Graph::new();
    let table = g.param(&model.params, "E_v").unwrap();
    let rows = g.gather(table, &[7, 7, 2]).unwrap();
    let v = g.value(rows);
    assert_eq!(v.row(0), v.row(1));
    assert_eq!(v.row(0), model.params.get("E_v").unwrap().row(7));
}

fn constant_store(entries: &[(&str, Tensor)]) -> ParamStore {
    let mut store = ParamStore::new();
    for (name, t) in entries {
        store.insert(*name, t.clone());
    }
    store
}

fn lstm_store(input: usize, hidden: usize, bias: [f64; 4]) -> ParamStore {
    let mut entries = Vec::new();
    for (gate, b) in ["i", "f", "o", "m"].into_iter().zip(bias) {
        entries.push((format!("W_{gate}"), Tensor::zeros(input, hidden)));
        entries.push((format!("U_{gate}"), Tensor::zeros(hidden, hidden)));
        entries.push((format!("b_{gate}"), Tensor::filled(1, hidden, b)));
    }
    let refs: Vec<(&str, Tensor)> = entries.iter().map(|(n, t)| (n.as_str(), t.clone())).collect();
    constant_store(&refs)
}

fn run_lstm(store: &ParamStore, x: Tensor, m: Tensor) -> (Tensor, Tensor) {
    let mut g = Graph::new();
    let gate = |g: &mut Graph, n: &str| GateWeights {
        w: g.param(store, &format!("W_{n}")).unwrap(),
        u: g.param(store, &format!("U_{n}")).unwrap(),
        b: g.param(store, &format!("b_{n}")).unwrap(),
    };
    let w = LstmWeights {
        input: gate(&mut g, "i"),
        forget: gate(&mut g, "f"),
        output: gate(&mut g, "o"),
        candidate: gate(&mut g, "m"),
    };
    let rows = x.rows();
    let hidden = m.cols();
    let x = g.constant(x);
    let h = g.constant(Tensor::zeros(rows, hidden));
    let m = g.constant(m);
    let (h, m) = cells::lstm_step(&mut g, x, h, m, &w, false).unwrap();
    (g.value(h).clone(), g.value(m).clone())
}

#[test]
fn lstm_zero_everything_gives_zero_state() {
    let store = lstm_store(3, 4, [0.0; 4]);
    let (h, m) = run_lstm(&store, Tensor::zeros(1, 3), Tensor::zeros(1, 4));
    assert!(h.data().iter().all(|&v| v == 0.0));
    assert!(m.data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_perfect_memory_with_saturated_gates() {
    let store = lstm_store(3, 4, [-1e3, 1e3, 0.0, 0.0]);
    let prev = Tensor::matrix(1, 4, vec![0.3, -1.2, 2.0, 0.0]).unwrap();
    let (_, m) = run_lstm(&store, Tensor::filled(1, 3, 0.5), prev.clone());
    assert_eq!(m.data(), prev.data());
}

#[test]
fn vanilla_zero_and_bounded() {
    let mut g = Graph::new();
    let z = |g: &mut Graph, r, c| g.constant(Tensor::zeros(r, c));
    let (x, h, wx, wh, b) = (z(&mut g, 1, 3), z(&mut g, 1, 4), z(&mut g, 3, 4), z(&mut g, 4, 4), z(&mut g, 1, 4));
    let out = cells::vanilla_step(&mut g, x, h, wx, wh, b).unwrap();
    assert!(g.value(out).data().iter().all(|&v| v == 0.0));

    let big = g.constant(Tensor::filled(3, 4, 50.0));
    let x = g.constant(Tensor::filled(1, 3, 1.0));
    let out = cells::vanilla_step(&mut g, x, h, big, wh, b).unwrap();
    assert!(g.value(out).data().iter().all(|&v| v > -1.0 && v <= 1.0));
}

#[test]
fn dkvmn_single_slot_reads_the_row() {
    let mut g = Graph::new();
    let mem = g.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap());
    let logits = g.constant(Tensor::matrix(2, 1, vec![4.2, -7.0]).unwrap());
    let w = g.softmax(logits);
    assert_eq!(g.value(w).data(), &[1.0, 1.0]);
    let r = cells::dkvmn_read(&mut g, mem, w, 1).unwrap();
    assert_eq!(g.value(r).data(), &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
}

#[test]
fn dkvmn_attention_rows_sum_to_one() {
    let mut rng = KtRng::new(5);
    let mut g = Graph::new();
    let data = (0..5 * 7).map(|_| rng.uniform_range(-20.0, 20.0)).collect();
    let logits = g.constant(Tensor::matrix(5, 7, data).unwrap());
    let w = g.softmax(logits);
    for r in 0..5 {
        let total: f64 = g.value(w).row(r).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dkvmn_write_examples() {
    let mut g = Graph::new();
    let mem = g.constant(Tensor::matrix(2, 2, vec![0.4, -0.6, 1.5, 2.5]).unwrap());
    let a_val = Tensor::matrix(1, 2, vec![0.25, -0.75]).unwrap();
    let a = g.constant(a_val.clone());
    let e = g.constant(Tensor::filled(1, 2, 1.0));
    let w = g.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
    let out = cells::dkvmn_write(&mut g, mem, w, e, a, 2, false).unwrap();
    let out = g.value(out);
    assert_eq!(out.row(0), a_val.data());
    assert_eq!(out.row(1), &[1.5 + 0.25, 2.5 - 0.75]);

    let out = cells::dkvmn_write(&mut g, mem, w, e, a, 2, true).unwrap();
    assert_eq!(g.value(out).row(1), &[1.5, 2.5]);
}

#[test]
fn two_attempts_give_one_prediction() {
    let seq = StudentSequence::from_pairs(3, [(0, 1), (2, 0)]);
    for arch in Architecture::ALL {
        for (input, output) in VARIANTS {
            let model = build_model(&toy(arch, input, output), 4, 4, 1).unwrap();
            let batch = Batch::from_sequences(&[&seq], 4).unwrap();
            let preds = model.predict(&batch).unwrap();
            assert_eq!(preds.len(), 1);
            let p = preds.entries[0];
            assert_eq!((p.student, p.position, p.skill, p.label), (3, 1, 2, 0));
        }
    }
    let short = StudentSequence::from_pairs(3, [(0, 1)]);
    assert!(Batch::from_sequences(&[&short], 4).is_err());
}

#[test]
fn one_prediction_per_real_target() {
    let mut rng = KtRng::new(12);
    let seqs: Vec<StudentSequence> = (0..9).map(|i| random_sequence(&mut rng, i, 2 + i % 5, 4)).collect();
    let refs: Vec<&StudentSequence> = seqs.iter().collect();
    let model = build_model(&toy(Architecture::Sakt, InputVariant::OneHot, OutputVariant::OutputPerSkill), 4, 6, 1).unwrap();
    let mut total = 0;
    for batch in make_batches(&refs, 4, 4).unwrap() {
        let preds = model.predict(&batch).unwrap();
        assert!(preds.probabilities().iter().all(|&p| p > 0.0 && p < 1.0));
        total += preds.len();
    }
    assert_eq!(total, seqs.iter().map(|s| s.len() - 1).sum::<usize>());
}

#[test]
fn sakt_windows_long_sequences() {
    let mut rng = KtRng::new(2);
    let seq = random_sequence(&mut rng, 0, 12, 4);
    let hp = toy(Architecture::Sakt, InputVariant::Embedding, OutputVariant::SkillsToScalar);
    let model = build_model(&hp, 4, 4, 6).unwrap();
    let full = predict_one(&model, &seq);
    assert_eq!(full.len(), 11);
    // Windows cover steps 0..4, 4..8 and 8..11; each restarts its history.
    let tail = StudentSequence {
        student: 0,
        interactions: seq.interactions[4..].to_vec(),
    };
    let tail_preds = predict_one(&model, &tail);
    assert_eq!(&full[4..8], &tail_preds[..4]);
    let head = StudentSequence {
        student: 0,
        interactions: seq.interactions[..5].to_vec(),
    };
    assert_eq!(&full[..4], predict_one(&model, &head).as_slice());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for arch in Architecture::ALL {
        let hp = toy(arch, InputVariant::Embedding, OutputVariant::SkillsToScalar);
        let model = build_model(&hp, 5, 6, 8).unwrap();
        let path = dir.path().join(format!("{arch}.ckpt"));
        model.save(&path, 8).unwrap();
        let (loaded, manifest) = Model::load(&path).unwrap();
        assert_eq!(manifest.init_seed, 8);
        assert_eq!(manifest.architecture, arch);
        assert_eq!(loaded.hp, model.hp);
        assert_eq!(loaded.params.snapshot(), model.params.snapshot());
        let mut rng = KtRng::new(1);
        let seq = random_sequence(&mut rng, 0, 6, 5);
        assert_eq!(predict_one(&model, &seq), predict_one(&loaded, &seq));
    }
}

#[test]
fn training_reduces_loss_on_a_learnable_pattern() {
    // Skill 0 is always answered correctly, skill 1 always wrongly.
    let seqs: Vec<StudentSequence> = (0..16)
        .map(|i| StudentSequence::from_pairs(i, (0..8).map(|t| ((t + i) % 2, u8::from((t + i) % 2 == 0)))))
        .collect();
    let refs: Vec<&StudentSequence> = seqs.iter().collect();
    for arch in Architecture::ALL {
        let mut hp = toy(arch, InputVariant::OneHot, OutputVariant::OutputPerSkill);
        hp.learning_rate = 0.05;
        hp.dropout_rate = 0.0;
        let mut model = build_model(&hp, 2, 7, 1).unwrap();
        let batches = make_batches(&refs, 8, 2).unwrap();
        let mut rng = KtRng::new(0);
        let first: f64 = batches.iter().map(|b| model.clone().train_step(b, &mut rng.clone()).unwrap()).sum();
        for _ in 0..40 {
            for b in &batches {
                model.train_step(b, &mut rng).unwrap();
            }
        }
        let last: f64 = batches.iter().map(|b| model.clone().train_step(b, &mut rng.clone()).unwrap()).sum();
        assert!(last < 0.5 * first, "{arch}: {first} -> {last}");
    }
}
