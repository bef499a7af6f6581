//! Built-in consistency checks: analytic gradients against finite
//! differences, metrics against brute-force oracles, and the causal
//! masking of every architecture.

use std::io::Write;

use ktbench_autodiff::gradcheck::GradCheckConfig;
use ktbench_core::{KtRng, Metric, MetricReport, StudentSequence};
use ktbench_models::{build_model, Architecture, Batch, HyperParams, InputVariant, OutputVariant};

use crate::error::{CliError, Result};

const VARIANTS: [(InputVariant, OutputVariant); 4] = [
    (InputVariant::OneHot, OutputVariant::OutputPerSkill),
    (InputVariant::OneHot, OutputVariant::SkillsToScalar),
    (InputVariant::Embedding, OutputVariant::OutputPerSkill),
    (InputVariant::Embedding, OutputVariant::SkillsToScalar),
];

const SKILLS: usize = 5;
const LEN: usize = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelftestSummary {
    pub total: usize,
    pub failed: usize,
}

struct Recorder<'a> {
    out: &'a mut dyn Write,
    summary: SelftestSummary,
}

impl Recorder<'_> {
    fn record(&mut self, name: &str, ok: bool, detail: &str) -> Result<()> {
        self.summary.total += 1;
        if !ok {
            self.summary.failed += 1;
        }
        writeln!(self.out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" })
            .map_err(|e| CliError::Data(format!("writing output: {e}")))
    }
}

fn toy(arch: Architecture, input: InputVariant, output: OutputVariant) -> HyperParams {
    let mut hp = HyperParams::new(arch);
    hp.recurrent_size = 8;
    hp.key_embed_size = 6;
    hp.value_embed_size = 6;
    hp.summary_size = 6;
    hp.attention_heads = 2;
    hp.input = input;
    hp.output = output;
    hp
}

fn random_sequence(rng: &mut KtRng, student: usize, len: usize) -> StudentSequence {
    let pairs: Vec<(usize, u8)> = (0..len)
        .map(|_| (rng.below(SKILLS as u64) as usize, u8::from(rng.bernoulli(0.6))))
        .collect();
    StudentSequence::from_pairs(student, pairs)
}

pub fn run_all(seed: u64, instances: usize, out: &mut dyn Write) -> Result<SelftestSummary> {
    let mut rec = Recorder {
        out,
        summary: SelftestSummary::default(),
    };
    gradients(seed, &mut rec)?;
    metrics(seed, instances, &mut rec)?;
    causality(seed, &mut rec)?;
    Ok(rec.summary)
}

fn gradients(seed: u64, rec: &mut Recorder<'_>) -> Result<()> {
    let mut rng = KtRng::new(seed);
    let a = random_sequence(&mut rng, 0, LEN);
    let b = random_sequence(&mut rng, 1, LEN - 2);
    let batch = Batch::from_sequences(&[&a, &b], SKILLS)?;
    for arch in Architecture::ALL {
        for (input, output) in VARIANTS {
            let model = build_model(&toy(arch, input, output), SKILLS, LEN, seed)?;
            let report = model.gradient_check(&batch, GradCheckConfig::default(), None)?;
            let ok = report.pass_fraction() >= 0.99 && report.max_relative_error() < 1e-3;
            rec.record(
                &format!("gradient {arch} {} {}", input.tag(), output.tag()),
                ok,
                &format!(
                    "{} coordinates, pass fraction {:.4}, max relative error {:.2e}",
                    report.checks.len(),
                    report.pass_fraction(),
                    report.max_relative_error()
                ),
            )?;
        }
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half, by enumerating every pair.
fn pairwise_auc(labels: &[u8], probs: &[f64]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if probs[i] > probs[j] {
                    wins += 1.0;
                } else if probs[i] == probs[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn oracle(labels: &[u8], probs: &[f64]) -> MetricReport {
    let n = labels.len() as f64;
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (&l, &p) in labels.iter().zip(probs) {
        match (l, p >= 0.5) {
            (1, true) => tp += 1.0,
            (0, true) => fp += 1.0,
            (0, false) => tn += 1.0,
            _ => fn_ += 1.0,
        }
    }
    let div = |a: f64, b: f64| if b == 0.0 { None } else { Some(a / b) };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = div(2.0 * tp, 2.0 * tp + fp + fn_).filter(|_| precision.is_some() && recall.is_some() && tp > 0.0);
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    MetricReport {
        accuracy: Some((tp + tn) / n),
        auc: pairwise_auc(labels, probs),
        precision,
        recall,
        f1,
        mcc: div(tp * tn - fp * fn_, mcc_den),
        rmse: Some((labels.iter().zip(probs).map(|(&l, &p)| (f64::from(l) - p).powi(2)).sum::<f64>() / n).sqrt()),
        log_loss: Some(
            -labels
                .iter()
                .zip(probs)
                .map(|(&l, &p)| if l == 1 { p.ln() } else { (1.0 - p).ln() })
                .sum::<f64>()
                / n,
        ),
    }
}

fn metrics(seed: u64, instances: usize, rec: &mut Recorder<'_>) -> Result<()> {
    let mut rng = KtRng::new(seed ^ 0x6d65_7472_6963);
    let mut worst = 0.0f64;
    let mut mismatched = 0;
    for _ in 0..instances {
        let n = 1 + rng.below(60) as usize;
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        // Coarse probabilities produce plenty of ties.
        let probs: Vec<f64> = (0..n).map(|_| (1 + rng.below(19)) as f64 / 20.0).collect();
        let got = MetricReport::compute(&labels, &probs)?;
        let want = oracle(&labels, &probs);
        for m in Metric::ALL {
            match (got.get(m), want.get(m)) {
                (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                (None, None) => {}
                _ => mismatched += 1,
            }
        }
    }
    rec.record(
        "metrics against brute-force oracles",
        worst < 1e-9 && mismatched == 0,
        &format!("{instances} instances, max deviation {worst:.2e}, definedness mismatches {mismatched}"),
    )
}

fn causality(seed: u64, rec: &mut Recorder<'_>) -> Result<()> {
    let mut rng = KtRng::new(seed ^ 0x6361_7573);
    let len = 8;
    for arch in Architecture::ALL {
        let mut worst = 0.0f64;
        for (input, output) in VARIANTS {
            let model = build_model(&toy(arch, input, output), SKILLS, len, seed)?;
            for _ in 0..10 {
                let base = random_sequence(&mut rng, 0, len);
                let u = 1 + rng.below(len as u64 - 1) as usize;
                let mut flipped = base.clone();
                flipped.interactions[u].correct ^= 1;
                let p0 = model.predict(&Batch::from_sequences(&[&base], SKILLS)?)?;
                let p1 = model.predict(&Batch::from_sequences(&[&flipped], SKILLS)?)?;
                for (x, y) in p0.entries.iter().zip(&p1.entries) {
                    if x.position <= u {
                        worst = worst.max((x.probability - y.probability).abs());
                    }
                }
            }
        }
        rec.record(
            &format!("causality {arch}"),
            worst == 0.0,
            &format!("max change before the flipped answer {worst:.2e}"),
        )?;
    }
    Ok(())
}
