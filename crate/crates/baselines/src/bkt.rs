//! Bayesian Knowledge Tracing: a two-state hidden Markov model per skill
//! (unlearned, learned) with no forgetting, fitted by Baum-Welch.

use std::collections::BTreeMap;
use std::path::Path;

use ktbench_core::rng::stream;
use ktbench_core::{Dataset, KtRng};
use rayon::prelude::*;

use crate::error::{BaselineError, Result};

pub const PARAM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BktParams {
    /// P(L0): probability the skill is already learned before the first attempt.
    pub prior: f64,
    /// P(T): probability of moving from unlearned to learned after an attempt.
    pub learn: f64,
    /// P(G): probability of answering correctly while unlearned.
    pub guess: f64,
    /// P(S): probability of answering wrongly while learned.
    pub slip: f64,
}

fn clamp(p: f64) -> f64 {
    p.clamp(PARAM_FLOOR, 1.0 - PARAM_FLOOR)
}

impl BktParams {
    pub fn new(prior: f64, learn: f64, guess: f64, slip: f64) -> Self {
        Self {
            prior,
            learn,
            guess,
            slip,
        }
    }

    pub fn clamped(self) -> Self {
        Self::new(clamp(self.prior), clamp(self.learn), clamp(self.guess), clamp(self.slip))
    }

    /// P(correct) given mastery estimate `l`.
    pub fn correct_probability(&self, l: f64) -> f64 {
        l * (1.0 - self.slip) + (1.0 - l) * self.guess
    }

    /// Posterior mastery after observing `correct`, before the transition.
    pub fn posterior(&self, l: f64, correct: u8) -> f64 {
        let (on_learned, on_unlearned) = if correct == 1 {
            (l * (1.0 - self.slip), (1.0 - l) * self.guess)
        } else {
            (l * self.slip, (1.0 - l) * (1.0 - self.guess))
        };
        let total = on_learned + on_unlearned;
        if total > 0.0 {
            on_learned / total
        } else {
            l
        }
    }

    /// Mastery for the next attempt after applying the learning transition.
    pub fn transition(&self, posterior: f64) -> f64 {
        posterior + (1.0 - posterior) * self.learn
    }

    /// Probability of each observation given the ones before it, for a
    /// sequence of attempts on this skill alone.
    pub fn filter(&self, observations: &[u8]) -> Vec<f64> {
        let mut l = self.prior;
        observations
            .iter()
            .map(|&c| {
                let p = self.correct_probability(l);
                l = self.transition(self.posterior(l, c));
                p
            })
            .collect()
    }

    fn emission(&self, state: usize, c: u8) -> f64 {
        match (state, c) {
            (0, 1) => self.guess,
            (0, _) => 1.0 - self.guess,
            (_, 1) => 1.0 - self.slip,
            (_, _) => self.slip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BktConfig {
    pub max_iterations: usize,
    /// Stop when an iteration improves the log-likelihood by less than this.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for BktConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub params: BktParams,
    pub log_likelihood: f64,
    /// Log-likelihood at the start of each iteration, ending with the final value.
    pub trace: Vec<f64>,
}

#[derive(Default)]
struct Expectations {
    log_likelihood: f64,
    first_learned: f64,
    sequences: f64,
    learn_num: f64,
    learn_den: f64,
    guess_num: f64,
    guess_den: f64,
    slip_num: f64,
    slip_den: f64,
}

fn expectations(params: &BktParams, sequences: &[Vec<u8>]) -> Expectations {
    let mut e = Expectations::default();
    let trans = [[1.0 - params.learn, params.learn], [0.0, 1.0]];
    let mut alpha: Vec<[f64; 2]> = Vec::new();
    let mut scale: Vec<f64> = Vec::new();
    let mut beta: Vec<[f64; 2]> = Vec::new();
    for obs in sequences.iter().filter(|o| !o.is_empty()) {
        let n = obs.len();
        alpha.clear();
        scale.clear();
        let mut a = [
            (1.0 - params.prior) * params.emission(0, obs[0]),
            params.prior * params.emission(1, obs[0]),
        ];
        for t in 0..n {
            if t > 0 {
                let prev = alpha[t - 1];
                a = [
                    prev[0] * trans[0][0] * params.emission(0, obs[t]),
                    (prev[0] * trans[0][1] + prev[1]) * params.emission(1, obs[t]),
                ];
            }
            let s = a[0] + a[1];
            scale.push(s);
            alpha.push([a[0] / s, a[1] / s]);
        }
        beta.clear();
        beta.resize(n, [1.0, 1.0]);
        for t in (0..n - 1).rev() {
            let e0 = params.emission(0, obs[t + 1]) * beta[t + 1][0];
            let e1 = params.emission(1, obs[t + 1]) * beta[t + 1][1];
            beta[t] = [
                (trans[0][0] * e0 + trans[0][1] * e1) / scale[t + 1],
                e1 / scale[t + 1],
            ];
        }

        e.log_likelihood += scale.iter().map(|s| s.ln()).sum::<f64>();
        e.sequences += 1.0;
        for t in 0..n {
            let g0 = alpha[t][0] * beta[t][0];
            let g1 = alpha[t][1] * beta[t][1];
            let norm = g0 + g1;
            let (g0, g1) = (g0 / norm, g1 / norm);
            if t == 0 {
                e.first_learned += g1;
            }
            let c = f64::from(obs[t]);
            e.guess_num += g0 * c;
            e.guess_den += g0;
            e.slip_num += g1 * (1.0 - c);
            e.slip_den += g1;
            if t + 1 < n {
                let xi01 = alpha[t][0] * trans[0][1] * params.emission(1, obs[t + 1]) * beta[t + 1][1] / scale[t + 1];
                e.learn_num += xi01;
                e.learn_den += g0;
            }
        }
    }
    e
}

fn ratio(num: f64, den: f64, fallback: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        fallback
    }
}

/// Log-likelihood of the observation sequences under `params`.
pub fn log_likelihood(params: &BktParams, sequences: &[Vec<u8>]) -> f64 {
    expectations(params, sequences).log_likelihood
}

/// Baum-Welch from one starting point.
pub fn fit_em(sequences: &[Vec<u8>], init: BktParams, config: &BktConfig) -> EmFit {
    let mut params = init.clamped();
    let mut trace = Vec::new();
    for _ in 0..config.max_iterations {
        let e = expectations(&params, sequences);
        if let Some(&last) = trace.last() {
            if e.log_likelihood - last < config.tolerance {
                trace.push(e.log_likelihood);
                return EmFit {
                    params,
                    log_likelihood: e.log_likelihood,
                    trace,
                };
            }
        }
        trace.push(e.log_likelihood);
        params = BktParams::new(
            ratio(e.first_learned, e.sequences, params.prior),
            ratio(e.learn_num, e.learn_den, params.learn),
            ratio(e.guess_num, e.guess_den, params.guess),
            ratio(e.slip_num, e.slip_den, params.slip),
        )
        .clamped();
    }
    let ll = log_likelihood(&params, sequences);
    trace.push(ll);
    EmFit {
        params,
        log_likelihood: ll,
        trace,
    }
}

fn random_start(rng: &mut KtRng) -> BktParams {
    BktParams::new(
        rng.uniform_range(0.1, 0.9),
        rng.uniform_range(0.05, 0.5),
        rng.uniform_range(0.05, 0.4),
        rng.uniform_range(0.05, 0.4),
    )
}

/// Best of `config.restarts` seeded EM runs by training log-likelihood.
/// `stream_label` separates the restart draws of different skills.
pub fn fit_skill(sequences: &[Vec<u8>], config: &BktConfig, stream_label: u64) -> EmFit {
    let mut rng = KtRng::derived(config.seed, &[stream::BKT_RESTARTS, stream_label]);
    let mut best: Option<EmFit> = None;
    for _ in 0..config.restarts.max(1) {
        let fit = fit_em(sequences, random_start(&mut rng), config);
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}

/// Per-skill BKT parameters plus the constant used for skills never seen
/// in training.
#[derive(Debug, Clone, PartialEq)]
pub struct BktModel {
    pub params: BTreeMap<usize, BktParams>,
    pub fallback: f64,
}

/// Per-skill observation sequences: for each student, the attempts on each
/// skill in order.
pub fn skill_sequences(data: &Dataset) -> BTreeMap<usize, Vec<Vec<u8>>> {
    let mut out: BTreeMap<usize, Vec<Vec<u8>>> = BTreeMap::new();
    for seq in &data.sequences {
        let mut per_skill: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
        for it in &seq.interactions {
            per_skill.entry(it.skill).or_default().push(it.correct);
        }
        for (skill, obs) in per_skill {
            out.entry(skill).or_default().push(obs);
        }
    }
    out
}

impl BktModel {
    pub fn fit(train: &Dataset, config: &BktConfig) -> Result<Self> {
        let n = train.attempt_count();
        if n == 0 {
            return Err(BaselineError::EmptyTraining);
        }
        let fallback = train.correct_count() as f64 / n as f64;
        let groups: Vec<(usize, Vec<Vec<u8>>)> = skill_sequences(train).into_iter().collect();
        let params = groups
            .par_iter()
            .map(|(skill, seqs)| (*skill, fit_skill(seqs, config, *skill as u64).params))
            .collect();
        Ok(Self { params, fallback })
    }

    /// Probabilities for attempts 2..T of a sequence; each skill is tracked
    /// independently and unseen skills get the fallback constant.
    pub fn predict(&self, skills: &[usize], corrects: &[u8]) -> Vec<f64> {
        let mut mastery: BTreeMap<usize, f64> = BTreeMap::new();
        let mut out = Vec::with_capacity(skills.len().saturating_sub(1));
        for (t, (&s, &c)) in skills.iter().zip(corrects).enumerate() {
            let p = match self.params.get(&s) {
                Some(bp) => {
                    let l = *mastery.entry(s).or_insert(bp.prior);
                    let p = bp.correct_probability(l);
                    mastery.insert(s, bp.transition(bp.posterior(l, c)));
                    p
                }
                None => self.fallback,
            };
            if t > 0 {
                out.push(p);
            }
        }
        out
    }

    /// Writes `skill,L0,T,G,S` rows, one per fitted skill, named through
    /// `skill_names`.
    pub fn write_table(&self, skill_names: &[String], path: &Path) -> Result<()> {
        let io = |e: csv::Error| BaselineError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["skill", "L0", "T", "G", "S"]).map_err(io)?;
        for (&skill, p) in &self.params {
            let name = skill_names.get(skill).cloned().unwrap_or_else(|| skill.to_string());
            w.write_record([
                name,
                p.prior.to_string(),
                p.learn.to_string(),
                p.guess.to_string(),
                p.slip.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|source| BaselineError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a table written by [`BktModel::write_table`].
    pub fn read_table(path: &Path, skill_names: &[String], fallback: f64) -> Result<Self> {
        let fmt = |message: String| BaselineError::Format {
            path: path.to_path_buf(),
            message,
        };
        let index: BTreeMap<&str, usize> = skill_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut r = csv::Reader::from_path(path).map_err(|e| fmt(e.to_string()))?;
        let mut params = BTreeMap::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| fmt(e.to_string()))?;
            if rec.len() != 5 {
                return Err(fmt(format!("row {}: expected 5 fields", row + 2)));
            }
            let skill = *index
                .get(&rec[0])
                .ok_or_else(|| fmt(format!("row {}: unknown skill `{}`", row + 2, &rec[0])))?;
            let mut v = [0.0; 4];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = rec[k + 1]
                    .parse()
                    .map_err(|_| fmt(format!("row {}: bad probability `{}`", row + 2, &rec[k + 1])))?;
            }
            params.insert(skill, BktParams::new(v[0], v[1], v[2], v[3]));
        }
        Ok(Self { params, fallback })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_matches_hand_computation() {
        let p = BktParams::new(0.3, 0.2, 0.15, 0.1);
        let first = p.correct_probability(0.3);
        assert!((first - 0.375).abs() < 1e-12);
        let post = p.posterior(0.3, 1);
        assert!((post - 0.72).abs() < 1e-12);
        assert!((p.transition(post) - 0.776).abs() < 1e-12);
        let f = p.filter(&[1, 1]);
        assert!((f[1] - p.correct_probability(0.776)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_parameters() {
        let mastered = BktParams::new(1.0, 0.3, 0.2, 0.0);
        assert!(mastered.filter(&[1, 0, 1, 1]).iter().all(|&p| p == 1.0));
        let stuck = BktParams::new(0.0, 0.0, 0.2, 0.1);
        assert!(stuck.filter(&[1, 0, 1, 1]).iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn transition_never_lowers_mastery() {
        let p = BktParams::new(0.4, 0.15, 0.2, 0.1);
        for c in [0, 1] {
            for l in [0.0, 0.1, 0.5, 0.9, 1.0] {
                let post = p.posterior(l, c);
                assert!(p.transition(post) >= post);
            }
        }
    }
}
