//! Best-LR: logistic regression on student and skill indicators plus
//! rescaled counts of earlier successes and failures.

use std::collections::BTreeMap;
use std::path::Path;

use ktbench_autodiff::{checkpoint, Gradients, Nadam, ParamStore, Tensor};
use ktbench_core::Dataset;

use crate::error::{BaselineError, Result};

/// Sparse feature vector: `(index, value)` pairs with distinct indices.
pub type SparseRow = Vec<(usize, f64)>;

/// The count rescaling `log2(1 + x)`.
pub fn rescale(count: u32) -> f64 {
    f64::from(count).ln_1p() / std::f64::consts::LN_2
}

/// Column layout of the feature vector, sized by the training vocabulary.
///
/// Order: student indicators, skill indicators, per-skill successes,
/// per-skill failures, total successes, total failures, bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    students: BTreeMap<usize, usize>,
    skills: BTreeMap<usize, usize>,
}

impl FeatureLayout {
    pub fn from_training(train: &Dataset) -> Self {
        let students = train.students().into_iter().enumerate().map(|(i, s)| (s, i)).collect();
        let skills = train.present_skills().into_iter().enumerate().map(|(i, s)| (s, i)).collect();
        Self { students, skills }
    }

    pub fn student_count(&self) -> usize {
        self.students.len()
    }

    pub fn skill_count(&self) -> usize {
        self.skills.len()
    }

    pub fn width(&self) -> usize {
        self.students.len() + 3 * self.skills.len() + 3
    }

    pub fn bias_index(&self) -> usize {
        self.width() - 1
    }

    fn skill_block(&self) -> usize {
        self.students.len()
    }

    fn success_block(&self) -> usize {
        self.students.len() + self.skills.len()
    }

    fn failure_block(&self) -> usize {
        self.students.len() + 2 * self.skills.len()
    }

    fn totals(&self) -> usize {
        self.students.len() + 3 * self.skills.len()
    }

    fn row(&self, student: usize, skill: usize, skill_counts: (u32, u32), totals: (u32, u32)) -> SparseRow {
        let mut row = Vec::with_capacity(7);
        if let Some(&i) = self.students.get(&student) {
            row.push((i, 1.0));
        }
        if let Some(&k) = self.skills.get(&skill) {
            row.push((self.skill_block() + k, 1.0));
            row.push((self.success_block() + k, rescale(skill_counts.0)));
            row.push((self.failure_block() + k, rescale(skill_counts.1)));
        }
        row.push((self.totals(), rescale(totals.0)));
        row.push((self.totals() + 1, rescale(totals.1)));
        row.push((self.bias_index(), 1.0));
        row
    }

    /// Features of an attempt on `skill` by `student` given the attempts
    /// `history` that came strictly before it.
    pub fn encode_position(&self, student: usize, skill: usize, history: &[(usize, u8)]) -> SparseRow {
        let count = |pred: &dyn Fn(&(usize, u8)) -> bool| history.iter().filter(|h| pred(h)).count() as u32;
        let skill_counts = (
            count(&|&(s, c)| s == skill && c == 1),
            count(&|&(s, c)| s == skill && c == 0),
        );
        let totals = (count(&|&(_, c)| c == 1), count(&|&(_, c)| c == 0));
        self.row(student, skill, skill_counts, totals)
    }

    /// Features for every attempt of one student's sequence, keeping
    /// running counts.
    pub fn encode_sequence(&self, student: usize, skills: &[usize], corrects: &[u8]) -> Vec<SparseRow> {
        let mut per_skill: BTreeMap<usize, (u32, u32)> = BTreeMap::new();
        let mut totals = (0u32, 0u32);
        let mut out = Vec::with_capacity(skills.len());
        for (&s, &c) in skills.iter().zip(corrects) {
            let counts = per_skill.get(&s).copied().unwrap_or((0, 0));
            out.push(self.row(student, s, counts, totals));
            let entry = per_skill.entry(s).or_insert((0, 0));
            if c == 1 {
                entry.0 += 1;
                totals.0 += 1;
            } else {
                entry.1 += 1;
                totals.1 += 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlrConfig {
    /// L2 strength on every weight except the bias.
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for GlrConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            learning_rate: 0.01,
            max_epochs: 5000,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlrFit {
    pub epochs: usize,
    pub gradient_norm: f64,
    pub objective: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(w: &[f64], x: &SparseRow) -> f64 {
    x.iter().map(|&(i, v)| w[i] * v).sum()
}

/// Objective `(1/N) * (sum of cross-entropies + lambda/2 * |w|^2)` with the
/// bias (the last coordinate) left out of the penalty, and its gradient.
fn objective(w: &[f64], rows: &[SparseRow], labels: &[u8], lambda: f64) -> (f64, Vec<f64>) {
    let n = rows.len() as f64;
    let bias = w.len() - 1;
    let mut grad = vec![0.0; w.len()];
    let mut loss = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let z = dot(w, x);
        // log(1 + e^z) - y z, computed stably
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - f64::from(y) * z;
        let r = sigmoid(z) - f64::from(y);
        for &(i, v) in x {
            grad[i] += r * v;
        }
    }
    for (i, (g, &wi)) in grad.iter_mut().zip(w).enumerate() {
        if i != bias {
            *g += lambda * wi;
            loss += 0.5 * lambda * wi * wi;
        }
        *g /= n;
    }
    (loss / n, grad)
}

/// Full-batch Nadam on the regularised logistic loss. The last column of
/// the rows is treated as the unpenalised bias.
pub fn fit_weights(rows: &[SparseRow], labels: &[u8], width: usize, config: &GlrConfig) -> Result<(Vec<f64>, GlrFit)> {
    if rows.is_empty() {
        return Err(BaselineError::EmptyTraining);
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(BaselineError::SingleClass);
    }
    let mut store = ParamStore::new();
    store.insert("w", Tensor::zeros(1, width));
    let opt = Nadam::new(config.learning_rate);
    let mut fit = GlrFit {
        epochs: 0,
        gradient_norm: f64::INFINITY,
        objective: f64::INFINITY,
    };
    loop {
        let w = store.require("w")?.data();
        let (loss, grad) = objective(w, rows, labels, config.lambda);
        if !loss.is_finite() {
            return Err(BaselineError::Divergence(format!("objective {loss} at epoch {}", fit.epochs)));
        }
        fit.objective = loss;
        fit.gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if fit.gradient_norm < config.tolerance || fit.epochs >= config.max_epochs {
            break;
        }
        let grads = Gradients::from_map(BTreeMap::from([("w".to_string(), Tensor::row_vector(grad))]));
        opt.step(&mut store, &grads)
            .map_err(|e| BaselineError::Divergence(e.to_string()))?;
        fit.epochs += 1;
    }
    let w = store.require("w")?.data().to_vec();
    Ok((w, fit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlrModel {
    pub layout: FeatureLayout,
    pub weights: Vec<f64>,
    pub fit: GlrFit,
}

impl GlrModel {
    /// Fits on every attempt of every training sequence.
    pub fn fit(train: &Dataset, config: &GlrConfig) -> Result<Self> {
        let layout = FeatureLayout::from_training(train);
        let mut rows = Vec::with_capacity(train.attempt_count());
        let mut labels = Vec::with_capacity(train.attempt_count());
        for seq in &train.sequences {
            let skills: Vec<usize> = seq.skills().collect();
            let corrects: Vec<u8> = seq.corrects().collect();
            rows.extend(layout.encode_sequence(seq.student, &skills, &corrects));
            labels.extend(corrects);
        }
        let (weights, fit) = fit_weights(&rows, &labels, layout.width(), config)?;
        Ok(Self { layout, weights, fit })
    }

    pub fn probability(&self, row: &SparseRow) -> f64 {
        sigmoid(dot(&self.weights, row))
    }

    /// Probabilities for attempts 2..T of a sequence.
    pub fn predict(&self, student: usize, skills: &[usize], corrects: &[u8]) -> Vec<f64> {
        self.layout
            .encode_sequence(student, skills, corrects)
            .iter()
            .skip(1)
            .map(|r| self.probability(r))
            .collect()
    }

    /// Stores the weights and the vocabulary maps in a checkpoint file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut store = ParamStore::new();
        store.insert("weights", Tensor::row_vector(self.weights.clone()));
        let as_row = |m: &BTreeMap<usize, usize>| {
            let mut keys: Vec<(usize, usize)> = m.iter().map(|(&k, &v)| (v, k)).collect();
            keys.sort_unstable();
            Tensor::row_vector(keys.into_iter().map(|(_, k)| k as f64).collect())
        };
        if !self.layout.students.is_empty() {
            store.insert("students", as_row(&self.layout.students));
        }
        if !self.layout.skills.is_empty() {
            store.insert("skills", as_row(&self.layout.skills));
        }
        checkpoint::save(&store, "glr", path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, store) = checkpoint::load(path)?;
        if header != "glr" {
            return Err(BaselineError::Format {
                path: path.to_path_buf(),
                message: format!("not a GLR checkpoint (header `{header}`)"),
            });
        }
        let index = |name: &str| -> BTreeMap<usize, usize> {
            store
                .get(name)
                .map(|t| t.data().iter().enumerate().map(|(i, &k)| (k as usize, i)).collect())
                .unwrap_or_default()
        };
        let layout = FeatureLayout {
            students: index("students"),
            skills: index("skills"),
        };
        let weights = store.require("weights")?.data().to_vec();
        if weights.len() != layout.width() {
            return Err(BaselineError::Format {
                path: path.to_path_buf(),
                message: format!("{} weights for a layout of width {}", weights.len(), layout.width()),
            });
        }
        Ok(Self {
            layout,
            weights,
            fit: GlrFit {
                epochs: 0,
                gradient_norm: f64::NAN,
                objective: f64::NAN,
            },
        })
    }
}
