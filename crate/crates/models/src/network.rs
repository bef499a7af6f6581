//! Parameter inventories and forward passes of the six architectures.

use ktbench_autodiff::{Graph, ParamSpec, ParamStore, Tensor, Var};
use ktbench_core::KtRng;

use crate::batch::Batch;
use crate::cells::{self, GateWeights, LstmWeights};
use crate::error::{ModelError, Result};
use crate::hparams::{Architecture, HyperParams, InputVariant, OutputVariant};

const LSTM_GATES: [&str; 4] = ["i", "f", "o", "m"];

fn head_specs(hp: &HyperParams, features: usize, skills: usize, out: &mut Vec<ParamSpec>) {
    match hp.output {
        OutputVariant::OutputPerSkill => {
            out.push(ParamSpec::weight("W_y", features, skills));
            out.push(ParamSpec::bias("b_y", skills));
        }
        OutputVariant::SkillsToScalar => {
            out.push(ParamSpec::weight("W_s", features, hp.summary_size));
            out.push(ParamSpec::bias("b_s", hp.summary_size));
            out.push(ParamSpec::weight("W_y", hp.summary_size, 1));
            out.push(ParamSpec::bias("b_y", 1));
        }
    }
}

/// Every trainable tensor the configuration needs. `positions` is the
/// number of SAKT position embeddings and is ignored by other models.
pub fn param_specs(hp: &HyperParams, skills: usize, positions: usize) -> Vec<ParamSpec> {
    let kw = hp.key_width(skills);
    let vw = hp.value_width(skills);
    let h = hp.recurrent_size;
    let arch = hp.architecture;
    let mut specs = Vec::new();
    if hp.input == InputVariant::Embedding {
        specs.push(ParamSpec::embedding("E_v", 2 * skills, vw));
        if arch.uses_keys() {
            specs.push(ParamSpec::embedding("E_k", skills, kw));
        }
    }
    match arch {
        Architecture::VanillaDkt => {
            specs.push(ParamSpec::weight("W_x", vw, h));
            specs.push(ParamSpec::weight("W_h", h, h));
            specs.push(ParamSpec::bias("b_h", h));
            head_specs(hp, h, skills, &mut specs);
        }
        Architecture::LstmDkt | Architecture::LstmDktSPlus => {
            let input = if arch == Architecture::LstmDktSPlus { vw + kw } else { vw };
            for gate in LSTM_GATES {
                specs.push(ParamSpec::weight(format!("W_{gate}"), input, h));
                specs.push(ParamSpec::weight(format!("U_{gate}"), h, h));
                specs.push(ParamSpec::bias(format!("b_{gate}"), h));
            }
            head_specs(hp, h, skills, &mut specs);
        }
        Architecture::Dkvmn | Architecture::DkvmnPaper => {
            if arch == Architecture::DkvmnPaper {
                specs.push(ParamSpec::weight("M_k", h, kw));
            } else {
                specs.push(ParamSpec::weight("W_kf", kw, kw));
                specs.push(ParamSpec::bias("b_kf", kw));
                specs.push(ParamSpec::weight("W_w", kw, h));
                specs.push(ParamSpec::bias("b_w", h));
            }
            specs.push(ParamSpec::weight("M_v0", h, vw));
            specs.push(ParamSpec::weight("W_e", vw, vw));
            specs.push(ParamSpec::bias("b_e", vw));
            specs.push(ParamSpec::weight("W_a", vw, vw));
            specs.push(ParamSpec::bias("b_a", vw));
            head_specs(hp, kw + vw, skills, &mut specs);
        }
        Architecture::Sakt => {
            specs.push(ParamSpec::embedding("W_p", positions.max(1), vw));
            specs.push(ParamSpec::weight("W_q", kw, h));
            specs.push(ParamSpec::weight("W_val", vw, h));
            if !hp.flags.shared_kv_projection {
                specs.push(ParamSpec::weight("W_key", vw, h));
            }
            specs.push(ParamSpec::weight("W_o", h, h));
            specs.push(ParamSpec::bias("b_o", h));
            specs.push(ParamSpec::weight("W_f1", h, h));
            specs.push(ParamSpec::bias("b_f1", h));
            match hp.output {
                OutputVariant::OutputPerSkill => {
                    specs.push(ParamSpec::weight("W_f2", h, h));
                    specs.push(ParamSpec::bias("b_f2", h));
                    specs.push(ParamSpec::weight("W_y", h, skills));
                    specs.push(ParamSpec::bias("b_y", skills));
                }
                OutputVariant::SkillsToScalar => {
                    specs.push(ParamSpec::weight("W_f2", h, hp.summary_size));
                    specs.push(ParamSpec::bias("b_f2", hp.summary_size));
                    specs.push(ParamSpec::weight("W_y", hp.summary_size, 1));
                    specs.push(ParamSpec::bias("b_y", 1));
                }
            }
        }
    }
    specs
}

/// Forward-pass state shared by the architectures.
pub(crate) struct Ctx<'a> {
    pub g: &'a mut Graph,
    pub store: &'a ParamStore,
    pub hp: &'a HyperParams,
    pub skills: usize,
    /// Dropout generator; `None` means evaluation mode.
    pub rng: Option<&'a mut KtRng>,
}

impl Ctx<'_> {
    fn p(&mut self, name: &str) -> Result<Var> {
        Ok(self.g.param(self.store, name)?)
    }

    fn affine(&mut self, x: Var, w: &str, b: &str) -> Result<Var> {
        let w = self.p(w)?;
        let b = self.p(b)?;
        Ok(self.g.affine(x, w, b)?)
    }

    fn dropout(&mut self, v: Var) -> Result<Var> {
        match self.rng.as_deref_mut() {
            Some(rng) => Ok(self.g.dropout(v, self.hp.dropout_rate, true, rng)?),
            None => Ok(v),
        }
    }

    fn one_hot(&mut self, indices: &[usize], width: usize) -> Result<Var> {
        let mut data = vec![0.0; indices.len() * width];
        for (r, &i) in indices.iter().enumerate() {
            if i >= width {
                return Err(ModelError::OutOfBounds { index: i, bound: width });
            }
            data[r * width + i] = 1.0;
        }
        Ok(self.g.constant(Tensor::matrix(indices.len(), width, data)?))
    }

    /// Value vectors of encoded attempts `2s + c`.
    fn value(&mut self, encoded: &[usize]) -> Result<Var> {
        match self.hp.input {
            InputVariant::OneHot => self.one_hot(encoded, 2 * self.skills),
            InputVariant::Embedding => {
                let e = self.p("E_v")?;
                Ok(self.g.gather(e, encoded)?)
            }
        }
    }

    /// Key vectors of skills.
    fn key(&mut self, skills: &[usize]) -> Result<Var> {
        match self.hp.input {
            InputVariant::OneHot => self.one_hot(skills, self.skills),
            InputVariant::Embedding => {
                let e = self.p("E_k")?;
                Ok(self.g.gather(e, skills)?)
            }
        }
    }

    /// Output head on `features` (one row per sequence), giving a `B x 1`
    /// probability column for the skills `next`.
    fn head(&mut self, features: Var, next: &[usize]) -> Result<Var> {
        let f = self.dropout(features)?;
        match self.hp.output {
            OutputVariant::OutputPerSkill => {
                let z = self.affine(f, "W_y", "b_y")?;
                let y = self.g.sigmoid(z);
                Ok(self.g.select_cols(y, next)?)
            }
            OutputVariant::SkillsToScalar => {
                let z = self.affine(f, "W_s", "b_s")?;
                let s = self.g.tanh(z);
                let z = self.affine(s, "W_y", "b_y")?;
                Ok(self.g.sigmoid(z))
            }
        }
    }

    fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.g.constant(Tensor::zeros(rows, cols))
    }

    fn vanilla_step(&mut self, x: Var, h: Var) -> Result<Var> {
        let wx = self.p("W_x")?;
        let wh = self.p("W_h")?;
        let b = self.p("b_h")?;
        cells::vanilla_step(self.g, x, h, wx, wh, b)
    }

    fn gate_weights(&mut self, gate: &str) -> Result<GateWeights> {
        Ok(GateWeights {
            w: self.p(&format!("W_{gate}"))?,
            u: self.p(&format!("U_{gate}"))?,
            b: self.p(&format!("b_{gate}"))?,
        })
    }

    fn lstm_step(&mut self, x: Var, h: Var, m: Var) -> Result<(Var, Var)> {
        let w = LstmWeights {
            input: self.gate_weights("i")?,
            forget: self.gate_weights("f")?,
            output: self.gate_weights("o")?,
            candidate: self.gate_weights("m")?,
        };
        cells::lstm_step(self.g, x, h, m, &w, self.hp.flags.paper_literal_lstm)
    }

    fn rnn_forward(&mut self, batch: &Batch) -> Result<Var> {
        let arch = self.hp.architecture;
        let b = batch.size();
        let hsize = self.hp.recurrent_size;
        let mut h = self.zeros(b, hsize);
        let mut m = self.zeros(b, hsize);
        let mut outputs = Vec::with_capacity(batch.steps);
        for j in 0..batch.steps {
            let next = batch.next_at(j);
            let mut x = self.value(&batch.inputs_at(j))?;
            if arch == Architecture::LstmDktSPlus {
                let k = self.key(&next)?;
                x = self.g.concat_cols(&[x, k])?;
            }
            if arch == Architecture::VanillaDkt {
                h = self.vanilla_step(x, h)?;
            } else {
                (h, m) = self.lstm_step(x, h, m)?;
            }
            outputs.push(self.head(h, &next)?);
        }
        Ok(self.g.concat_cols(&outputs)?)
    }

    /// Attention weights over the memory slots for key vectors `k`.
    fn dkvmn_attention(&mut self, k: Var, key_memory_t: Option<Var>) -> Result<Var> {
        let logits = match key_memory_t {
            Some(mkt) => self.g.matmul(k, mkt)?,
            None => {
                let z = self.affine(k, "W_kf", "b_kf")?;
                let kf = self.g.tanh(z);
                self.affine(kf, "W_w", "b_w")?
            }
        };
        Ok(self.g.softmax(logits))
    }

    fn dkvmn_write(&mut self, mem: Var, w: Var, v: Var) -> Result<Var> {
        let ze = self.affine(v, "W_e", "b_e")?;
        let e = self.g.sigmoid(ze);
        let za = self.affine(v, "W_a", "b_a")?;
        let a = self.g.tanh(za);
        let slots = self.hp.recurrent_size;
        cells::dkvmn_write(self.g, mem, w, e, a, slots, self.hp.flags.weighted_add)
    }

    fn dkvmn_forward(&mut self, batch: &Batch) -> Result<Var> {
        let b = batch.size();
        let key_memory_t = if self.hp.architecture == Architecture::DkvmnPaper {
            let mk = self.p("M_k")?;
            Some(self.g.transpose(mk))
        } else {
            None
        };
        let m0 = self.p("M_v0")?;
        let mut mem = self.g.tile_rows(m0, b)?;
        let mut outputs = Vec::with_capacity(batch.steps);
        for j in 0..batch.steps {
            let next = batch.next_at(j);
            let k = self.key(&next)?;
            let w = self.dkvmn_attention(k, key_memory_t)?;
            let r = cells::dkvmn_read(self.g, mem, w, self.hp.recurrent_size)?;
            let features = self.g.concat_cols(&[k, r])?;
            outputs.push(self.head(features, &next)?);
            let v = self.value(&batch.inputs_at(j))?;
            mem = self.dkvmn_write(mem, w, v)?;
        }
        Ok(self.g.concat_cols(&outputs)?)
    }

    /// SAKT over a batch whose step count fits the position table.
    fn sakt_window(&mut self, batch: &Batch) -> Result<Var> {
        let b = batch.size();
        let l = batch.steps;
        let a = self.hp.recurrent_size;
        let heads = self.hp.attention_heads;
        let d = a / heads;

        let keys = self.key(&batch.next_skills)?;
        let values = self.value(&batch.inputs)?;
        let wp = self.p("W_p")?;
        let pos = self.g.slice_rows(wp, 0, l)?;
        let pos = self.g.tile_rows(pos, b)?;
        let vp = self.g.add(values, pos)?;

        let wq = self.p("W_q")?;
        let q = self.g.matmul(keys, wq)?;
        let wval = self.p("W_val")?;
        let vals = self.g.matmul(vp, wval)?;
        let ks = if self.hp.flags.shared_kv_projection {
            vals
        } else {
            let wkey = self.p("W_key")?;
            self.g.matmul(vp, wkey)?
        };

        let scale = 1.0 / (a as f64).sqrt();
        let mut rows = Vec::with_capacity(b);
        for bi in 0..b {
            let mut causal = vec![0.0; l * l];
            for qi in 0..l {
                for ki in 0..=qi {
                    causal[qi * l + ki] = batch.mask.get(bi, ki);
                }
            }
            let causal = Tensor::matrix(l, l, causal)?;
            let qb = self.g.slice_rows(q, bi * l, l)?;
            let kb = self.g.slice_rows(ks, bi * l, l)?;
            let vb = self.g.slice_rows(vals, bi * l, l)?;
            let mut head_outputs = Vec::with_capacity(heads);
            for hi in 0..heads {
                let qh = self.g.slice_cols(qb, hi * d, d)?;
                let kh = self.g.slice_cols(kb, hi * d, d)?;
                let vh = self.g.slice_cols(vb, hi * d, d)?;
                let kt = self.g.transpose(kh);
                let scores = self.g.matmul(qh, kt)?;
                let scores = self.g.scale(scores, scale);
                let att = self.g.masked_softmax(scores, &causal)?;
                head_outputs.push(self.g.matmul(att, vh)?);
            }
            rows.push(if heads == 1 {
                head_outputs[0]
            } else {
                self.g.concat_cols(&head_outputs)?
            });
        }
        let attended = self.g.concat_rows(&rows)?;
        let projected = self.affine(attended, "W_o", "b_o")?;
        let projected = self.dropout(projected)?;
        let z1 = self.affine(projected, "W_f1", "b_f1")?;
        let f1 = self.g.relu(z1);
        let f2 = self.affine(f1, "W_f2", "b_f2")?;
        let f2 = self.dropout(f2)?;
        let out = self.affine(f2, "W_y", "b_y")?;
        let y = self.g.sigmoid(out);
        let col = match self.hp.output {
            OutputVariant::OutputPerSkill => self.g.select_cols(y, &batch.next_skills)?,
            OutputVariant::SkillsToScalar => y,
        };
        Ok(self.g.reshape(col, b, l)?)
    }

    fn sakt_forward(&mut self, batch: &Batch) -> Result<Var> {
        let positions = self.store.require("W_p")?.rows();
        if batch.steps <= positions {
            return self.sakt_window(batch);
        }
        let mut parts = Vec::new();
        let mut start = 0;
        while start < batch.steps {
            let len = positions.min(batch.steps - start);
            let w = batch.window(start, len)?;
            parts.push(self.sakt_window(&w)?);
            start += len;
        }
        Ok(self.g.concat_cols(&parts)?)
    }

    /// `B x steps` matrix of probabilities.
    pub fn forward(&mut self, batch: &Batch) -> Result<Var> {
        match self.hp.architecture {
            Architecture::VanillaDkt | Architecture::LstmDkt | Architecture::LstmDktSPlus => self.rnn_forward(batch),
            Architecture::Dkvmn | Architecture::DkvmnPaper => self.dkvmn_forward(batch),
            Architecture::Sakt => self.sakt_forward(batch),
        }
    }
}
