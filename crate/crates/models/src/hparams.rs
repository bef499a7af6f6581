use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "vanilla-dkt")]
    VanillaDkt,
    #[serde(rename = "lstm-dkt")]
    LstmDkt,
    #[serde(rename = "lstm-dkt-s+")]
    LstmDktSPlus,
    #[serde(rename = "dkvmn")]
    Dkvmn,
    #[serde(rename = "dkvmn-paper")]
    DkvmnPaper,
    #[serde(rename = "sakt")]
    Sakt,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::VanillaDkt,
        Architecture::LstmDkt,
        Architecture::LstmDktSPlus,
        Architecture::Dkvmn,
        Architecture::DkvmnPaper,
        Architecture::Sakt,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::VanillaDkt => "vanilla-dkt",
            Architecture::LstmDkt => "lstm-dkt",
            Architecture::LstmDktSPlus => "lstm-dkt-s+",
            Architecture::Dkvmn => "dkvmn",
            Architecture::DkvmnPaper => "dkvmn-paper",
            Architecture::Sakt => "sakt",
        }
    }

    /// Name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Architecture::VanillaDkt => "Vanilla-DKT",
            Architecture::LstmDkt => "LSTM-DKT",
            Architecture::LstmDktSPlus => "LSTM-DKT-S+",
            Architecture::Dkvmn => "DKVMN",
            Architecture::DkvmnPaper => "DKVMN-Paper",
            Architecture::Sakt => "SAKT",
        }
    }

    /// Whether the model consumes a key input for the next skill.
    pub fn uses_keys(self) -> bool {
        !matches!(self, Architecture::VanillaDkt | Architecture::LstmDkt)
    }

    pub fn is_recurrent_dkt(self) -> bool {
        matches!(
            self,
            Architecture::VanillaDkt | Architecture::LstmDkt | Architecture::LstmDktSPlus
        )
    }

    pub fn is_dkvmn(self) -> bool {
        matches!(self, Architecture::Dkvmn | Architecture::DkvmnPaper)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.tag() == s.to_ascii_lowercase())
            .ok_or_else(|| ModelError::UnknownTag {
                kind: "model",
                value: s.to_string(),
                expected: Architecture::ALL.map(|a| a.tag()).join(", "),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputVariant {
    OneHot,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputVariant {
    OutputPerSkill,
    SkillsToScalar,
}

impl InputVariant {
    pub fn tag(self) -> &'static str {
        match self {
            InputVariant::OneHot => "one-hot",
            InputVariant::Embedding => "embedding",
        }
    }
}

impl OutputVariant {
    pub fn tag(self) -> &'static str {
        match self {
            OutputVariant::OutputPerSkill => "output-per-skill",
            OutputVariant::SkillsToScalar => "skills-to-scalar",
        }
    }
}

/// Switches for alternative formulations of individual layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ModelFlags {
    /// LSTM with a tanh output gate and a sigmoid memory candidate.
    pub paper_literal_lstm: bool,
    /// DKVMN write adds `w_t(i) * a_t` instead of the unweighted `a_t`.
    pub weighted_add: bool,
    /// SAKT uses one matrix for both the attention keys and values.
    pub shared_kv_projection: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct HyperParams {
    pub architecture: Architecture,
    /// Hidden size (RNN/LSTM), memory slot count M (DKVMN) or attention
    /// size A (SAKT).
    pub recurrent_size: usize,
    pub key_embed_size: usize,
    pub value_embed_size: usize,
    pub summary_size: usize,
    pub input: InputVariant,
    pub output: OutputVariant,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub attention_heads: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub flags: ModelFlags,
}

impl HyperParams {
    /// A point in the middle of the search grid.
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            recurrent_size: 50,
            key_embed_size: 20,
            value_embed_size: 20,
            summary_size: 50,
            input: InputVariant::OneHot,
            output: OutputVariant::OutputPerSkill,
            learning_rate: 0.01,
            dropout_rate: 0.2,
            attention_heads: 1,
            batch_size: 32,
            seed: 13,
            flags: ModelFlags::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.recurrent_size == 0 {
            return bad("recurrent size must be positive".into());
        }
        if self.input == InputVariant::Embedding {
            if self.value_embed_size == 0 {
                return bad("value embedding size must be positive".into());
            }
            if self.architecture.uses_keys() && self.key_embed_size == 0 {
                return bad("key embedding size must be positive".into());
            }
        }
        if self.output == OutputVariant::SkillsToScalar && self.summary_size == 0 {
            return bad("summary size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.architecture == Architecture::Sakt
            && (self.attention_heads == 0 || !self.recurrent_size.is_multiple_of(self.attention_heads))
        {
            return bad(format!(
                "attention size {} is not divisible by {} heads",
                self.recurrent_size, self.attention_heads
            ));
        }
        if self.flags.weighted_add && !self.architecture.is_dkvmn() {
            return bad("weighted-add applies to DKVMN only".into());
        }
        if self.flags.paper_literal_lstm
            && !matches!(self.architecture, Architecture::LstmDkt | Architecture::LstmDktSPlus)
        {
            return bad("paper-literal-lstm applies to LSTM models only".into());
        }
        if self.flags.shared_kv_projection && self.architecture != Architecture::Sakt {
            return bad("shared-kv-projection applies to SAKT only".into());
        }
        Ok(())
    }

    /// Width of the key vector for `skills` skills.
    pub fn key_width(&self, skills: usize) -> usize {
        match self.input {
            InputVariant::OneHot => skills,
            InputVariant::Embedding => self.key_embed_size,
        }
    }

    /// Width of the value vector for `skills` skills.
    pub fn value_width(&self, skills: usize) -> usize {
        match self.input {
            InputVariant::OneHot => 2 * skills,
            InputVariant::Embedding => self.value_embed_size,
        }
    }

    /// Canonical identifier listing only the fields that affect the model.
    /// Used as a stable sort key and for grouping results.
    pub fn key(&self) -> String {
        let mut parts = vec![format!("{}", self.architecture), format!("size={}", self.recurrent_size)];
        parts.push(format!("input={}", self.input.tag()));
        if self.input == InputVariant::Embedding {
            if self.architecture.uses_keys() {
                parts.push(format!("key={}", self.key_embed_size));
            }
            parts.push(format!("value={}", self.value_embed_size));
        }
        parts.push(format!("output={}", self.output.tag()));
        if self.output == OutputVariant::SkillsToScalar {
            parts.push(format!("summary={}", self.summary_size));
        }
        parts.push(format!("lr={}", self.learning_rate));
        parts.push(format!("dropout={}", self.dropout_rate));
        if self.architecture == Architecture::Sakt {
            parts.push(format!("heads={}", self.attention_heads));
        }
        parts.push(format!("batch={}", self.batch_size));
        parts.push(format!("seed={}", self.seed));
        if self.flags.paper_literal_lstm {
            parts.push("paper-literal-lstm".into());
        }
        if self.flags.weighted_add {
            parts.push("weighted-add".into());
        }
        if self.flags.shared_kv_projection {
            parts.push("shared-kv-projection".into());
        }
        parts.join(";")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.tag().parse::<Architecture>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.tag()));
        }
        assert!("lstm".parse::<Architecture>().is_err());
    }

    #[test]
    fn key_skips_ignored_fields() {
        let mut a = HyperParams::new(Architecture::LstmDkt);
        let mut b = a;
        b.key_embed_size = 99;
        b.summary_size = 7;
        b.attention_heads = 3;
        assert_eq!(a.key(), b.key());
        a.input = InputVariant::Embedding;
        b.input = InputVariant::Embedding;
        assert_eq!(a.key(), b.key());
        b.value_embed_size = 5;
        assert_ne!(a.key(), b.key());
    }

    #[test]
    fn validation() {
        let mut hp = HyperParams::new(Architecture::Sakt);
        hp.attention_heads = 3;
        assert!(hp.validate().is_err());
        hp.attention_heads = 5;
        hp.validate().unwrap();
        let mut hp = HyperParams::new(Architecture::VanillaDkt);
        hp.flags.weighted_add = true;
        assert!(hp.validate().is_err());
    }
}
