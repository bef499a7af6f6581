use std::fmt;
use std::str::FromStr;

use ktbench_baselines::BaselineKind;
use ktbench_models::Architecture;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::HarnessError;

/// Any model the benchmark can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Baseline(BaselineKind),
    Deep(Architecture),
}

impl ModelKind {
    pub fn all() -> Vec<ModelKind> {
        BaselineKind::all()
            .into_iter()
            .map(ModelKind::Baseline)
            .chain(Architecture::ALL.into_iter().map(ModelKind::Deep))
            .collect()
    }

    pub fn tag(self) -> String {
        match self {
            ModelKind::Baseline(b) => b.to_string(),
            ModelKind::Deep(a) => a.tag().to_string(),
        }
    }

    pub fn display_name(self) -> String {
        match self {
            ModelKind::Baseline(b) => b.display_name(),
            ModelKind::Deep(a) => a.display_name().to_string(),
        }
    }

    pub fn is_deep(self) -> bool {
        matches!(self, ModelKind::Deep(_))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        ModelKind::all().into_iter().find(|k| k.tag() == lower).ok_or_else(|| {
            let valid: Vec<String> = ModelKind::all().into_iter().map(ModelKind::tag).collect();
            HarnessError::Config(format!("unknown model tag {s:?}; valid: {}", valid.join(", ")))
        })
    }
}

impl Serialize for ModelKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.tag())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
