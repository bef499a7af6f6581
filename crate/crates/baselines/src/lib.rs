//! Non-neural baselines.
//!
//! Every predictor here produces one probability per attempt from the
//! second onwards, the same targets the neural models are scored on.

pub mod bkt;
mod error;
pub mod glr;
pub mod simple;

use std::fmt;
use std::str::FromStr;

use ktbench_core::{Dataset, StudentSequence};

pub use bkt::{BktConfig, BktModel, BktParams};
pub use error::{BaselineError, Result};
pub use glr::{FeatureLayout, GlrConfig, GlrModel};
pub use simple::{nap, napnm, MeanModel};

/// Window sizes of the Next-as-Previous-N-Mean variants that are reported.
pub const NAP_WINDOWS: [usize; 3] = [3, 5, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineKind {
    Mean,
    Nap,
    NapNm(usize),
    Bkt,
    Glr,
}

impl BaselineKind {
    /// Mean, NaP, NaP3M, NaP5M, NaP9M, BKT and GLR.
    pub fn all() -> Vec<BaselineKind> {
        let mut v = vec![BaselineKind::Mean, BaselineKind::Nap];
        v.extend(NAP_WINDOWS.iter().map(|&n| BaselineKind::NapNm(n)));
        v.extend([BaselineKind::Bkt, BaselineKind::Glr]);
        v
    }

    /// Name used in result tables.
    pub fn display_name(self) -> String {
        match self {
            BaselineKind::Mean => "Mean".into(),
            BaselineKind::Nap => "NaP".into(),
            BaselineKind::NapNm(n) => format!("NaP{n}M"),
            BaselineKind::Bkt => "BKT".into(),
            BaselineKind::Glr => "GLR".into(),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineKind::Mean => f.write_str("mean"),
            BaselineKind::Nap => f.write_str("nap"),
            BaselineKind::NapNm(n) => write!(f, "nap{n}m"),
            BaselineKind::Bkt => f.write_str("bkt"),
            BaselineKind::Glr => f.write_str("glr"),
        }
    }
}

impl FromStr for BaselineKind {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "mean" => Ok(BaselineKind::Mean),
            "nap" => Ok(BaselineKind::Nap),
            "bkt" => Ok(BaselineKind::Bkt),
            "glr" | "best-lr" => Ok(BaselineKind::Glr),
            other => other
                .strip_prefix("nap")
                .and_then(|r| r.strip_suffix('m'))
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(BaselineKind::NapNm)
                .ok_or_else(|| BaselineError::UnknownBaseline(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedBaseline {
    Mean(MeanModel),
    Nap,
    NapNm(usize),
    Bkt(BktModel),
    Glr(GlrModel),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineOptions {
    pub bkt: BktConfig,
    pub glr: GlrConfig,
}

impl FittedBaseline {
    pub fn fit(kind: BaselineKind, train: &Dataset, options: &BaselineOptions) -> Result<Self> {
        if train.attempt_count() == 0 {
            return Err(BaselineError::EmptyTraining);
        }
        Ok(match kind {
            BaselineKind::Mean => FittedBaseline::Mean(MeanModel::fit(train)?),
            BaselineKind::Nap => FittedBaseline::Nap,
            BaselineKind::NapNm(n) => FittedBaseline::NapNm(n),
            BaselineKind::Bkt => FittedBaseline::Bkt(BktModel::fit(train, &options.bkt)?),
            BaselineKind::Glr => FittedBaseline::Glr(GlrModel::fit(train, &options.glr)?),
        })
    }

    pub fn kind(&self) -> BaselineKind {
        match self {
            FittedBaseline::Mean(_) => BaselineKind::Mean,
            FittedBaseline::Nap => BaselineKind::Nap,
            FittedBaseline::NapNm(n) => BaselineKind::NapNm(*n),
            FittedBaseline::Bkt(_) => BaselineKind::Bkt,
            FittedBaseline::Glr(_) => BaselineKind::Glr,
        }
    }

    /// Probabilities for attempts 2..T of `seq`.
    pub fn predict(&self, seq: &StudentSequence) -> Vec<f64> {
        let skills: Vec<usize> = seq.skills().collect();
        let corrects: Vec<u8> = seq.corrects().collect();
        match self {
            FittedBaseline::Mean(m) => m.predict(&corrects),
            FittedBaseline::Nap => nap(&corrects),
            FittedBaseline::NapNm(n) => napnm(&corrects, *n),
            FittedBaseline::Bkt(m) => m.predict(&skills, &corrects),
            FittedBaseline::Glr(m) => m.predict(seq.student, &skills, &corrects),
        }
    }

    /// Labels and probabilities for every target in `data`, concatenated
    /// in sequence order.
    pub fn predict_dataset(&self, data: &Dataset) -> (Vec<u8>, Vec<f64>) {
        let mut labels = Vec::new();
        let mut probs = Vec::new();
        for seq in &data.sequences {
            labels.extend(seq.corrects().skip(1));
            probs.extend(self.predict(seq));
        }
        (labels, probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for k in BaselineKind::all() {
            assert_eq!(k.to_string().parse::<BaselineKind>().unwrap(), k);
        }
        assert_eq!("NaP5M".parse::<BaselineKind>().unwrap(), BaselineKind::NapNm(5));
        assert!("nap0m".parse::<BaselineKind>().is_err());
        assert!("lstm".parse::<BaselineKind>().is_err());
    }
}
