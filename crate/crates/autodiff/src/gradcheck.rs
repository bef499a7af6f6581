//! Finite-difference verification of [`Graph::backward`].

use ktbench_core::KtRng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Relative error counted as a pass.
    pub tolerance: f64,
    /// Check at most this many coordinates per parameter, chosen at random.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            tolerance: 1e-4,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checks: Vec<CoordError>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.checks.iter().map(|c| c.relative).fold(0.0, f64::max)
    }

    /// Share of checked coordinates whose relative error is within tolerance.
    pub fn pass_fraction(&self) -> f64 {
        if self.checks.is_empty() {
            return 1.0;
        }
        let ok = self.checks.iter().filter(|c| c.relative <= self.tolerance).count();
        ok as f64 / self.checks.len() as f64
    }

    pub fn worst(&self) -> Option<&CoordError> {
        self.checks.iter().max_by(|a, b| a.relative.total_cmp(&b.relative))
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn evaluate<F>(f: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    g.value(loss).item()
}

/// Compares the analytic gradient of the scalar built by `f` with central
/// differences. `f` must be deterministic: any dropout inside it has to draw
/// from a generator it seeds itself.
pub fn check_gradients<F>(store: &ParamStore, f: F, config: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let grads = g.backward(loss, store)?;

    let mut rng = KtRng::new(config.seed);
    let mut probe = store.clone();
    let mut checks = Vec::new();
    let names: Vec<String> = store.names().cloned().collect();
    for name in names {
        let len = store.get(&name).map_or(0, |t| t.len());
        let mut coords: Vec<usize> = (0..len).collect();
        if let Some(max) = config.max_coords_per_param {
            if len > max {
                rng.shuffle(&mut coords);
                coords.truncate(max);
                coords.sort_unstable();
            }
        }
        let analytic = grads.get(&name).expect("backward covers every parameter");
        for idx in coords {
            let original = probe.get(&name).expect("present").data()[idx];
            probe.get_mut(&name).expect("present").data_mut()[idx] = original + config.step;
            let up = evaluate(&f, &probe)?;
            probe.get_mut(&name).expect("present").data_mut()[idx] = original - config.step;
            let down = evaluate(&f, &probe)?;
            probe.get_mut(&name).expect("present").data_mut()[idx] = original;
            let numeric = (up - down) / (2.0 * config.step);
            let a = analytic.data()[idx];
            checks.push(CoordError {
                param: name.clone(),
                index: idx,
                analytic: a,
                numeric,
                relative: relative_error(a, numeric),
            });
        }
    }
    Ok(GradCheckReport {
        checks,
        tolerance: config.tolerance,
    })
}
