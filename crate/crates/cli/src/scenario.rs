//! Scenario documents: a model plus the options of the run.

use std::path::Path;

use mfg_kinetic::model::{validate_model, Model, ModelSpec};
use mfg_kinetic::mfg::SolveOptions;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSpec,
    #[serde(default)]
    pub run: RunOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Picard damping `δ` in `(0, 1]`.
    pub damping: f64,
    /// Fixed-point tolerance; `model.numerics.tol` when absent.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Seed used when `--seed` is not given.
    pub seed: u64,
    /// Population sizes for `nash-gap` and `eval-cost`.
    pub n_list: Vec<usize>,
    /// Population sizes for `mc-converge`.
    pub mc_n_list: Vec<usize>,
    pub replications: usize,
    /// Explicit checkpoint times; `n_checkpoints` evenly spaced ones otherwise.
    pub checkpoints: Option<Vec<f64>>,
    pub n_checkpoints: usize,
    /// Random pairs sampled by `check-mono`.
    pub mono_pairs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            damping: 0.5,
            tol: None,
            max_iter: 500,
            seed: 42,
            n_list: vec![2, 4, 8, 16, 32, 64],
            mc_n_list: vec![16, 64, 256],
            replications: 200,
            checkpoints: None,
            n_checkpoints: 10,
            mono_pairs: 1000,
        }
    }
}

/// A scenario whose model passed validation.
pub struct Loaded {
    pub model: Model,
    pub run: RunOptions,
}

impl Loaded {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            damping: self.run.damping,
            tol: self.run.tol.unwrap_or(self.model.spec.numerics.tol),
            max_iter: self.run.max_iter,
            init: None,
        }
    }

    pub fn checkpoints(&self) -> Vec<f64> {
        match &self.run.checkpoints {
            Some(c) => c.clone(),
            None => mfg_kinetic::mc::uniform_checkpoints(self.model.horizon(), self.run.n_checkpoints),
        }
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let scenario: Scenario = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let model = validate_model(scenario.model).map_err(|e| CliError::Validation(e.to_string()))?;
    let run = scenario.run;
    let invalid = |msg: String| Err(CliError::Validation(msg));
    if !(run.damping > 0.0 && run.damping <= 1.0) {
        return invalid(format!("run.damping must lie in (0, 1], got {}", run.damping));
    }
    if let Some(tol) = run.tol {
        if tol.is_nan() || tol <= 0.0 {
            return invalid(format!("run.tol must be positive, got {tol}"));
        }
    }
    if run.n_list.iter().any(|&n| n < 2) || run.mc_n_list.contains(&0) {
        return invalid("run.n_list needs N >= 2 and run.mc_n_list N >= 1".into());
    }
    if run.replications == 0 {
        return invalid("run.replications must be positive".into());
    }
    if let Some(c) = &run.checkpoints {
        if c.is_empty() || c.windows(2).any(|w| w[0] >= w[1]) || c.iter().any(|t| !(*t >= 0.0 && *t <= model.horizon())) {
            return invalid("run.checkpoints must be increasing times in [0, T]".into());
        }
    } else if run.n_checkpoints == 0 {
        return invalid("run.n_checkpoints must be positive".into());
    }
    Ok(Loaded { model, run })
}
