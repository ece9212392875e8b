//! Generator, pre-Hamiltonian and its minimizer.
//!
//! For the thinning dynamics the generator integral over the mark space
//! reduces to `Σ_{y≠x} λ(x,y,a,p) (g(y) - g(x))`, affine in the rates, so
//! the pre-Hamiltonian inherits strict convexity from the running cost.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::{random_simplex, Action, Family, Model, ModelSpec};
use crate::simplex::euclidean;

/// Minimizer of the pre-Hamiltonian and the minimal value.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianValue {
    pub minimizer: Action,
    pub value: f64,
}

/// `Σ_{y≠x} λ(x,y,a,p) (g(y) - g(x))`.
pub fn generator_apply(spec: &ModelSpec, x: usize, a: &Action, p: &[f64], g: &[f64]) -> f64 {
    (0..spec.d)
        .filter(|&y| y != x)
        .map(|y| spec.rate(x, y, a, p) * (g[y] - g[x]))
        .sum()
}

pub fn pre_hamiltonian(spec: &ModelSpec, x: usize, a: &Action, p: &[f64], g: &[f64]) -> f64 {
    generator_apply(spec, x, a, p, g) + spec.running_cost(x, a, p)
}

/// Unique minimizer of `a -> H(x, a, p, g)`.
///
/// Controlled rates use the closed form `a_y = clamp(-(g_y - g_x) / 2θ, 0, M)`
/// with `a_x = 0`; finite action sets are scanned, ties going to the lowest index.
pub fn minimize_hamiltonian(spec: &ModelSpec, x: usize, p: &[f64], g: &[f64]) -> HamiltonianValue {
    let minimizer = match &spec.family {
        Family::ControlledRate(f) => {
            let a = (0..spec.d)
                .map(|y| {
                    if y == x {
                        0.0
                    } else {
                        (-(g[y] - g[x]) / (2.0 * f.theta)).clamp(0.0, f.max_rate)
                    }
                })
                .collect();
            Action::Rates(a)
        }
        Family::FiniteAction(f) => {
            let mut best = 0;
            let mut best_val = f64::INFINITY;
            for i in 0..f.actions.len() {
                let v = pre_hamiltonian(spec, x, &Action::Index(i), p, g);
                if v < best_val {
                    best = i;
                    best_val = v;
                }
            }
            Action::Index(best)
        }
    };
    let value = pre_hamiltonian(spec, x, &minimizer, p, g);
    HamiltonianValue { minimizer, value }
}

/// Observed Lipschitz ratios of the minimizer in `p` and in `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerLipschitzReport {
    pub samples: usize,
    pub max_p_ratio: f64,
    pub p_bound: f64,
    pub max_g_ratio: f64,
    pub g_bound: f64,
    pub violations: usize,
}

/// Samples pairs `(p, q)` and `(g, h)` and compares the minimizer's variation
/// with `K_a/θ` and `1/θ`.
pub fn minimizer_lipschitz_probe(model: &Model, n_samples: usize, seed: u64) -> Result<MinimizerLipschitzReport> {
    const TOL: f64 = 1e-12;
    let spec = &model.spec;
    let theta = match &spec.family {
        Family::ControlledRate(f) => f.theta,
        Family::FiniteAction(_) => return Err(MfgError::FamilyUnsupported("controlled-rate")),
    };
    let p_bound = model.constants.k_a / theta;
    let g_bound = 1.0 / theta;
    let d = spec.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MinimizerLipschitzReport {
        samples: n_samples,
        max_p_ratio: 0.0,
        p_bound,
        max_g_ratio: 0.0,
        g_bound,
        violations: 0,
    };
    let scale = 4.0 * theta * match &spec.family {
        Family::ControlledRate(f) => f.max_rate.max(1.0),
        Family::FiniteAction(_) => unreachable!(),
    };
    for _ in 0..n_samples {
        let x = rng.random_range(0..d);
        let g: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
        let h: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
        let p = random_simplex(d, &mut rng);
        let q = random_simplex(d, &mut rng);

        let a_pg = minimize_hamiltonian(spec, x, p.as_slice(), &g).minimizer;
        let a_qg = minimize_hamiltonian(spec, x, q.as_slice(), &g).minimizer;
        let a_ph = minimize_hamiltonian(spec, x, p.as_slice(), &h).minimizer;

        let dp = euclidean(p.as_slice(), q.as_slice());
        let da_p = a_pg.distance(&a_qg);
        if da_p > p_bound * dp + TOL {
            report.violations += 1;
        }
        if dp > 0.0 {
            report.max_p_ratio = report.max_p_ratio.max(da_p / dp);
        }

        let dg = euclidean(&g, &h);
        let da_g = a_pg.distance(&a_ph);
        if da_g > g_bound * dg + TOL {
            report.violations += 1;
        }
        if dg > 0.0 {
            report.max_g_ratio = report.max_g_ratio.max(da_g / dg);
        }
    }
    Ok(report)
}
