//! Problem data for a finite-state mean field game and its validation.
//!
//! Two model families are supported:
//!
//! * **controlled rate**: the action is a vector of jump intensities
//!   `a ∈ [0, M]^d`, the rate from `x` to `y ≠ x` is `a_y + ζ(p)` with
//!   `ζ(p) = κ + w·p`, and the running cost is `θ|a|² + c1(x)·p`;
//! * **finite action**: a finite list of actions, each with its own rate
//!   table (optionally affine in the population law `p`) and a per-state
//!   cost, plus the same `c1(x)·p` interaction term.
//!
//! In both families the terminal cost is `ψ(x)·p`. Rows of the `c1` and `ψ`
//! tables are read against the population law, so a state-only constant is
//! expressed by a row with equal entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::flow::TimeGrid;
use crate::simplex::{euclidean, Simplex};

pub const SCHEMA_VERSION: u32 = 1;

/// A control value: jump intensities for the controlled-rate family, an
/// index into the action list for the finite-action family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Rates(Vec<f64>),
    Index(usize),
}

impl Action {
    pub fn rates(&self) -> &[f64] {
        match self {
            Action::Rates(a) => a,
            Action::Index(_) => panic!("finite action has no rate vector"),
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Action::Index(i) => *i,
            Action::Rates(_) => panic!("controlled-rate action has no index"),
        }
    }

    /// Distance between actions: Euclidean for rate vectors, discrete metric
    /// for indices.
    pub fn distance(&self, other: &Action) -> f64 {
        match (self, other) {
            (Action::Rates(a), Action::Rates(b)) => euclidean(a, b),
            (Action::Index(i), Action::Index(j)) => {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledRate {
    /// Upper bound `M` of each action component.
    pub max_rate: f64,
    pub zeta_const: f64,
    pub zeta_weights: Vec<f64>,
    pub theta: f64,
    pub c1: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

impl ControlledRate {
    pub fn zeta(&self, p: &[f64]) -> f64 {
        self.zeta_const + dot(&self.zeta_weights, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// `rates[x][y]`: base rate from `x` to `y`; the diagonal is ignored.
    pub rates: Vec<Vec<f64>>,
    /// `rate_slopes[x][y][z]`: coefficient of `p_z` in the rate `x -> y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_slopes: Option<Vec<Vec<Vec<f64>>>>,
    /// Action-dependent part of the running cost, one entry per state.
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteAction {
    /// Declared bound on all transition rates.
    pub max_rate: f64,
    pub actions: Vec<ActionTable>,
    pub c1: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    ControlledRate(ControlledRate),
    FiniteAction(FiniteAction),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Numerics {
    /// Number of uniform time intervals.
    pub n_steps: usize,
    /// Points per component of the probe grid over `[0, M]` (controlled rate).
    pub action_grid: usize,
    pub tol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            n_steps: 1000,
            action_grid: 21,
            tol: 1e-10,
        }
    }
}

/// Full problem data, as stored in a model JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub schema: u32,
    pub d: usize,
    pub horizon: f64,
    pub m0: Vec<f64>,
    pub family: Family,
    #[serde(default)]
    pub numerics: Numerics,
}

impl ModelSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    pub fn is_controlled_rate(&self) -> bool {
        matches!(self.family, Family::ControlledRate(_))
    }

    pub fn c1(&self) -> &[Vec<f64>] {
        match &self.family {
            Family::ControlledRate(f) => &f.c1,
            Family::FiniteAction(f) => &f.c1,
        }
    }

    pub fn psi(&self) -> &[Vec<f64>] {
        match &self.family {
            Family::ControlledRate(f) => &f.psi,
            Family::FiniteAction(f) => &f.psi,
        }
    }

    /// Transition rate `λ(x, y, a, p)` for `x ≠ y`.
    pub fn rate(&self, x: usize, y: usize, a: &Action, p: &[f64]) -> f64 {
        debug_assert_ne!(x, y);
        match &self.family {
            Family::ControlledRate(f) => a.rates()[y] + f.zeta(p),
            Family::FiniteAction(f) => {
                let t = &f.actions[a.index()];
                let base = t.rates[x][y];
                match &t.rate_slopes {
                    Some(s) => base + dot(&s[x][y], p),
                    None => base,
                }
            }
        }
    }

    /// Running cost `c(x, a, p)`.
    pub fn running_cost(&self, x: usize, a: &Action, p: &[f64]) -> f64 {
        match &self.family {
            Family::ControlledRate(f) => {
                let a = a.rates();
                f.theta * dot(a, a) + dot(&f.c1[x], p)
            }
            Family::FiniteAction(f) => f.actions[a.index()].cost[x] + dot(&f.c1[x], p),
        }
    }

    /// Action part of the running cost, `θ|a|²` or the tabulated action cost.
    pub fn action_cost(&self, x: usize, a: &Action) -> f64 {
        match &self.family {
            Family::ControlledRate(f) => {
                let a = a.rates();
                f.theta * dot(a, a)
            }
            Family::FiniteAction(f) => f.actions[a.index()].cost[x],
        }
    }

    /// Terminal cost `ψ(x, p)`.
    pub fn terminal_cost(&self, x: usize, p: &[f64]) -> f64 {
        dot(&self.psi()[x], p)
    }

    /// The zero action (controlled rate) or the first action (finite action).
    pub fn default_action(&self) -> Action {
        match &self.family {
            Family::ControlledRate(_) => Action::Rates(vec![0.0; self.d]),
            Family::FiniteAction(_) => Action::Index(0),
        }
    }

    /// True when no rate depends on the population law.
    pub fn rates_independent_of_measure(&self) -> bool {
        match &self.family {
            Family::ControlledRate(f) => f.zeta_weights.iter().all(|w| *w == 0.0),
            Family::FiniteAction(f) => f.actions.iter().all(|t| {
                t.rate_slopes
                    .as_ref()
                    .is_none_or(|s| s.iter().flatten().flatten().all(|v| *v == 0.0))
            }),
        }
    }

    /// True when neither rates nor costs depend on the population law.
    pub fn is_decoupled(&self) -> bool {
        let state_only = |table: &[Vec<f64>]| {
            table
                .iter()
                .all(|row| row.iter().all(|v| (v - row[0]).abs() == 0.0))
        };
        self.rates_independent_of_measure() && state_only(self.c1()) && state_only(self.psi())
    }

    /// Probe actions for state `x`: for the controlled-rate family the grid
    /// `{0, M/(n-1), …, M}` on every component `y ≠ x` (with `a_x = 0`), for
    /// the finite-action family the full action list.
    pub fn action_grid(&self, x: usize) -> Vec<Action> {
        match &self.family {
            Family::FiniteAction(f) => (0..f.actions.len()).map(Action::Index).collect(),
            Family::ControlledRate(f) => {
                let n = self.numerics.action_grid.max(2);
                let levels: Vec<f64> = (0..n)
                    .map(|i| f.max_rate * i as f64 / (n - 1) as f64)
                    .collect();
                let mut out = vec![vec![0.0; self.d]];
                for y in (0..self.d).filter(|&y| y != x) {
                    out = out
                        .into_iter()
                        .flat_map(|a| {
                            levels.iter().map(move |&l| {
                                let mut b = a.clone();
                                b[y] = l;
                                b
                            })
                        })
                        .collect();
                }
                out.into_iter().map(Action::Rates).collect()
            }
        }
    }

    fn check_dims(&self) -> Result<()> {
        let d = self.d;
        let square = |name: &str, t: &[Vec<f64>]| -> Result<()> {
            if t.len() != d || t.iter().any(|r| r.len() != d) {
                return Err(MfgError::InvalidParameter(format!("{name} must be {d}x{d}")));
            }
            if t.iter().flatten().any(|v| !v.is_finite()) {
                return Err(MfgError::InvalidParameter(format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        square("c1", self.c1())?;
        square("psi", self.psi())?;
        match &self.family {
            Family::ControlledRate(f) => {
                if f.zeta_weights.len() != d {
                    return Err(MfgError::InvalidParameter(format!(
                        "zeta_weights must have {d} entries"
                    )));
                }
            }
            Family::FiniteAction(f) => {
                if f.actions.is_empty() {
                    return Err(MfgError::InvalidParameter("action list is empty".into()));
                }
                for (i, t) in f.actions.iter().enumerate() {
                    square(&format!("actions[{i}].rates"), &t.rates)?;
                    if t.cost.len() != d || t.cost.iter().any(|v| !v.is_finite()) {
                        return Err(MfgError::InvalidParameter(format!(
                            "actions[{i}].cost must have {d} finite entries"
                        )));
                    }
                    if let Some(s) = &t.rate_slopes {
                        let ok = s.len() == d
                            && s.iter().all(|r| {
                                r.len() == d && r.iter().all(|c| c.len() == d && c.iter().all(|v| v.is_finite()))
                            });
                        if !ok {
                            return Err(MfgError::InvalidParameter(format!(
                                "actions[{i}].rate_slopes must be {d}x{d}x{d}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Constants derived from a validated model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Side of the thinning box `U = [0, R]^d`; every rate is at most `R`.
    pub rate_bound: f64,
    /// `ν(U) = d R`.
    pub nu_total: f64,
    /// `K1 = 2 ν(U) d`.
    pub k1: f64,
    /// Flow Lipschitz constant `K = 2 ν(U) √d`.
    pub flow_lipschitz: f64,
    /// Lipschitz constant of `ζ` (controlled rate), zero otherwise.
    pub k_zeta: f64,
    /// Lipschitz constant in `p` of `∇_a c`; zero for the built-in families.
    pub k_a: f64,
    /// Analytic cost Lipschitz constant `K2`.
    pub k2: f64,
    /// Largest ratio observed when sampling cost differences.
    pub k2_sampled: f64,
    /// `max ζ` over the simplex (controlled rate), zero otherwise.
    pub m_zeta: f64,
    /// `max |c|` over states, actions and laws.
    pub max_abs_running_cost: f64,
    /// `max |ψ|` over states and laws.
    pub max_abs_terminal_cost: f64,
}

/// A validated model together with its time grid and derived constants.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub m0: Simplex,
    pub grid: TimeGrid,
    pub constants: ModelConstants,
}

impl Model {
    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    /// A copy of the model on a different number of time steps.
    pub fn with_steps(&self, n_steps: usize) -> Result<Model> {
        let mut spec = self.spec.clone();
        spec.numerics.n_steps = n_steps;
        validate_model(spec)
    }

    /// A copy of the model with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Model> {
        let mut spec = self.spec.clone();
        spec.horizon = horizon;
        validate_model(spec)
    }
}

/// Checks the standing assumptions and fills in the derived constants.
pub fn validate_model(spec: ModelSpec) -> Result<Model> {
    if spec.schema != SCHEMA_VERSION {
        return Err(MfgError::Schema(format!(
            "unsupported schema {} (expected {SCHEMA_VERSION})",
            spec.schema
        )));
    }
    let d = spec.d;
    if d < 2 {
        return Err(MfgError::InvalidParameter(format!("need at least two states, got {d}")));
    }
    if !(spec.horizon.is_finite() && spec.horizon > 0.0) {
        return Err(MfgError::DegenerateHorizon(spec.horizon));
    }
    if spec.m0.len() != d {
        return Err(MfgError::NonSimplexInitial(format!(
            "m0 has {} entries, expected {d}",
            spec.m0.len()
        )));
    }
    let m0 = Simplex::new(spec.m0.clone()).map_err(|e| match e {
        MfgError::NonSimplex(msg) => MfgError::NonSimplexInitial(msg),
        other => other,
    })?;
    spec.check_dims()?;
    if !(spec.numerics.tol.is_finite() && spec.numerics.tol > 0.0) {
        return Err(MfgError::InvalidParameter("numerics.tol must be positive".into()));
    }
    let grid = TimeGrid::new(spec.horizon, spec.numerics.n_steps)?;

    let (rate_bound, k_zeta, m_zeta) = match &spec.family {
        Family::ControlledRate(f) => {
            if !(f.theta.is_finite() && f.theta > 0.0) {
                return Err(MfgError::InvalidParameter(format!(
                    "theta must be positive, got {}",
                    f.theta
                )));
            }
            if !(f.zeta_const.is_finite() && f.zeta_const > 0.0) {
                return Err(MfgError::InvalidParameter(format!(
                    "zeta_const must be positive, got {}",
                    f.zeta_const
                )));
            }
            if !(f.max_rate.is_finite() && f.max_rate >= 0.0) {
                return Err(MfgError::InvalidParameter("max_rate must be nonnegative".into()));
            }
            // ζ is affine, so its extremes over the simplex sit on vertices.
            let vertex = |z: usize| f.zeta_const + f.zeta_weights[z];
            let (zmin_at, zmin) = (0..d)
                .map(|z| (z, vertex(z)))
                .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
            if zmin <= 0.0 {
                return Err(MfgError::NegativeRate {
                    from: zmin_at,
                    to: zmin_at,
                    rate: zmin,
                });
            }
            let zmax = (0..d).map(vertex).fold(f64::NEG_INFINITY, f64::max);
            let kz = euclidean(&f.zeta_weights, &vec![0.0; d]);
            (f.max_rate + zmax, kz, zmax)
        }
        Family::FiniteAction(f) => {
            if !(f.max_rate.is_finite() && f.max_rate >= 0.0) {
                return Err(MfgError::InvalidParameter("max_rate must be nonnegative".into()));
            }
            for (i, _) in f.actions.iter().enumerate() {
                let a = Action::Index(i);
                for x in 0..d {
                    for y in (0..d).filter(|&y| y != x) {
                        for z in 0..d {
                            let r = spec.rate(x, y, &a, Simplex::vertex(d, z).as_slice());
                            if r < 0.0 {
                                return Err(MfgError::NegativeRate { from: x, to: y, rate: r });
                            }
                            if r > f.max_rate {
                                return Err(MfgError::RateExceedsBound {
                                    from: x,
                                    to: y,
                                    rate: r,
                                    bound: f.max_rate,
                                });
                            }
                        }
                    }
                }
            }
            (f.max_rate, 0.0, 0.0)
        }
    };

    let nu_total = d as f64 * rate_bound;
    let (c_lo, c_hi) = running_cost_range(&spec);
    let (psi_lo, psi_hi) = table_range(spec.psi());
    let max_abs_running_cost = c_lo.abs().max(c_hi.abs());
    let max_abs_terminal_cost = psi_lo.abs().max(psi_hi.abs());

    let row_norm = |t: &[Vec<f64>], x: usize| euclidean(&t[x], &vec![0.0; d]);
    let p_part = (0..d)
        .map(|x| row_norm(spec.c1(), x) + row_norm(spec.psi(), x))
        .fold(0.0, f64::max);
    let a_part = match &spec.family {
        Family::ControlledRate(f) => 2.0 * f.theta * f.max_rate * (d as f64).sqrt(),
        Family::FiniteAction(_) => 0.0,
    };
    let jump_part = (c_hi - c_lo) + (psi_hi - psi_lo);
    let k2 = a_part.max(p_part).max(jump_part);

    let constants = ModelConstants {
        rate_bound,
        nu_total,
        k1: 2.0 * nu_total * d as f64,
        flow_lipschitz: 2.0 * nu_total * (d as f64).sqrt(),
        k_zeta,
        k_a: 0.0,
        k2,
        k2_sampled: sample_k2(&spec, 2000),
        m_zeta,
        max_abs_running_cost,
        max_abs_terminal_cost,
    };
    Ok(Model {
        spec,
        m0,
        grid,
        constants,
    })
}

fn running_cost_range(spec: &ModelSpec) -> (f64, f64) {
    let d = spec.d;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in 0..d {
        let row = &spec.c1()[x];
        let rmin = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let rmax = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        match &spec.family {
            Family::ControlledRate(f) => {
                lo = lo.min(rmin);
                hi = hi.max(rmax + f.theta * d as f64 * f.max_rate * f.max_rate);
            }
            Family::FiniteAction(f) => {
                for t in &f.actions {
                    lo = lo.min(t.cost[x] + rmin);
                    hi = hi.max(t.cost[x] + rmax);
                }
            }
        }
    }
    (lo, hi)
}

fn table_range(t: &[Vec<f64>]) -> (f64, f64) {
    let lo = t.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest ratio `(|Δc| + |Δψ|) / (|x-y| + dist(a,b) + |p-q|)` over random pairs.
fn sample_k2(spec: &ModelSpec, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b32);
    let d = spec.d;
    let mut best: f64 = 0.0;
    for i in 0..n {
        let x = rng.random_range(0..d);
        let y = if i % 2 == 0 { x } else { rng.random_range(0..d) };
        let a = random_action(spec, &mut rng);
        let b = random_action(spec, &mut rng);
        let p = random_simplex(d, &mut rng);
        let q = random_simplex(d, &mut rng);
        let num = (spec.running_cost(x, &a, p.as_slice()) - spec.running_cost(y, &b, q.as_slice())).abs()
            + (spec.terminal_cost(x, p.as_slice()) - spec.terminal_cost(y, q.as_slice())).abs();
        let den = (x as f64 - y as f64).abs() + a.distance(&b) + euclidean(p.as_slice(), q.as_slice());
        if den > 1e-12 {
            best = best.max(num / den);
        }
    }
    best
}

/// Uniform random action from the admissible set.
pub fn random_action<R: Rng>(spec: &ModelSpec, rng: &mut R) -> Action {
    match &spec.family {
        Family::ControlledRate(f) => {
            Action::Rates((0..spec.d).map(|_| rng.random::<f64>() * f.max_rate).collect())
        }
        Family::FiniteAction(f) => Action::Index(rng.random_range(0..f.actions.len())),
    }
}

/// Uniformly distributed point of the simplex (normalized exponentials).
pub fn random_simplex<R: Rng>(d: usize, rng: &mut R) -> Simplex {
    let w: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(rand_distr::Exp1))
        .collect();
    let s: f64 = w.iter().sum();
    Simplex::renormalized(w.into_iter().map(|v| v / s).collect())
        .expect("positive weights")
        .0
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
