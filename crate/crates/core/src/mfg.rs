//! Mean field equilibria as fixed points of `Φ: m -> law of the optimal
//! player against m`, the small-time contraction horizon and the
//! monotonicity check.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::flow::MeasureFlow;
use crate::forward::{solve_forward, ForwardInput};
use crate::hjb::{solve_hjb, FeedbackPolicy, ValueFunction};
use crate::model::{random_simplex, Family, Model};
use crate::simplex::Simplex;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Weight `δ` of the new iterate, `m_{k+1} = (1-δ) m_k + δ Φ(m_k)`.
    pub damping: f64,
    /// Stop once `sup_t |Φ(m_k) - m_k| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting flow; the constant flow at `m0` when absent.
    pub init: Option<MeasureFlow>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            damping: 1.0,
            tol: 1e-10,
            max_iter: 200,
            init: None,
        }
    }
}

/// One application of `Φ` together with the HJB solution it came from.
#[derive(Debug, Clone)]
pub struct BestResponseFlow {
    pub value: ValueFunction,
    pub policy: FeedbackPolicy,
    pub law: MeasureFlow,
}

pub fn apply_phi(model: &Model, m: &MeasureFlow) -> Result<BestResponseFlow> {
    let (value, policy) = solve_hjb(model, m)?;
    let law = solve_forward(
        model,
        ForwardInput {
            policy: &policy,
            measure_arg: m,
        },
    )?;
    Ok(BestResponseFlow { value, policy, law })
}

/// `sup_t |Φ(m)(t) - m(t)|` over the grid nodes.
pub fn fixed_point_residual(model: &Model, m: &MeasureFlow) -> Result<f64> {
    Ok(apply_phi(model, m)?.law.sup_distance(m))
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub m: MeasureFlow,
    pub value: ValueFunction,
    pub policy: FeedbackPolicy,
    /// Number of updates `m_k -> m_{k+1}` performed.
    pub iterations: usize,
    /// Fixed-point residual of the returned flow.
    pub residual: f64,
    /// Residual of every iterate, `residuals[k] = sup |Φ(m_k) - m_k|`.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl MfgSolution {
    /// Turns a non-converged run into [`MfgError::NotConverged`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(MfgError::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }

    /// Ratios `r_{k+1} / r_k` of consecutive residuals above `floor`.
    pub fn residual_ratios(&self, floor: f64) -> Vec<f64> {
        self.residuals
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Damped Picard iteration on `Φ`. A run that exhausts `max_iter` returns the
/// iterate with the smallest residual and `converged = false`.
pub fn solve_mfg(model: &Model, opts: &SolveOptions) -> Result<MfgSolution> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(MfgError::InvalidParameter(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(MfgError::InvalidParameter("tol must be positive".into()));
    }
    let mut m = match &opts.init {
        Some(init) => {
            if *init.grid() != model.grid || init.dim() != model.d() {
                return Err(MfgError::InvalidParameter(
                    "initial flow must live on the model grid".into(),
                ));
            }
            init.clone()
        }
        None => MeasureFlow::constant(model.grid, model.m0.clone()),
    };
    let mut residuals = Vec::new();
    let mut best: Option<(f64, MeasureFlow, BestResponseFlow, usize)> = None;
    for k in 0..=opts.max_iter {
        let phi = apply_phi(model, &m)?;
        let r = phi.law.sup_distance(&m);
        residuals.push(r);
        if r <= opts.tol {
            return Ok(MfgSolution {
                m,
                value: phi.value,
                policy: phi.policy,
                iterations: k,
                residual: r,
                residuals,
                converged: true,
            });
        }
        let next = m.mix(&phi.law, opts.damping);
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, m, phi, k));
        }
        m = next;
    }
    let (residual, m, phi, _) = best.expect("at least one iterate");
    Ok(MfgSolution {
        m,
        value: phi.value,
        policy: phi.policy,
        iterations: opts.max_iter,
        residual,
        residuals,
        converged: false,
    })
}

/// Constants entering the small-time uniqueness condition and its root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TStarReport {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    /// Value bound `T* max|c| + max|ψ|` at the root.
    pub m_v: f64,
    pub m_zeta: f64,
    pub k2: f64,
    pub k_a: f64,
    pub k_zeta: f64,
    pub t_star: f64,
    pub lhs_at_t_star: f64,
}

/// Horizon-independent inputs of the contraction condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionConstants {
    pub d: f64,
    pub max_rate: f64,
    pub theta: f64,
    pub k_a: f64,
    pub k_zeta: f64,
    pub k2: f64,
    pub m_zeta: f64,
    pub max_abs_running_cost: f64,
    pub max_abs_terminal_cost: f64,
}

impl ContractionConstants {
    pub fn from_model(model: &Model) -> Result<Self> {
        let Family::ControlledRate(f) = &model.spec.family else {
            return Err(MfgError::FamilyUnsupported("controlled_rate"));
        };
        let c = &model.constants;
        Ok(ContractionConstants {
            d: model.d() as f64,
            max_rate: f.max_rate,
            theta: f.theta,
            k_a: c.k_a,
            k_zeta: c.k_zeta,
            k2: c.k2,
            m_zeta: c.m_zeta,
            max_abs_running_cost: c.max_abs_running_cost,
            max_abs_terminal_cost: c.max_abs_terminal_cost,
        })
    }

    pub fn m_v(&self, t: f64) -> f64 {
        t * self.max_abs_running_cost + self.max_abs_terminal_cost
    }

    /// `(C1, …, C5)` for horizon `t`.
    pub fn coefficients(&self, t: f64) -> [f64; 5] {
        let ContractionConstants {
            d,
            max_rate: m,
            theta,
            k_a,
            k_zeta,
            k2,
            m_zeta,
            ..
        } = *self;
        let sd = d.sqrt();
        let mv = self.m_v(t);
        [
            2.0 * m * d * d + 2.0 * d * sd * m.powf(d),
            2.0 * d * sd * k_a / theta + 2.0 * d * d * k_zeta,
            2.0 * d * d / theta,
            k2 + 2.0 * d * mv * k_zeta + 2.0 * sd * mv * k_a / theta + k2 * k_a / theta,
            2.0 * mv * sd / theta + k2 / theta + sd * (m_zeta + m),
        ]
    }

    /// `2 t √d e^{t C1} [C2 + C3 (K2 + t C4) e^{t C5}]`.
    pub fn lhs(&self, t: f64) -> f64 {
        let [c1, c2, c3, c4, c5] = self.coefficients(t);
        2.0 * t * self.d.sqrt() * (t * c1).exp() * (c2 + c3 * (self.k2 + t * c4) * (t * c5).exp())
    }
}

/// Contraction-condition left-hand side at horizon `t` for the model's constants.
pub fn tstar_lhs(model: &Model, t: f64) -> Result<f64> {
    Ok(ContractionConstants::from_model(model)?.lhs(t))
}

/// Root of the increasing map `t -> lhs(t) - 1`, by bisection to machine precision.
pub fn compute_tstar(model: &Model) -> Result<TStarReport> {
    let cc = ContractionConstants::from_model(model)?;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while cc.lhs(hi).is_nan() || cc.lhs(hi) < 1.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(MfgError::InvalidParameter(
                "contraction condition holds for every horizon".into(),
            ));
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cc.lhs(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_star = if (cc.lhs(lo) - 1.0).abs() <= (cc.lhs(hi) - 1.0).abs() { lo } else { hi };
    let [c1, c2, c3, c4, c5] = cc.coefficients(t_star);
    Ok(TStarReport {
        c1,
        c2,
        c3,
        c4,
        c5,
        m_v: cc.m_v(t_star),
        m_zeta: cc.m_zeta,
        k2: cc.k2,
        k_a: cc.k_a,
        k_zeta: cc.k_zeta,
        t_star,
        lhs_at_t_star: cc.lhs(t_star),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `inf (c1(·,p) - c1(·,q))·(p - q) / |p - q|²` over distinct laws.
    pub min_c1_pairing: f64,
    /// Same for the terminal cost.
    pub min_psi_pairing: f64,
    /// Smallest normalized pairings seen on random pairs.
    pub sampled_min_c1: f64,
    pub sampled_min_psi: f64,
    pub samples: usize,
    pub pass: bool,
}

const STRICT_TOL: f64 = 1e-12;

/// Orthonormal basis of `{v : Σ v = 0}` (columns), Helmert construction.
fn tangent_basis(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d - 1, |i, j| {
        let j1 = (j + 1) as f64;
        let s = (j1 * (j1 + 1.0)).sqrt();
        if i <= j {
            1.0 / s
        } else if i == j + 1 {
            -j1 / s
        } else {
            0.0
        }
    })
}

/// Smallest value of `δᵀ C δ / |δ|²` over nonzero `δ` with `Σ δ = 0`.
pub fn min_tangent_pairing(table: &[Vec<f64>]) -> f64 {
    let d = table.len();
    let c = DMatrix::from_fn(d, d, |i, j| 0.5 * (table[i][j] + table[j][i]));
    let b = tangent_basis(d);
    let reduced = b.transpose() * c * &b;
    SymmetricEigen::new(reduced).eigenvalues.min()
}

fn pairing(table: &[Vec<f64>], p: &Simplex, q: &Simplex) -> f64 {
    let delta: Vec<f64> = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| a - b).collect();
    let norm2: f64 = delta.iter().map(|v| v * v).sum();
    let num: f64 = (0..table.len())
        .map(|x| delta[x] * crate::model::dot(&table[x], &delta))
        .sum();
    num / norm2
}

/// Checks strict monotonicity of the running cost and monotonicity of the
/// terminal cost, exactly from the tables and on `n_pairs` random pairs.
pub fn check_monotonicity(model: &Model, n_pairs: usize, seed: u64) -> Result<MonotonicityReport> {
    if !model.spec.rates_independent_of_measure() {
        return Err(MfgError::RateDependsOnMeasure);
    }
    let c1 = model.spec.c1();
    let psi = model.spec.psi();
    let min_c1 = min_tangent_pairing(c1);
    let min_psi = min_tangent_pairing(psi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s_c1 = f64::INFINITY;
    let mut s_psi = f64::INFINITY;
    let mut samples = 0;
    while samples < n_pairs {
        let p = random_simplex(model.d(), &mut rng);
        let q = random_simplex(model.d(), &mut rng);
        if crate::simplex::simplex_distance(&p, &q) < 1e-9 {
            continue;
        }
        s_c1 = s_c1.min(pairing(c1, &p, &q));
        s_psi = s_psi.min(pairing(psi, &p, &q));
        samples += 1;
    }
    Ok(MonotonicityReport {
        min_c1_pairing: min_c1,
        min_psi_pairing: min_psi,
        sampled_min_c1: s_c1,
        sampled_min_psi: s_psi,
        samples,
        pass: min_c1 > STRICT_TOL && min_psi >= -STRICT_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub starts: usize,
    pub all_converged: bool,
    pub iterations: Vec<usize>,
    /// Largest pairwise sup distance between the solution flows.
    pub max_flow_distance: f64,
    /// Largest pairwise sup distance between the value functions.
    pub max_value_distance: f64,
}

/// Random initial flow `m(t) = m0 + (q - m0)(1 - e^{-r t})`.
pub fn random_initial_flow<R: Rng>(model: &Model, rng: &mut R) -> MeasureFlow {
    let q = random_simplex(model.d(), rng);
    let r = rng.random_range(0.5..3.0);
    let values = model
        .grid
        .times()
        .map(|t| model.m0.mix(&q, 1.0 - (-r * t).exp()))
        .collect();
    MeasureFlow::new(model.grid, values).expect("flow on the model grid")
}

/// Solves from `n_starts` random initial flows and measures how far apart
/// the resulting equilibria are.
pub fn uniqueness_probe(model: &Model, opts: &SolveOptions, n_starts: usize, seed: u64) -> Result<UniquenessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inits: Vec<MeasureFlow> = (0..n_starts).map(|_| random_initial_flow(model, &mut rng)).collect();
    let solutions: Vec<MfgSolution> = inits
        .into_par_iter()
        .map(|init| {
            let o = SolveOptions {
                init: Some(init),
                ..opts.clone()
            };
            solve_mfg(model, &o)
        })
        .collect::<Result<_>>()?;
    let mut max_flow: f64 = 0.0;
    let mut max_value: f64 = 0.0;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            max_flow = max_flow.max(a.m.sup_distance(&b.m));
            max_value = max_value.max(a.value.sup_distance(&b.value));
        }
    }
    Ok(UniquenessReport {
        starts: n_starts,
        all_converged: solutions.iter().all(|s| s.converged),
        iterations: solutions.iter().map(|s| s.iterations).collect(),
        max_flow_distance: max_flow,
        max_value_distance: max_value,
    })
}
