//! Exact costs in the `N`-player game: the symmetric decentralized policy,
//! the best response of one deviating player, and the resulting Nash gap.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::flow::{fmt_f64, TimeGrid};
use crate::hamiltonian::{minimize_hamiltonian, pre_hamiltonian};
use crate::hjb::FeedbackPolicy;
use crate::model::{Action, Model};
use crate::nplayer::counts::JointStateIndex;
use crate::simplex::Simplex;
use crate::stats::log_log_slope;

const PARALLEL_THRESHOLD: usize = 4096;

/// Joint chain of the tagged player and the count vector of the others, all
/// others playing a fixed symmetric feedback policy.
struct JointChain<'a> {
    model: &'a Model,
    index: JointStateIndex,
    mu: Vec<Simplex>,
}

/// Jumps of the other players for one set of node actions, in CSR layout.
struct OthersGenerator {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    rates: Vec<f64>,
}

impl OthersGenerator {
    fn apply(&self, s: usize, v: &[f64]) -> f64 {
        let vs = v[s];
        (self.offsets[s]..self.offsets[s + 1])
            .map(|i| self.rates[i] * (v[self.targets[i]] - vs))
            .sum()
    }
}

impl<'a> JointChain<'a> {
    fn new(model: &'a Model, index: JointStateIndex) -> Self {
        let mu = (0..index.len()).map(|s| index.empirical(s)).collect();
        JointChain { model, index, mu }
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn others(&self, actions: &[Action]) -> OthersGenerator {
        let spec = &self.model.spec;
        let d = self.index.d();
        let mut offsets = Vec::with_capacity(self.len() + 1);
        let mut targets = Vec::new();
        let mut rates = Vec::new();
        offsets.push(0);
        for s in 0..self.len() {
            let (x1, r) = self.index.split(s);
            let n = self.index.count(r);
            let p = self.mu[s].as_slice();
            for z in 0..d {
                if n[z] == 0 {
                    continue;
                }
                for y in (0..d).filter(|&y| y != z) {
                    let rate = n[z] as f64 * spec.rate(z, y, &actions[z], p);
                    if rate != 0.0 {
                        let t = self.index.neighbor(r, z, y).expect("n_z > 0");
                        targets.push(self.index.joint(x1, t));
                        rates.push(rate);
                    }
                }
            }
            offsets.push(targets.len());
        }
        OthersGenerator {
            offsets,
            targets,
            rates,
        }
    }

    /// Values of `v` at `(y, n)` for every `y`, `n` taken from joint state `s`.
    fn slice_at(&self, s: usize, v: &[f64]) -> Vec<f64> {
        let (_, r) = self.index.split(s);
        (0..self.index.d()).map(|y| v[self.index.joint(y, r)]).collect()
    }

    fn terminal(&self) -> Vec<f64> {
        (0..self.len())
            .map(|s| {
                let (x1, _) = self.index.split(s);
                self.model.spec.terminal_cost(x1, self.mu[s].as_slice())
            })
            .collect()
    }

    fn map_states<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        if self.len() >= PARALLEL_THRESHOLD {
            (0..self.len()).into_par_iter().map(f).collect()
        } else {
            (0..self.len()).map(f).collect()
        }
    }

    /// Drift with the tagged player's action fixed per joint state.
    fn frozen_drift<'b, A>(&self, others: &OthersGenerator, own: A, v: &[f64]) -> Vec<f64>
    where
        A: Fn(usize) -> &'b Action + Sync + Send,
    {
        let spec = &self.model.spec;
        self.map_states(|s| {
            let (x1, _) = self.index.split(s);
            let g = self.slice_at(s, v);
            pre_hamiltonian(spec, x1, own(s), self.mu[s].as_slice(), &g) + others.apply(s, v)
        })
    }

    /// Drift with the tagged player minimizing.
    fn optimal_drift(&self, others: &OthersGenerator, v: &[f64]) -> Vec<f64> {
        let spec = &self.model.spec;
        self.map_states(|s| {
            let (x1, _) = self.index.split(s);
            let g = self.slice_at(s, v);
            minimize_hamiltonian(spec, x1, self.mu[s].as_slice(), &g).value + others.apply(s, v)
        })
    }

    fn minimizers(&self, v: &[f64]) -> Vec<Action> {
        let spec = &self.model.spec;
        let f = |s: usize| {
            let (x1, _) = self.index.split(s);
            let g = self.slice_at(s, v);
            minimize_hamiltonian(spec, x1, self.mu[s].as_slice(), &g).minimizer
        };
        if self.len() >= PARALLEL_THRESHOLD {
            (0..self.len()).into_par_iter().map(f).collect()
        } else {
            (0..self.len()).map(f).collect()
        }
    }

    fn expectation(&self, v: &[f64]) -> f64 {
        self.index
            .initial_law(&self.model.m0)
            .iter()
            .zip(v)
            .map(|(p, v)| p * v)
            .sum()
    }
}

/// One backward RK4 step for an autonomous drift `G` on `[t_k, t_{k+1}]`.
fn rk4_backward<G>(v: &[f64], h: f64, drift: G) -> Vec<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let shift = |k: &[f64], s: f64| -> Vec<f64> { v.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = drift(v);
    let k2 = drift(&shift(&k1, 0.5 * h));
    let k3 = drift(&shift(&k2, 0.5 * h));
    let k4 = drift(&shift(&k3, h));
    (0..v.len())
        .map(|i| v[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MfgError::NonFiniteValue("N-player evaluation"))
    }
}

fn check_policy(model: &Model, policy: &FeedbackPolicy) -> Result<()> {
    if policy.grid != model.grid {
        return Err(MfgError::InvalidParameter("policy must live on the model grid".into()));
    }
    Ok(())
}

/// Others' generators per interval, rebuilt only when the node actions change.
fn for_each_interval<F>(chain: &JointChain<'_>, policy: &FeedbackPolicy, mut f: F) -> Result<()>
where
    F: FnMut(usize, &OthersGenerator) -> Result<()>,
{
    let n = policy.grid.n_steps;
    let mut cached: Option<(usize, OthersGenerator)> = None;
    for k in (0..n).rev() {
        let rebuild = match &cached {
            Some((j, _)) => policy.actions[*j] != policy.actions[k],
            None => true,
        };
        if rebuild {
            cached = Some((k, chain.others(&policy.actions[k])));
        }
        f(k, &cached.as_ref().expect("generator built").1)?;
    }
    Ok(())
}

/// Expected cost of player 1 when all `N` players use `policy`.
pub fn cost_under_symmetric_feedback(model: &Model, policy: &FeedbackPolicy, n_players: usize) -> Result<f64> {
    check_policy(model, policy)?;
    let chain = JointChain::new(model, JointStateIndex::new(model.d(), n_players)?);
    let h = model.grid.dt();
    let mut v = chain.terminal();
    for_each_interval(&chain, policy, |k, others| {
        let acts = &policy.actions[k];
        v = rk4_backward(&v, h, |w| chain.frozen_drift(others, |s| &acts[chain.index.split(s).0], w));
        check_finite(&v)
    })?;
    Ok(chain.expectation(&v))
}

/// Feedback of the deviating player on the joint state, per grid node.
#[derive(Debug, Clone)]
pub struct DeviationPolicy {
    pub grid: TimeGrid,
    pub index: JointStateIndex,
    /// `actions[k][s]` for node `k` and joint state `s`.
    pub actions: Vec<Vec<Action>>,
}

#[derive(Debug, Clone)]
pub struct BestResponse {
    pub cost: f64,
    /// Optimal cost-to-go at time 0 on every joint state.
    pub value_at_zero: Vec<f64>,
    pub policy: Option<DeviationPolicy>,
}

fn solve_best_response(model: &Model, policy: &FeedbackPolicy, n_players: usize, record: bool) -> Result<BestResponse> {
    check_policy(model, policy)?;
    let chain = JointChain::new(model, JointStateIndex::new(model.d(), n_players)?);
    let n = model.grid.n_steps;
    let h = model.grid.dt();
    let mut v = chain.terminal();
    let mut recorded: Vec<Vec<Action>> = Vec::new();
    if record {
        recorded = vec![Vec::new(); n + 1];
                recorded[n] = chain.minimizers(&v);
    }
    for_each_interval(&chain, policy, |k, others| {
        let predicted = rk4_backward(&v, h, |w| chain.optimal_drift(others, w));
        check_finite(&predicted)?;
        let a_k = chain.minimizers(&predicted);
        v = rk4_backward(&v, h, |w| chain.frozen_drift(others, |s| &a_k[s], w));
        check_finite(&v)?;
        if record {
            recorded[k] = a_k;
        }
        Ok(())
    })?;
    let cost = chain.expectation(&v);
    let policy = record.then(|| DeviationPolicy {
        grid: model.grid,
        index: chain.index.clone(),
        actions: recorded,
    });
    Ok(BestResponse {
        cost,
        value_at_zero: v,
        policy,
    })
}

/// Optimal deviation of player 1 against `N - 1` players using `policy`.
pub fn best_response(model: &Model, policy: &FeedbackPolicy, n_players: usize) -> Result<BestResponse> {
    solve_best_response(model, policy, n_players, true)
}

/// Best-response cost without storing the deviation policy.
pub fn best_response_cost(model: &Model, policy: &FeedbackPolicy, n_players: usize) -> Result<f64> {
    Ok(solve_best_response(model, policy, n_players, false)?.cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashGapReport {
    pub n: usize,
    pub cost_symmetric: f64,
    pub cost_best_response: f64,
    /// `cost_symmetric - cost_best_response`, rounding noise in `[-1e-8, 0)` set to 0.
    pub epsilon: f64,
    pub epsilon_raw: f64,
    pub epsilon_sqrt_n: f64,
}

const GAP_NOISE: f64 = 1e-8;

pub fn nash_gap(model: &Model, policy: &FeedbackPolicy, n_players: usize) -> Result<NashGapReport> {
    let (sym, br) = rayon::join(
        || cost_under_symmetric_feedback(model, policy, n_players),
        || best_response_cost(model, policy, n_players),
    );
    let (sym, br) = (sym?, br?);
    let raw = sym - br;
    let epsilon = if raw >= -GAP_NOISE { raw.max(0.0) } else { raw };
    Ok(NashGapReport {
        n: n_players,
        cost_symmetric: sym,
        cost_best_response: br,
        epsilon,
        epsilon_raw: raw,
        epsilon_sqrt_n: epsilon * (n_players as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashGapTable {
    pub rows: Vec<NashGapReport>,
    /// Least-squares slope of `ln ε_N` against `ln N`; absent when some gap vanishes.
    pub slope: Option<f64>,
}

impl NashGapTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "cost_sym", "cost_br", "epsilon", "epsilon_sqrtN"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                fmt_f64(r.cost_symmetric),
                fmt_f64(r.cost_best_response),
                fmt_f64(r.epsilon),
                fmt_f64(r.epsilon_sqrt_n),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const VANISHING_GAP: f64 = 1e-14;

pub fn nash_gap_table(model: &Model, policy: &FeedbackPolicy, n_list: &[usize]) -> Result<NashGapTable> {
    let rows: Vec<NashGapReport> = n_list
        .par_iter()
        .map(|&n| nash_gap(model, policy, n))
        .collect::<Result<_>>()?;
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.epsilon > VANISHING_GAP) {
        let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
        log_log_slope(&x, &y)
    } else {
        None
    };
    Ok(NashGapTable { rows, slope })
}
