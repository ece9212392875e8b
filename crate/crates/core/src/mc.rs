//! Event-driven simulation of the `N`-player system from Poisson marks, coupled
//! with independent copies of the mean field player driven by the same marks.
//!
//! Each player owns a Poisson stream of total rate `d R` (`R` the thinning
//! bound) with marks `(y, u)`, `y` uniform on the states and `u` uniform on
//! `[0, R)`. A player in state `x` jumps to `y ≠ x` when `u` falls below the
//! current rate `λ(x, y, γ(t, x), p)`. The `N`-player process `X` reads `p`
//! from the empirical law just before the event, the mean field copy `Y`
//! reads it from the deterministic flow `m`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::flow::{fmt_f64, MeasureFlow};
use crate::hjb::FeedbackPolicy;
use crate::model::Model;
use crate::simplex::{euclidean, Simplex};
use crate::stats::{log_log_slope, MomentAccumulator};

const RATE_SLACK: f64 = 1e-12;

/// Random stream of player `player` in replication `rep`.
pub fn player_rng(seed: u64, rep: u64, player: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((rep << 32) | player);
    rng
}

fn sample_state<R: Rng>(p: &Simplex, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (x, w) in p.as_slice().iter().enumerate() {
        acc += w;
        if u < acc {
            return x;
        }
    }
    // Rounding left `u` above the cumulative sum: take the last charged state.
    p.as_slice().iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonEvent {
    pub time: f64,
    pub player: usize,
    pub target: usize,
    pub height: f64,
}

/// One processed mark and its effect on both processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    #[serde(flatten)]
    pub event: PoissonEvent,
    pub x_before: usize,
    pub x_after: usize,
    pub y_before: usize,
    pub y_after: usize,
}

struct PlayerStream {
    rng: ChaCha8Rng,
    rate: f64,
    d: usize,
    bound: f64,
}

impl PlayerStream {
    fn next_after(&mut self, t: f64, player: usize) -> Option<PoissonEvent> {
        if self.rate <= 0.0 {
            return None;
        }
        let gap: f64 = self.rng.sample::<f64, _>(Exp1) / self.rate;
        let target = self.rng.random_range(0..self.d);
        let height = self.rng.random::<f64>() * self.bound;
        Some(PoissonEvent {
            time: t + gap,
            player,
            target,
            height,
        })
    }
}

struct Queued(PoissonEvent);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Reversed so that the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then_with(|| other.0.player.cmp(&self.0.player))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Player `i` draws from stream `stream_permutation[i]` instead of `i`.
    pub stream_permutation: Option<Vec<usize>>,
    /// Keep the event log of replication 0.
    pub record_events: bool,
}

/// Per-replication outcome at one checkpoint.
#[derive(Debug, Clone, Copy, Default)]
struct CheckpointSample {
    mu_err: f64,
    /// `Σ_i |X_i - Y_i|` (states as labels).
    x_dist: u64,
    mismatches: u64,
}

struct Replication {
    checkpoints: Vec<CheckpointSample>,
    x_counts: Vec<Vec<u64>>,
    y_counts: Vec<Vec<u64>>,
    events: u64,
    /// `Σ_i` (running + terminal cost of player `i`).
    total_cost: f64,
    log: Vec<EventRecord>,
}

struct Simulator<'a> {
    model: &'a Model,
    policy: &'a FeedbackPolicy,
    m: Option<&'a MeasureFlow>,
    n_players: usize,
    seed: u64,
    checkpoints: &'a [f64],
    /// `∫_0^{t_k} action_cost(x, γ(s, x)) ds` per node and state.
    action_cost_prefix: Vec<Vec<f64>>,
}

impl<'a> Simulator<'a> {
    fn new(
        model: &'a Model,
        policy: &'a FeedbackPolicy,
        m: Option<&'a MeasureFlow>,
        n_players: usize,
        seed: u64,
        checkpoints: &'a [f64],
    ) -> Self {
        let d = model.d();
        let grid = model.grid;
        let mut prefix = vec![vec![0.0; d]; grid.len()];
        for k in 0..grid.n_steps {
            let (head, tail) = prefix.split_at_mut(k + 1);
            for (x, acc) in tail[0].iter_mut().enumerate() {
                *acc = head[k][x] + grid.dt() * model.spec.action_cost(x, &policy.actions[k][x]);
            }
        }
        Simulator {
            model,
            policy,
            m,
            n_players,
            seed,
            checkpoints,
            action_cost_prefix: prefix,
        }
    }

    fn action_cost_integral(&self, x: usize, t: f64) -> f64 {
        let grid = self.model.grid;
        let k = grid.interval(t);
        let rate = self.model.spec.action_cost(x, &self.policy.actions[k][x]);
        self.action_cost_prefix[k][x] + (t - grid.time(k)) * rate
    }

    fn accept(&self, x: usize, y: usize, t: f64, p: &[f64], u: f64) -> Result<bool> {
        if y == x {
            return Ok(false);
        }
        let a = self.policy.at(t, x);
        let rate = self.model.spec.rate(x, y, a, p);
        let bound = self.model.constants.rate_bound;
        if rate > bound + RATE_SLACK {
            return Err(MfgError::RateExceedsBound {
                from: x,
                to: y,
                rate,
                bound,
            });
        }
        Ok(u < rate)
    }

    fn run(&self, rep: u64, opts: &SimOptions) -> Result<Replication> {
        let spec = &self.model.spec;
        let d = spec.d;
        let n = self.n_players;
        let horizon = self.model.horizon();
        let bound = self.model.constants.rate_bound;
        let inv_n = 1.0 / n as f64;

        let mut streams: Vec<PlayerStream> = (0..n)
            .map(|i| {
                let stream = opts.stream_permutation.as_ref().map_or(i, |p| p[i]);
                PlayerStream {
                    rng: player_rng(self.seed, rep, stream as u64),
                    rate: d as f64 * bound,
                    d,
                    bound,
                }
            })
            .collect();
        let mut x: Vec<usize> = streams.iter_mut().map(|s| sample_state(&self.model.m0, &mut s.rng)).collect();
        let mut y = x.clone();
        let mut counts = vec![0u64; d];
        for &s in &x {
            counts[s] += 1;
        }
        let mut mu: Vec<f64> = counts.iter().map(|&c| c as f64 * inv_n).collect();
        let mut queue = BinaryHeap::new();
        for (i, s) in streams.iter_mut().enumerate() {
            if let Some(e) = s.next_after(0.0, i) {
                queue.push(Queued(e));
            }
        }

        let mut out = Replication {
            checkpoints: Vec::with_capacity(self.checkpoints.len()),
            x_counts: Vec::with_capacity(self.checkpoints.len()),
            y_counts: Vec::with_capacity(self.checkpoints.len()),
            events: 0,
            total_cost: 0.0,
            log: Vec::new(),
        };
        let mut next_checkpoint = 0;
        let mut last_t = 0.0;
        let mut interaction_cost = 0.0;
        // `Σ_i ∫ action_cost` is accumulated as Σ over sojourns of prefix differences.
        let mut action_cost = 0.0;
        let c1 = spec.c1();
        let interaction_rate = |counts: &[u64], mu: &[f64]| -> f64 {
            (0..d)
                .filter(|&z| counts[z] > 0)
                .map(|z| counts[z] as f64 * crate::model::dot(&c1[z], mu))
                .sum()
        };
        let mut sojourn_start: Vec<f64> = vec![0.0; n];

        let record = |out: &mut Replication, t: f64, x: &[usize], y: &[usize], mu: &[f64]| -> Result<()> {
            let mut xc = vec![0u64; d];
            let mut yc = vec![0u64; d];
            let mut dist = 0u64;
            let mut mism = 0u64;
            for (a, b) in x.iter().zip(y) {
                xc[*a] += 1;
                yc[*b] += 1;
                dist += a.abs_diff(*b) as u64;
                mism += u64::from(a != b);
            }
            let mu_err = match self.m {
                Some(m) => euclidean(mu, m.at(t)?.as_slice()),
                None => 0.0,
            };
            out.checkpoints.push(CheckpointSample {
                mu_err,
                x_dist: dist,
                mismatches: mism,
            });
            out.x_counts.push(xc);
            out.y_counts.push(yc);
            Ok(())
        };

        while let Some(Queued(e)) = queue.pop() {
            if e.time > horizon {
                break;
            }
            while next_checkpoint < self.checkpoints.len() && self.checkpoints[next_checkpoint] < e.time {
                record(&mut out, self.checkpoints[next_checkpoint], &x, &y, &mu)?;
                next_checkpoint += 1;
            }
            out.events += 1;
            let i = e.player;
            let t = e.time;
            let (xb, yb) = (x[i], y[i]);
            if self.accept(xb, e.target, t, &mu, e.height)? {
                interaction_cost += interaction_rate(&counts, &mu) * (t - last_t);
                last_t = t;
                action_cost += self.action_cost_integral(xb, t) - self.action_cost_integral(xb, sojourn_start[i]);
                sojourn_start[i] = t;
                counts[xb] -= 1;
                counts[e.target] += 1;
                mu[xb] = counts[xb] as f64 * inv_n;
                mu[e.target] = counts[e.target] as f64 * inv_n;
                x[i] = e.target;
            }
            if let Some(m) = self.m {
                let p = m.at(t)?;
                if self.accept(yb, e.target, t, p.as_slice(), e.height)? {
                    y[i] = e.target;
                }
            }
            if opts.record_events && rep == 0 {
                out.log.push(EventRecord {
                    event: e,
                    x_before: xb,
                    x_after: x[i],
                    y_before: yb,
                    y_after: y[i],
                });
            }
            if let Some(next) = streams[i].next_after(t, i) {
                queue.push(Queued(next));
            }
        }
        while next_checkpoint < self.checkpoints.len() {
            record(&mut out, self.checkpoints[next_checkpoint], &x, &y, &mu)?;
            next_checkpoint += 1;
        }
        interaction_cost += interaction_rate(&counts, &mu) * (horizon - last_t);
        for (i, &s) in x.iter().enumerate() {
            action_cost += self.action_cost_integral(s, horizon) - self.action_cost_integral(s, sojourn_start[i]);
        }
        let terminal: f64 = (0..d)
            .filter(|&z| counts[z] > 0)
            .map(|z| counts[z] as f64 * spec.terminal_cost(z, &mu))
            .sum();
        out.total_cost = interaction_cost + action_cost + terminal;
        Ok(out)
    }

    fn run_all(&self, replications: usize, opts: &SimOptions) -> Result<Vec<Replication>> {
        (0..replications as u64)
            .into_par_iter()
            .map(|rep| self.run(rep, opts))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub t: f64,
    pub mean_mu_err: f64,
    pub ci_mu_err: f64,
    /// `E|X_i - Y_i|` with states read as labels `1..d`.
    pub mean_x_err: f64,
    pub ci_x_err: f64,
    pub mismatch_prob: f64,
    pub ci_mismatch: f64,
    /// Fraction of `X` players in each state, averaged over replications.
    pub x_occupancy: Vec<f64>,
    pub y_occupancy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPathStats {
    pub n_players: usize,
    pub replications: usize,
    pub seed: u64,
    pub checkpoints: Vec<CheckpointStats>,
    /// Marks drawn per player and unit time (accepted or not).
    pub mean_events_per_player_time: f64,
    pub ci_events: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub events: Vec<EventRecord>,
}

impl CoupledPathStats {
    /// `max_t E|μ^N(t) - m(t)|` over the checkpoints.
    pub fn max_mu_err(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.mean_mu_err).fold(0.0, f64::max)
    }

    pub fn max_x_err(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.mean_x_err).fold(0.0, f64::max)
    }

    /// Total number of `X ≠ Y` player-checkpoint pairs observed.
    pub fn total_mismatches(&self) -> f64 {
        self.checkpoints
            .iter()
            .map(|c| c.mismatch_prob * (self.n_players * self.replications) as f64)
            .sum()
    }

    pub fn write_event_log<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub const STATS_CSV_HEADER: [&str; 8] = [
    "t",
    "N",
    "reps",
    "mean_mu_err",
    "ci_mu_err",
    "mean_x_err",
    "ci_x_err",
    "mismatch_prob",
];

/// Checkpoint statistics of several runs, one row per `(N, t)`.
pub fn write_stats_csv<W: Write>(runs: &[CoupledPathStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_CSV_HEADER)?;
    for run in runs {
        for c in &run.checkpoints {
            w.write_record([
                fmt_f64(c.t),
                run.n_players.to_string(),
                run.replications.to_string(),
                fmt_f64(c.mean_mu_err),
                fmt_f64(c.ci_mu_err),
                fmt_f64(c.mean_x_err),
                fmt_f64(c.ci_x_err),
                fmt_f64(c.mismatch_prob),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn check_inputs(model: &Model, policy: &FeedbackPolicy, n_players: usize, replications: usize) -> Result<()> {
    if policy.grid != model.grid {
        return Err(MfgError::InvalidParameter("policy must live on the model grid".into()));
    }
    if n_players == 0 || replications == 0 {
        return Err(MfgError::InvalidParameter(
            "need at least one player and one replication".into(),
        ));
    }
    if n_players as u64 >= 1 << 32 || replications as u64 >= 1 << 31 {
        return Err(MfgError::InvalidParameter("too many players or replications".into()));
    }
    Ok(())
}

/// Simulates `replications` independent copies of the coupled system and
/// aggregates the coupling errors at the given checkpoint times.
pub fn simulate_coupled(
    model: &Model,
    policy: &FeedbackPolicy,
    m: &MeasureFlow,
    n_players: usize,
    replications: usize,
    seed: u64,
    checkpoints: &[f64],
) -> Result<CoupledPathStats> {
    simulate_coupled_with(model, policy, m, n_players, replications, seed, checkpoints, &SimOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled_with(
    model: &Model,
    policy: &FeedbackPolicy,
    m: &MeasureFlow,
    n_players: usize,
    replications: usize,
    seed: u64,
    checkpoints: &[f64],
    opts: &SimOptions,
) -> Result<CoupledPathStats> {
    check_inputs(model, policy, n_players, replications)?;
    if *m.grid() != model.grid {
        return Err(MfgError::InvalidParameter("measure flow must live on the model grid".into()));
    }
    let horizon = model.horizon();
    if let Some(&t) = checkpoints.iter().find(|t| !(**t >= 0.0 && **t <= horizon)) {
        return Err(MfgError::OutOfRange { t, horizon });
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MfgError::InvalidParameter("checkpoints must be strictly increasing".into()));
    }
    if let Some(p) = &opts.stream_permutation {
        let mut sorted = p.clone();
        sorted.sort_unstable();
        if sorted != (0..n_players).collect::<Vec<_>>() {
            return Err(MfgError::InvalidParameter("stream_permutation must permute the players".into()));
        }
    }
    let sim = Simulator::new(model, policy, Some(m), n_players, seed, checkpoints);
    let reps = sim.run_all(replications, opts)?;
    let d = model.d();
    let nf = n_players as f64;
    let stats = checkpoints
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let mu: MomentAccumulator = reps.iter().map(|r| r.checkpoints[c].mu_err).collect();
            let xe: MomentAccumulator = reps.iter().map(|r| r.checkpoints[c].x_dist as f64 / nf).collect();
            let mm: MomentAccumulator = reps.iter().map(|r| r.checkpoints[c].mismatches as f64 / nf).collect();
            let occupancy = |pick: &dyn Fn(&Replication) -> &Vec<u64>| -> Vec<f64> {
                (0..d)
                    .map(|z| {
                        let total: u64 = reps.iter().map(|r| pick(r)[z]).sum();
                        total as f64 / (nf * replications as f64)
                    })
                    .collect()
            };
            CheckpointStats {
                t,
                mean_mu_err: mu.mean,
                ci_mu_err: mu.ci_half_width(),
                mean_x_err: xe.mean,
                ci_x_err: xe.ci_half_width(),
                mismatch_prob: mm.mean,
                ci_mismatch: mm.ci_half_width(),
                x_occupancy: occupancy(&|r| &r.x_counts[c]),
                y_occupancy: occupancy(&|r| &r.y_counts[c]),
            }
        })
        .collect();
    let ev: MomentAccumulator = reps.iter().map(|r| r.events as f64 / (nf * horizon)).collect();
    let events = reps.into_iter().next().map(|r| r.log).unwrap_or_default();
    Ok(CoupledPathStats {
        n_players,
        replications,
        seed,
        checkpoints: stats,
        mean_events_per_player_time: ev.mean,
        ci_events: ev.ci_half_width(),
        events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_half_width: f64,
    pub replications: usize,
}

/// Monte Carlo estimate of a player's expected cost when all `N` players use
/// `policy`. Each replication contributes the average cost over its players.
pub fn mc_cost_estimate(
    model: &Model,
    policy: &FeedbackPolicy,
    n_players: usize,
    replications: usize,
    seed: u64,
) -> Result<CostEstimate> {
    check_inputs(model, policy, n_players, replications)?;
    let sim = Simulator::new(model, policy, None, n_players, seed, &[]);
    let reps = sim.run_all(replications, &SimOptions::default())?;
    let acc: MomentAccumulator = reps.iter().map(|r| r.total_cost / n_players as f64).collect();
    Ok(CostEstimate {
        mean: acc.mean,
        std_error: acc.std_error(),
        ci_half_width: acc.ci_half_width(),
        replications,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateFit {
    pub n_values: Vec<usize>,
    pub max_mu_err: Vec<f64>,
    pub max_x_err: Vec<f64>,
    /// Slope of `ln max_t E|μ^N - m|` against `ln N`.
    pub slope_mu: f64,
    /// Slope of `ln max_t E|X - Y|` against `ln N`; absent when some error is zero.
    pub slope_x: Option<f64>,
}

pub fn empirical_error_rate_fit(runs: &[CoupledPathStats]) -> Result<ErrorRateFit> {
    let mut n_values: Vec<usize> = runs.iter().map(|r| r.n_players).collect();
    n_values.sort_unstable();
    n_values.dedup();
    if n_values.len() < 3 {
        return Err(MfgError::InsufficientData(format!(
            "need at least three distinct N, got {}",
            n_values.len()
        )));
    }
    let mut sorted: Vec<&CoupledPathStats> = runs.iter().collect();
    sorted.sort_by_key(|r| r.n_players);
    let ns: Vec<f64> = sorted.iter().map(|r| r.n_players as f64).collect();
    let mu: Vec<f64> = sorted.iter().map(|r| r.max_mu_err()).collect();
    let xe: Vec<f64> = sorted.iter().map(|r| r.max_x_err()).collect();
    let slope_mu = log_log_slope(&ns, &mu)
        .ok_or_else(|| MfgError::InsufficientData("coupling errors must be positive".into()))?;
    Ok(ErrorRateFit {
        n_values: sorted.iter().map(|r| r.n_players).collect(),
        max_mu_err: mu,
        max_x_err: xe.clone(),
        slope_mu,
        slope_x: log_log_slope(&ns, &xe),
    })
}

/// `k T / n` for `k = 1..=n`.
pub fn uniform_checkpoints(horizon: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 })
        .collect()
}
