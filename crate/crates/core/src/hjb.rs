//! Backward HJB system for a fixed population flow, optimal feedback
//! extraction and cost evaluation of feedback policies.
//!
//! On each interval `[t_k, t_{k+1}]` the value is first advanced with RK4,
//! re-minimizing the Hamiltonian at every stage. The node minimizer `a_k` is
//! read off that predictor at `t_k`, and the interval is then integrated
//! again with `a_k` held fixed. The stored value is therefore the cost of the
//! stored piecewise-constant policy, which is what the forward solver and the
//! simulators play.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::flow::{fmt_f64, MeasureFlow, TimeGrid};
use crate::hamiltonian::{minimize_hamiltonian, pre_hamiltonian};
use crate::model::{Action, Family, Model, ModelSpec};

/// Value vector `W(t_k) ∈ R^d` at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: TimeGrid,
    pub w: Vec<Vec<f64>>,
}

impl ValueFunction {
    pub fn at_node(&self, k: usize) -> &[f64] {
        &self.w[k]
    }

    pub fn initial(&self) -> &[f64] {
        &self.w[0]
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.w
            .iter()
            .zip(&other.w)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.w[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("W{i}")));
        w.write_record(&header)?;
        for (t, row) in self.grid.times().zip(&self.w) {
            let mut rec = vec![fmt_f64(t)];
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, grid: TimeGrid) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut w = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let nums = parse_row(&rec)?;
            w.push(nums[1..].to_vec());
        }
        if w.len() != grid.len() {
            return Err(MfgError::Schema(format!(
                "value csv has {} rows for {} grid nodes",
                w.len(),
                grid.len()
            )));
        }
        Ok(ValueFunction { grid, w })
    }
}

/// Feedback policy `γ(t_k, x)` at every node, played as piecewise constant
/// on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    pub grid: TimeGrid,
    pub actions: Vec<Vec<Action>>,
}

impl FeedbackPolicy {
    /// The same action in every state at every time.
    pub fn constant(grid: TimeGrid, per_state: Vec<Action>) -> Self {
        FeedbackPolicy {
            grid,
            actions: vec![per_state; grid.len()],
        }
    }

    /// Action in state `x` at time `t`.
    pub fn at(&self, t: f64, x: usize) -> &Action {
        &self.actions[self.grid.interval(t)][x]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.actions[0].len();
        let mut header = vec!["t".to_string(), "x".to_string()];
        match &self.actions[0][0] {
            Action::Rates(_) => header.extend((1..=d).map(|i| format!("a{i}"))),
            Action::Index(_) => header.push("a".to_string()),
        }
        w.write_record(&header)?;
        for (t, row) in self.grid.times().zip(&self.actions) {
            for (x, a) in row.iter().enumerate() {
                let mut rec = vec![fmt_f64(t), (x + 1).to_string()];
                match a {
                    Action::Rates(r) => rec.extend(r.iter().map(|v| fmt_f64(*v))),
                    Action::Index(i) => rec.push(i.to_string()),
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, spec: &ModelSpec, grid: TimeGrid) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let d = spec.d;
        let mut actions: Vec<Vec<Action>> = Vec::with_capacity(grid.len());
        for rec in r.records() {
            let rec = rec?;
            let nums = parse_row(&rec)?;
            let x = nums[1] as usize;
            if x == 1 {
                actions.push(Vec::with_capacity(d));
            }
            let row = actions
                .last_mut()
                .ok_or_else(|| MfgError::Schema("policy csv must start at x = 1".into()))?;
            if x != row.len() + 1 {
                return Err(MfgError::Schema("policy csv rows out of order".into()));
            }
            let a = match &spec.family {
                Family::ControlledRate(_) if nums.len() == 2 + d => Action::Rates(nums[2..].to_vec()),
                Family::FiniteAction(f) if nums.len() == 3 && (nums[2] as usize) < f.actions.len() => {
                    Action::Index(nums[2] as usize)
                }
                _ => return Err(MfgError::Schema("policy csv does not match the model family".into())),
            };
            row.push(a);
        }
        if actions.len() != grid.len() || actions.iter().any(|r| r.len() != d) {
            return Err(MfgError::Schema("policy csv does not cover the grid".into()));
        }
        Ok(FeedbackPolicy { grid, actions })
    }
}

fn parse_row(rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| MfgError::Schema(format!("csv: {e}")))
}

/// `F_x(W) = min_a H(x, a, p, W)` for every state.
pub fn optimal_drift(spec: &ModelSpec, p: &[f64], w: &[f64]) -> Vec<f64> {
    (0..spec.d)
        .map(|x| minimize_hamiltonian(spec, x, p, w).value)
        .collect()
}

fn frozen_drift(spec: &ModelSpec, actions: &[Action], p: &[f64], w: &[f64]) -> Vec<f64> {
    (0..spec.d)
        .map(|x| pre_hamiltonian(spec, x, &actions[x], p, w))
        .collect()
}

fn axpy(w: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    w.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One backward RK4 step of `dW/dt = -G(t, W)` from `t_{k+1}` to `t_k`.
fn rk4_backward<G>(flow: &MeasureFlow, k: usize, w_next: &[f64], h: f64, mut drift: G) -> Vec<f64>
where
    G: FnMut(&[f64], &[f64]) -> Vec<f64>,
{
    let p_hi = flow.node(k + 1);
    let p_mid = flow.lerp(k, 0.5);
    let p_lo = flow.node(k);
    let k1 = drift(p_hi.as_slice(), w_next);
    let k2 = drift(p_mid.as_slice(), &axpy(w_next, 0.5 * h, &k1));
    let k3 = drift(p_mid.as_slice(), &axpy(w_next, 0.5 * h, &k2));
    let k4 = drift(p_lo.as_slice(), &axpy(w_next, h, &k3));
    w_next
        .iter()
        .enumerate()
        .map(|(i, w)| w + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn check_finite(w: &[f64], what: &'static str) -> Result<()> {
    if w.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MfgError::NonFiniteValue(what))
    }
}

fn check_grid(model: &Model, grid: &TimeGrid) -> Result<()> {
    if *grid != model.grid {
        return Err(MfgError::InvalidParameter(format!(
            "grid {grid:?} does not match the model grid {:?}",
            model.grid
        )));
    }
    Ok(())
}

/// Terminal vector `Ψ_x = ψ(x, m(T))`.
pub fn terminal_values(spec: &ModelSpec, m: &MeasureFlow) -> Vec<f64> {
    (0..spec.d)
        .map(|x| spec.terminal_cost(x, m.terminal().as_slice()))
        .collect()
}

/// Solves the HJB system for the flow `m` and returns the value function
/// with its optimal node policy.
pub fn solve_hjb(model: &Model, m: &MeasureFlow) -> Result<(ValueFunction, FeedbackPolicy)> {
    check_grid(model, m.grid())?;
    let spec = &model.spec;
    let grid = model.grid;
    let n = grid.n_steps;
    let h = grid.dt();
    let minimizers = |p: &[f64], w: &[f64]| -> Vec<Action> {
        (0..spec.d)
            .map(|x| minimize_hamiltonian(spec, x, p, w).minimizer)
            .collect()
    };

    let mut w = vec![Vec::new(); n + 1];
    let mut actions = vec![Vec::new(); n + 1];
    w[n] = terminal_values(spec, m);
    actions[n] = minimizers(m.terminal().as_slice(), &w[n]);
    for k in (0..n).rev() {
        let predicted = rk4_backward(m, k, &w[k + 1], h, |p, v| optimal_drift(spec, p, v));
        check_finite(&predicted, "HJB integration")?;
        let a_k = minimizers(m.node(k).as_slice(), &predicted);
        let corrected = rk4_backward(m, k, &w[k + 1], h, |p, v| frozen_drift(spec, &a_k, p, v));
        check_finite(&corrected, "HJB integration")?;
        w[k] = corrected;
        actions[k] = a_k;
    }
    Ok((ValueFunction { grid, w }, FeedbackPolicy { grid, actions }))
}

/// Cost-to-go `J(t_k, x)` of a feedback policy against the flow `m`.
pub fn evaluate_policy(model: &Model, m: &MeasureFlow, policy: &FeedbackPolicy) -> Result<ValueFunction> {
    check_grid(model, m.grid())?;
    check_grid(model, &policy.grid)?;
    let spec = &model.spec;
    let grid = model.grid;
    let n = grid.n_steps;
    let h = grid.dt();
    let mut w = vec![Vec::new(); n + 1];
    w[n] = terminal_values(spec, m);
    for k in (0..n).rev() {
        let a_k = &policy.actions[k];
        let next = rk4_backward(m, k, &w[k + 1], h, |p, v| frozen_drift(spec, a_k, p, v));
        check_finite(&next, "cost evaluation")?;
        w[k] = next;
    }
    Ok(ValueFunction { grid, w })
}

/// Expected cost `E[J(0, ξ)]`, `ξ ~ m0`, of a feedback policy against `m`.
pub fn evaluate_cost(model: &Model, m: &MeasureFlow, policy: &FeedbackPolicy) -> Result<f64> {
    let j = evaluate_policy(model, m, policy)?;
    Ok(model.m0.dot(j.initial()))
}

/// Max over nodes of `|W(t) - Ψ - ∫_t^T F(s, W(s)) ds|`, the integral taken
/// by the composite trapezoid rule on the grid.
pub fn hjb_residual(model: &Model, m: &MeasureFlow, v: &ValueFunction) -> f64 {
    let spec = &model.spec;
    let n = model.grid.n_steps;
    let h = model.grid.dt();
    let psi = terminal_values(spec, m);
    let f: Vec<Vec<f64>> = (0..=n)
        .map(|k| optimal_drift(spec, m.node(k).as_slice(), &v.w[k]))
        .collect();
    let mut integral = vec![0.0; spec.d];
    let mut worst: f64 = 0.0;
    for k in (0..=n).rev() {
        if k < n {
            for x in 0..spec.d {
                integral[x] += 0.5 * h * (f[k][x] + f[k + 1][x]);
            }
        }
        for x in 0..spec.d {
            worst = worst.max((v.w[k][x] - psi[x] - integral[x]).abs());
        }
    }
    worst
}

/// Observed sup-norm Lipschitz ratio of `w -> F(t, w)` against `2ν(U)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FLipschitzReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub bound: f64,
    pub violations: usize,
}

pub fn f_lipschitz_probe(model: &Model, m: &MeasureFlow, n_samples: usize, seed: u64) -> Result<FLipschitzReport> {
    check_grid(model, m.grid())?;
    let spec = &model.spec;
    let bound = 2.0 * model.constants.nu_total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FLipschitzReport {
        samples: n_samples,
        max_ratio: 0.0,
        bound,
        violations: 0,
    };
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    for _ in 0..n_samples {
        let t = rng.random::<f64>() * model.horizon();
        let p = m.at(t)?;
        let w: Vec<f64> = (0..spec.d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let z: Vec<f64> = (0..spec.d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fw = optimal_drift(spec, p.as_slice(), &w);
        let fz = optimal_drift(spec, p.as_slice(), &z);
        let num = sup(&fw, &fz);
        let den = sup(&w, &z);
        if num > bound * den + 1e-9 {
            report.violations += 1;
        }
        if den > 0.0 {
            report.max_ratio = report.max_ratio.max(num / den);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::simplex::Simplex;

    #[test]
    fn frozen_model_keeps_terminal_values() {
        let model = builtin::frozen(3, 50).unwrap();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let (v, _) = solve_hjb(&model, &m).unwrap();
        let psi = terminal_values(&model.spec, &m);
        for row in &v.w {
            assert_eq!(row, &psi);
        }
        assert_eq!(hjb_residual(&model, &m, &v), 0.0);
    }

    #[test]
    fn exit_cost_closed_form() {
        let model = builtin::exit_cost_example(1.0, 1000).unwrap();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let (v, policy) = solve_hjb(&model, &m).unwrap();
        let exact = 0.5 + 0.5 * (-1f64).exp();
        assert!((v.initial()[1] - exact).abs() < 1e-10, "{}", v.initial()[1]);
        assert!(v.w.iter().all(|row| row[0] == 0.0));
        assert!(policy.actions.iter().all(|row| row[1] == Action::Index(1) && row[0] == Action::Index(0)));
    }

    #[test]
    fn residual_positive_for_wrong_value() {
        let model = builtin::two_state_crowd_with(1.0, 1.0, 200).unwrap();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let psi = terminal_values(&model.spec, &m);
        let v = ValueFunction {
            grid: model.grid,
            w: vec![psi; model.grid.len()],
        };
        assert!(hjb_residual(&model, &m, &v) > 1e-3);
    }

    #[test]
    fn optimal_policy_cost_matches_value() {
        for model in [builtin::two_state_crowd(), builtin::three_state_crowd(), builtin::two_state_switching_crowd()] {
            let m = MeasureFlow::constant(model.grid, model.m0.clone());
            let (v, policy) = solve_hjb(&model, &m).unwrap();
            let j = evaluate_cost(&model, &m, &policy).unwrap();
            assert!((j - model.m0.dot(v.initial())).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_costs_give_zero() {
        let model = builtin::symmetric_switching(1.0, 1.0, 100).unwrap();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let policy = FeedbackPolicy::constant(model.grid, vec![Action::Index(0); 2]);
        assert_eq!(evaluate_cost(&model, &m, &policy).unwrap(), 0.0);
    }

    #[test]
    fn constant_policies_are_not_better_than_optimal() {
        let model = builtin::two_state_crowd();
        let m = MeasureFlow::constant(model.grid, Simplex::new(vec![0.4, 0.6]).unwrap());
        let (v, _) = solve_hjb(&model, &m).unwrap();
        let best = model.m0.dot(v.initial());
        for a in [0.0, 0.25, 0.5, 1.0] {
            let per_state = vec![Action::Rates(vec![0.0, a]), Action::Rates(vec![a, 0.0])];
            let j = evaluate_cost(&model, &m, &FeedbackPolicy::constant(model.grid, per_state)).unwrap();
            assert!(j >= best - 1e-6, "{a}: {j} < {best}");
        }
    }

    #[test]
    fn f_lipschitz_shift_gives_zero() {
        let model = builtin::three_state_crowd();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let w = [0.3, -1.0, 2.0];
        let z: Vec<f64> = w.iter().map(|v| v + 4.2).collect();
        let fw = optimal_drift(&model.spec, model.m0.as_slice(), &w);
        let fz = optimal_drift(&model.spec, model.m0.as_slice(), &z);
        for (a, b) in fw.iter().zip(&fz) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = f_lipschitz_probe(&model, &m, 1000, 5).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio <= r.bound);
    }

    #[test]
    fn csv_round_trip() {
        let model = builtin::three_state_crowd().with_steps(20).unwrap();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let (v, policy) = solve_hjb(&model, &m).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,W1,W2,W3\n"));
        assert_eq!(ValueFunction::read_csv(buf.as_slice(), model.grid).unwrap(), v);
        let mut buf = Vec::new();
        policy.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,x,a1,a2,a3\n"));
        assert_eq!(FeedbackPolicy::read_csv(buf.as_slice(), &model.spec, model.grid).unwrap(), policy);

        let fa = builtin::two_state_switching_crowd().with_steps(10).unwrap();
        let m = MeasureFlow::constant(fa.grid, fa.m0.clone());
        let (_, policy) = solve_hjb(&fa, &m).unwrap();
        let mut buf = Vec::new();
        policy.write_csv(&mut buf).unwrap();
        assert_eq!(FeedbackPolicy::read_csv(buf.as_slice(), &fa.spec, fa.grid).unwrap(), policy);
    }
}
