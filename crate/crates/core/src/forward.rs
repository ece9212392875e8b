//! Forward Kolmogorov equation for the law of a single player.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::flow::{MeasureFlow, TimeGrid};
use crate::hjb::FeedbackPolicy;
use crate::model::{Action, Model, ModelSpec};
use crate::simplex::Simplex;

const NEGATIVE_MASS_TOL: f64 = 1e-12;
const MASS_LOSS_TOL: f64 = 1e-9;

/// What the player does and which population flow enters its rates.
#[derive(Debug, Clone, Copy)]
pub struct ForwardInput<'a> {
    pub policy: &'a FeedbackPolicy,
    pub measure_arg: &'a MeasureFlow,
}

/// `(π Q)_y = Σ_x π_x Q_{xy}` for the generator of `actions` at law `p`.
fn transport(spec: &ModelSpec, actions: &[Action], p: &[f64], pi: &[f64]) -> Vec<f64> {
    let d = spec.d;
    let mut out = vec![0.0; d];
    for x in 0..d {
        if pi[x] == 0.0 {
            continue;
        }
        for y in (0..d).filter(|&y| y != x) {
            let flux = pi[x] * spec.rate(x, y, &actions[x], p);
            out[y] += flux;
            out[x] -= flux;
        }
    }
    out
}

/// Law of a player starting from `m0` and using `input.policy` while the
/// population follows `input.measure_arg`.
pub fn solve_forward(model: &Model, input: ForwardInput<'_>) -> Result<MeasureFlow> {
    let grid: TimeGrid = model.grid;
    if input.policy.grid != grid || *input.measure_arg.grid() != grid {
        return Err(MfgError::InvalidParameter(
            "policy and measure flow must live on the model grid".into(),
        ));
    }
    let spec = &model.spec;
    let h = grid.dt();
    let mut values = Vec::with_capacity(grid.len());
    values.push(model.m0.clone());
    let mut cumulative = 0.0;
    for k in 0..grid.n_steps {
        let a = &input.policy.actions[k];
        let m = input.measure_arg;
        let (p_lo, p_mid, p_hi) = (m.node(k), m.lerp(k, 0.5), m.node(k + 1));
        let pi = values[k].as_slice();
        let step = |v: &[f64], s: f64, k: &[f64]| -> Vec<f64> { v.iter().zip(k).map(|(a, b)| a + s * b).collect() };
        let k1 = transport(spec, a, p_lo.as_slice(), pi);
        let k2 = transport(spec, a, p_mid.as_slice(), &step(pi, 0.5 * h, &k1));
        let k3 = transport(spec, a, p_mid.as_slice(), &step(pi, 0.5 * h, &k2));
        let k4 = transport(spec, a, p_hi.as_slice(), &step(pi, h, &k3));
        let next: Vec<f64> = (0..spec.d)
            .map(|i| pi[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFiniteValue("forward integration"));
        }
        if let Some((state, &value)) = next.iter().enumerate().find(|(_, v)| **v < -NEGATIVE_MASS_TOL) {
            return Err(MfgError::NegativeMass {
                node: k + 1,
                state,
                value,
            });
        }
        let (p, drift) = Simplex::renormalized(next)?;
        cumulative += drift;
        if cumulative > MASS_LOSS_TOL {
            return Err(MfgError::MassLoss(cumulative));
        }
        values.push(p);
    }
    MeasureFlow::new(grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Largest `|Σ_x m_x(t_k) - 1|` over the nodes of a flow.
pub fn mass_conservation_check(flow: &MeasureFlow, tol: f64) -> MassReport {
    let max_deviation = flow
        .values()
        .iter()
        .map(|p| (p.as_slice().iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    MassReport {
        max_deviation,
        pass: max_deviation <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::hjb::{evaluate_cost, solve_hjb};
    use crate::model::{ActionTable, Family, FiniteAction};

    fn run(model: &Model, policy: &FeedbackPolicy, m: &MeasureFlow) -> MeasureFlow {
        solve_forward(
            model,
            ForwardInput {
                policy,
                measure_arg: m,
            },
        )
        .unwrap()
    }

    #[test]
    fn symmetric_switching_matches_closed_form() {
        let model = builtin::symmetric_switching(1.0, 1.0, 2000).unwrap();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let policy = FeedbackPolicy::constant(model.grid, vec![Action::Index(0); 2]);
        let pi = run(&model, &policy, &m);
        for (k, t) in model.grid.times().enumerate() {
            let exact = 0.5 * (1.0 + (-2.0 * t).exp());
            assert!((pi.node(k)[0] - exact).abs() < 1e-12);
        }
        assert!(mass_conservation_check(&pi, 1e-10).pass);
    }

    #[test]
    fn frozen_law_is_constant() {
        let model = builtin::frozen(3, 100).unwrap();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let policy = FeedbackPolicy::constant(model.grid, vec![Action::Index(0); 3]);
        let pi = run(&model, &policy, &m);
        assert!(pi.values().iter().all(|p| p == &model.m0));
    }

    #[test]
    fn duality_with_cost_evaluation() {
        // With c = 0 and ψ(x, ·) = g_x, the expected terminal cost is g·π(T).
        let base = builtin::two_state_switching_crowd();
        let mut spec = base.spec.clone();
        let g = [0.7, -0.4];
        if let Family::FiniteAction(f) = &mut spec.family {
            f.c1 = vec![vec![0.0; 2]; 2];
            f.psi = g.iter().map(|v| vec![*v; 2]).collect();
            for t in f.actions.iter_mut() {
                t.cost = vec![0.0; 2];
            }
        }
        let model = crate::model::validate_model(spec).unwrap();
        let m = MeasureFlow::constant(model.grid, crate::simplex::Simplex::new(vec![0.2, 0.8]).unwrap());
        let policy = FeedbackPolicy::constant(model.grid, vec![Action::Index(1), Action::Index(0)]);
        let pi = run(&model, &policy, &m);
        let lhs = pi.terminal().dot(&g);
        let rhs = evaluate_cost(&model, &m, &policy).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn negative_rates_are_reported() {
        let model = builtin::frozen(2, 10).unwrap();
        let mut spec = model.spec.clone();
        spec.family = Family::FiniteAction(FiniteAction {
            max_rate: 0.0,
            actions: vec![ActionTable {
                label: None,
                rates: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                rate_slopes: Some(vec![
                    vec![vec![0.0, 0.0], vec![-50.0, 0.0]],
                    vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                ]),
                cost: vec![0.0, 0.0],
            }],
            c1: vec![vec![0.0; 2]; 2],
            psi: vec![vec![0.0; 2]; 2],
        });
        // Bypass validation: the slope makes 1->2 negative once p_1 > 0.
        let bad = Model { spec, ..model };
        let m = MeasureFlow::constant(bad.grid, bad.m0.clone());
        let policy = FeedbackPolicy::constant(bad.grid, vec![Action::Index(0); 2]);
        let err = solve_forward(&bad, ForwardInput { policy: &policy, measure_arg: &m }).unwrap_err();
        assert!(matches!(err, MfgError::NegativeMass { node: 1, state: 1, .. }), "{err}");
    }

    #[test]
    fn optimal_law_of_builtin_stays_in_simplex() {
        let model = builtin::three_state_crowd();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let (_, policy) = solve_hjb(&model, &m).unwrap();
        let pi = run(&model, &policy, &m);
        assert!(mass_conservation_check(&pi, 1e-10).pass);
        let r = crate::flow::flow_lipschitz_check(&pi, model.constants.flow_lipschitz);
        assert!(r.pass, "{r:?}");
    }
}
