//! Built-in example models used by the tests, the acceptance suite and the
//! sample configurations.

use crate::error::Result;
use crate::model::{
    validate_model, ActionTable, ControlledRate, Family, FiniteAction, Model, ModelSpec, Numerics,
    SCHEMA_VERSION,
};

fn numerics(n_steps: usize) -> Numerics {
    Numerics {
        n_steps,
        ..Numerics::default()
    }
}

fn identity(d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..d)
        .map(|x| (0..d).map(|z| if x == z { scale } else { 0.0 }).collect())
        .collect()
}

/// Adds a state-only offset `b_x` to row `x` (rows are read against a
/// probability vector, so a constant row is a constant cost).
fn with_offsets(mut t: Vec<Vec<f64>>, offsets: &[f64]) -> Vec<Vec<f64>> {
    for (row, b) in t.iter_mut().zip(offsets) {
        for v in row.iter_mut() {
            *v += b;
        }
    }
    t
}

/// Two states, controlled jump intensities, crowd-averse running and
/// terminal costs (`c1 = I`, `ψ = I/2` plus a preference for state 2).
/// The rates do not depend on the population, so the model is monotone.
pub fn two_state_crowd() -> Model {
    two_state_crowd_with(1.0, 1.0, 1000).expect("built-in model is valid")
}

pub fn two_state_crowd_with(horizon: f64, max_rate: f64, n_steps: usize) -> Result<Model> {
    validate_model(ModelSpec {
        schema: SCHEMA_VERSION,
        d: 2,
        horizon,
        m0: vec![0.9, 0.1],
        family: Family::ControlledRate(ControlledRate {
            max_rate,
            zeta_const: 0.1,
            zeta_weights: vec![0.0, 0.0],
            theta: 0.5,
            c1: with_offsets(identity(2, 1.0), &[0.3, 0.0]),
            psi: with_offsets(identity(2, 0.5), &[0.2, 0.0]),
        }),
        numerics: numerics(n_steps),
    })
}

/// Same dynamics as [`two_state_crowd`] but with state-only costs, so the
/// players do not interact at all.
pub fn two_state_decoupled() -> Model {
    validate_model(ModelSpec {
        schema: SCHEMA_VERSION,
        d: 2,
        horizon: 1.0,
        m0: vec![0.9, 0.1],
        family: Family::ControlledRate(ControlledRate {
            max_rate: 1.0,
            zeta_const: 0.1,
            zeta_weights: vec![0.0, 0.0],
            theta: 0.5,
            c1: vec![vec![0.8, 0.8], vec![0.2, 0.2]],
            psi: vec![vec![0.6, 0.6], vec![0.0, 0.0]],
        }),
        numerics: numerics(1000),
    })
    .expect("built-in model is valid")
}

/// Three states, controlled intensities with a population-dependent floor
/// `ζ(p) = 0.1 + 0.1 p_1 + 0.2 p_3` and a non-symmetric interaction table.
pub fn three_state_crowd() -> Model {
    validate_model(ModelSpec {
        schema: SCHEMA_VERSION,
        d: 3,
        horizon: 1.0,
        m0: vec![0.6, 0.3, 0.1],
        family: Family::ControlledRate(ControlledRate {
            max_rate: 1.0,
            zeta_const: 0.1,
            zeta_weights: vec![0.1, 0.0, 0.2],
            theta: 0.5,
            c1: vec![
                vec![1.0, 0.2, 0.0],
                vec![0.0, 0.8, 0.3],
                vec![0.4, 0.0, 1.2],
            ],
            psi: with_offsets(identity(3, 0.5), &[0.3, 0.1, 0.0]),
        }),
        numerics: numerics(1000),
    })
    .expect("built-in model is valid")
}

/// Two states, two actions (`stay` at rate 0.1, `move` at rate 1 for a cost
/// of 0.3), crowd-averse costs. The `move` rate grows with the share of
/// players in the destination, so rates depend on the population.
pub fn two_state_switching_crowd() -> Model {
    let stay = ActionTable {
        label: Some("stay".into()),
        rates: vec![vec![0.0, 0.1], vec![0.1, 0.0]],
        rate_slopes: None,
        cost: vec![0.0, 0.0],
    };
    let slopes = vec![
        vec![vec![0.0, 0.0], vec![0.0, 0.5]],
        vec![vec![0.5, 0.0], vec![0.0, 0.0]],
    ];
    let go = ActionTable {
        label: Some("move".into()),
        rates: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        rate_slopes: Some(slopes),
        cost: vec![0.3, 0.3],
    };
    validate_model(ModelSpec {
        schema: SCHEMA_VERSION,
        d: 2,
        horizon: 1.0,
        m0: vec![0.7, 0.3],
        family: Family::FiniteAction(FiniteAction {
            max_rate: 1.5,
            actions: vec![stay, go],
            c1: with_offsets(identity(2, 1.0), &[0.0, 0.2]),
            psi: identity(2, 0.5),
        }),
        numerics: numerics(1000),
    })
    .expect("built-in model is valid")
}

/// Two states, one action, symmetric jump rate `q`, no costs, started in
/// state 1. The law solves `π_1(t) = (1 + e^{-2qt}) / 2`.
pub fn symmetric_switching(q: f64, horizon: f64, n_steps: usize) -> Result<Model> {
    validate_model(ModelSpec {
        schema: SCHEMA_VERSION,
        d: 2,
        horizon,
        m0: vec![1.0, 0.0],
        family: Family::FiniteAction(FiniteAction {
            max_rate: q,
            actions: vec![ActionTable {
                label: None,
                rates: vec![vec![0.0, q], vec![q, 0.0]],
                rate_slopes: None,
                cost: vec![0.0, 0.0],
            }],
            c1: vec![vec![0.0; 2]; 2],
            psi: vec![vec![0.0; 2]; 2],
        }),
        numerics: numerics(n_steps),
    })
}

/// Two states, actions `a ∈ {0, 1}` acting as the jump rate, running cost
/// `a/2`, terminal cost `ψ = (0, 1)`. The value of state 2 solves
/// `W' = W - 1/2`, `W(T) = 1`, so `W_2(0) = 1/2 + e^{-T}/2`.
pub fn exit_cost_example(horizon: f64, n_steps: usize) -> Result<Model> {
    let action = |a: f64| ActionTable {
        label: Some(format!("{a}")),
        rates: vec![vec![0.0, a], vec![a, 0.0]],
        rate_slopes: None,
        cost: vec![0.5 * a, 0.5 * a],
    };
    validate_model(ModelSpec {
        schema: SCHEMA_VERSION,
        d: 2,
        horizon,
        m0: vec![0.5, 0.5],
        family: Family::FiniteAction(FiniteAction {
            max_rate: 1.0,
            actions: vec![action(0.0), action(1.0)],
            c1: vec![vec![0.0; 2]; 2],
            psi: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        }),
        numerics: numerics(n_steps),
    })
}

/// A model with no jumps and no costs.
pub fn frozen(d: usize, n_steps: usize) -> Result<Model> {
    validate_model(ModelSpec {
        schema: SCHEMA_VERSION,
        d,
        horizon: 1.0,
        m0: vec![1.0 / d as f64; d],
        family: Family::FiniteAction(FiniteAction {
            max_rate: 0.0,
            actions: vec![ActionTable {
                label: None,
                rates: vec![vec![0.0; d]; d],
                rate_slopes: None,
                cost: vec![0.0; d],
            }],
            c1: vec![vec![0.0; d]; d],
            psi: identity(d, 1.0),
        }),
        numerics: numerics(n_steps),
    })
}
