#![allow(dead_code)]

use mfg_kinetic::hjb::FeedbackPolicy;
use mfg_kinetic::model::{
    validate_model, Action, ActionTable, ControlledRate, Family, FiniteAction, Model, ModelSpec, Numerics,
};
use rand::Rng;

fn table<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..d).map(|_| (0..d).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

fn initial<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|v| v / s).collect();
    let rest: f64 = p[1..].iter().sum();
    p[0] = 1.0 - rest;
    p
}

pub fn random_controlled<R: Rng>(rng: &mut R, d: usize, n_steps: usize) -> Model {
    validate_model(ModelSpec {
        schema: 1,
        d,
        horizon: rng.random_range(0.5..1.5),
        m0: initial(rng, d),
        family: Family::ControlledRate(ControlledRate {
            max_rate: rng.random_range(0.5..2.0),
            zeta_const: rng.random_range(0.05..0.5),
            zeta_weights: (0..d).map(|_| rng.random_range(0.0..0.3)).collect(),
            theta: rng.random_range(0.3..1.0),
            c1: table(rng, d, -1.0, 1.0),
            psi: table(rng, d, -1.0, 1.0),
        }),
        numerics: Numerics {
            n_steps,
            ..Numerics::default()
        },
    })
    .expect("random controlled model is valid")
}

pub fn random_finite<R: Rng>(rng: &mut R, d: usize, n_actions: usize, n_steps: usize) -> Model {
    let actions = (0..n_actions)
        .map(|_| {
            let rates = table(rng, d, 0.2, 1.5);
            // Slopes keep every vertex rate inside [0.2 - 0.2, 1.5 + 0.5].
            let slopes = (0..d)
                .map(|_| (0..d).map(|_| (0..d).map(|_| rng.random_range(-0.2..0.5)).collect()).collect())
                .collect();
            ActionTable {
                label: None,
                rates,
                rate_slopes: Some(slopes),
                cost: (0..d).map(|_| rng.random_range(0.0..0.5)).collect(),
            }
        })
        .collect();
    validate_model(ModelSpec {
        schema: 1,
        d,
        horizon: rng.random_range(0.5..1.5),
        m0: initial(rng, d),
        family: Family::FiniteAction(FiniteAction {
            max_rate: 2.0,
            actions,
            c1: table(rng, d, -1.0, 1.0),
            psi: table(rng, d, -1.0, 1.0),
        }),
        numerics: Numerics {
            n_steps,
            ..Numerics::default()
        },
    })
    .expect("random finite-action model is valid")
}

/// The same model with state `x` renamed `perm[x]`.
pub fn relabel(model: &Model, perm: &[usize]) -> Model {
    let d = model.d();
    let mat = |t: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; d]; d];
        for x in 0..d {
            for z in 0..d {
                out[perm[x]][perm[z]] = t[x][z];
            }
        }
        out
    };
    let vec_ = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for x in 0..d {
            out[perm[x]] = v[x];
        }
        out
    };
    let mut spec = model.spec.clone();
    spec.m0 = vec_(&spec.m0);
    spec.family = match &model.spec.family {
        Family::ControlledRate(f) => Family::ControlledRate(ControlledRate {
            zeta_weights: vec_(&f.zeta_weights),
            c1: mat(&f.c1),
            psi: mat(&f.psi),
            ..f.clone()
        }),
        Family::FiniteAction(f) => Family::FiniteAction(FiniteAction {
            actions: f
                .actions
                .iter()
                .map(|t| ActionTable {
                    label: t.label.clone(),
                    rates: mat(&t.rates),
                    rate_slopes: t.rate_slopes.as_ref().map(|s| {
                        let mut out = vec![vec![vec![0.0; d]; d]; d];
                        for x in 0..d {
                            for y in 0..d {
                                for z in 0..d {
                                    out[perm[x]][perm[y]][perm[z]] = s[x][y][z];
                                }
                            }
                        }
                        out
                    }),
                    cost: vec_(&t.cost),
                })
                .collect(),
            c1: mat(&f.c1),
            psi: mat(&f.psi),
            ..f.clone()
        }),
    };
    validate_model(spec).expect("relabeled model is valid")
}

pub fn relabel_policy(policy: &FeedbackPolicy, perm: &[usize]) -> FeedbackPolicy {
    let d = perm.len();
    let actions = policy
        .actions
        .iter()
        .map(|row| {
            let mut out = row.clone();
            for x in 0..d {
                out[perm[x]] = match &row[x] {
                    Action::Rates(a) => {
                        let mut b = vec![0.0; d];
                        for y in 0..d {
                            b[perm[y]] = a[y];
                        }
                        Action::Rates(b)
                    }
                    Action::Index(i) => Action::Index(*i),
                };
            }
            out
        })
        .collect();
    FeedbackPolicy {
        grid: policy.grid,
        actions,
    }
}
