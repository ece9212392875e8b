mod common;

#[path = "common/dp.rs"]
mod dp;

use mfg_kinetic::flow::MeasureFlow;
use mfg_kinetic::hjb::{evaluate_cost, hjb_residual, solve_hjb, FeedbackPolicy};
use mfg_kinetic::mfg::random_initial_flow;
use mfg_kinetic::model::{random_action, Action};
use mfg_kinetic::builtin;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn value_matches_dynamic_programming_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let d = 2 + i % 2;
        let model = if i % 2 == 0 {
            common::random_controlled(&mut rng, d, 1000)
        } else {
            common::random_finite(&mut rng, d, 3, 1000)
        };
        let model = model.with_steps((model.horizon() / 1e-3).round() as usize).unwrap();
        let m = random_initial_flow(&model, &mut rng);
        let (v, _) = solve_hjb(&model, &m).unwrap();
        let oracle = dp::dp_oracle(&model, &m);
        let err = v
            .w
            .iter()
            .zip(&oracle)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        worst = worst.max(err);
    }
    assert!(worst <= 5e-3, "sup |W - DP| = {worst}");
}

#[test]
fn exit_cost_value_is_exact() {
    let model = builtin::exit_cost_example(1.0, 1000).unwrap();
    let m = MeasureFlow::constant(model.grid, model.m0.clone());
    let (v, _) = solve_hjb(&model, &m).unwrap();
    assert!((v.initial()[1] - (0.5 + 0.5 * (-1f64).exp())).abs() <= 1e-6);
}

#[test]
fn residual_is_small_and_decreases_with_the_step() {
    let mut last = f64::INFINITY;
    for n in [250, 500, 1000, 2000] {
        let model = builtin::two_state_crowd().with_steps(n).unwrap();
        let m = MeasureFlow::constant(model.grid, model.m0.clone());
        let (v, _) = solve_hjb(&model, &m).unwrap();
        let r = hjb_residual(&model, &m, &v);
        assert!(r < last, "residual {r} at n = {n} not below {last}");
        last = r;
    }
    assert!(last <= 1e-4);
}

#[test]
fn random_policies_do_no_better_than_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for model in [builtin::three_state_crowd().with_steps(200).unwrap(), builtin::two_state_switching_crowd().with_steps(200).unwrap()] {
        let m = random_initial_flow(&model, &mut rng);
        let (v, optimal) = solve_hjb(&model, &m).unwrap();
        let best = model.m0.dot(v.initial());
        assert!((evaluate_cost(&model, &m, &optimal).unwrap() - best).abs() <= 1e-6);
        for _ in 0..50 {
            // Random feedback, held on blocks of random length.
            let mut actions = Vec::with_capacity(model.grid.len());
            let mut current: Vec<Action> = (0..model.d()).map(|_| random_action(&model.spec, &mut rng)).collect();
            for _ in 0..model.grid.len() {
                if rng.random::<f64>() < 0.05 {
                    current = (0..model.d()).map(|_| random_action(&model.spec, &mut rng)).collect();
                }
                actions.push(current.clone());
            }
            let policy = FeedbackPolicy { grid: model.grid, actions };
            let j = evaluate_cost(&model, &m, &policy).unwrap();
            assert!(j >= best - 1e-6, "random policy cost {j} below optimum {best}");
        }
    }
}
