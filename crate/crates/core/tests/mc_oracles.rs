use mfg_kinetic::builtin;
use mfg_kinetic::flow::MeasureFlow;
use mfg_kinetic::forward::{solve_forward, ForwardInput};
use mfg_kinetic::hjb::solve_hjb;
use mfg_kinetic::mc::{mc_cost_estimate, simulate_coupled, uniform_checkpoints};
use mfg_kinetic::mfg::{solve_mfg, SolveOptions};
use mfg_kinetic::nplayer::cost_under_symmetric_feedback;

#[test]
fn single_player_frequencies_match_forward_law() {
    for model in [builtin::three_state_crowd().with_steps(200).unwrap(), builtin::two_state_switching_crowd().with_steps(200).unwrap()] {
        let m = MeasureFlow::constant(model.grid, mfg_kinetic::Simplex::uniform(model.d()));
        let (_, policy) = solve_hjb(&model, &m).unwrap();
        let law = solve_forward(&model, ForwardInput { policy: &policy, measure_arg: &m }).unwrap();
        let reps = 100_000;
        let cps = [0.5, 1.0];
        let s = simulate_coupled(&model, &policy, &m, 1, reps, 17, &cps).unwrap();
        for (c, &t) in s.checkpoints.iter().zip(&cps) {
            let exact = law.at(t).unwrap();
            for (x, freq) in c.y_occupancy.iter().enumerate() {
                let p = exact[x];
                let se = (p * (1.0 - p) / reps as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * se, "t={t} x={x}: {freq} vs {p} (se {se})");
            }
        }
    }
}

#[test]
fn monte_carlo_cost_agrees_with_exact_cost() {
    let model = builtin::three_state_crowd().with_steps(200).unwrap();
    let m = MeasureFlow::constant(model.grid, model.m0.clone());
    let (_, policy) = solve_hjb(&model, &m).unwrap();
    let exact = cost_under_symmetric_feedback(&model, &policy, 3).unwrap();
    let est = mc_cost_estimate(&model, &policy, 3, 10_000, 5).unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn coupling_error_decreases_with_population() {
    let model = builtin::two_state_switching_crowd().with_steps(200).unwrap();
    let opts = SolveOptions { damping: 0.5, tol: 1e-10, max_iter: 500, init: None };
    let sol = solve_mfg(&model, &opts).unwrap().require_converged().unwrap();
    let cps = uniform_checkpoints(model.horizon(), 5);
    let errs: Vec<f64> = [16, 64, 256]
        .iter()
        .map(|&n| simulate_coupled(&model, &sol.policy, &sol.m, n, 200, 11, &cps).unwrap().max_mu_err())
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}
