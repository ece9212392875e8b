//! Explicit backward dynamic programming for the HJB system, with the
//! Hamiltonian minimized by a fine scan.

use mfg_kinetic::flow::MeasureFlow;
use mfg_kinetic::model::{Action, Family, Model};

/// Minimum over actions of `c(x, a, p) + Σ_y λ(x, y, a, p) (g_y - g_x)`,
/// scanning a fine grid one jump target at a time (the controlled-rate
/// Hamiltonian is a sum of one term per target).
pub fn scanned_minimum(model: &Model, x: usize, p: &[f64], g: &[f64]) -> f64 {
    let spec = &model.spec;
    let d = spec.d;
    match &spec.family {
        Family::FiniteAction(f) => (0..f.actions.len())
            .map(|i| {
                let a = Action::Index(i);
                let jumps: f64 = (0..d).filter(|&y| y != x).map(|y| spec.rate(x, y, &a, p) * (g[y] - g[x])).sum();
                spec.running_cost(x, &a, p) + jumps
            })
            .fold(f64::INFINITY, f64::min),
        Family::ControlledRate(f) => {
            const LEVELS: usize = 4001;
            let zero = Action::Rates(vec![0.0; d]);
            let mut total = spec.running_cost(x, &zero, p)
                + (0..d).filter(|&y| y != x).map(|y| spec.rate(x, y, &zero, p) * (g[y] - g[x])).sum::<f64>();
            for y in (0..d).filter(|&y| y != x) {
                let best = (0..LEVELS)
                    .map(|i| {
                        let a = f.max_rate * i as f64 / (LEVELS - 1) as f64;
                        f.theta * a * a + a * (g[y] - g[x])
                    })
                    .fold(f64::INFINITY, f64::min);
                total += best;
            }
            total
        }
    }
}

/// Explicit backward dynamic programming on the grid.
pub fn dp_oracle(model: &Model, m: &MeasureFlow) -> Vec<Vec<f64>> {
    let spec = &model.spec;
    let n = model.grid.n_steps;
    let h = model.grid.dt();
    let mut w = vec![vec![0.0; spec.d]; n + 1];
    for (x, v) in w[n].iter_mut().enumerate() {
        *v = spec.terminal_cost(x, m.terminal().as_slice());
    }
    for k in (0..n).rev() {
        let p = m.node(k + 1).as_slice();
        for x in 0..spec.d {
            w[k][x] = w[k + 1][x] + h * scanned_minimum(model, x, p, &w[k + 1]);
        }
    }
    w
}
