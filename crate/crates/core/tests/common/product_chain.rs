//! Uncompressed `N`-player chain on all `d^N` state tuples, used to check the
//! count-compressed solver.

use mfg_kinetic::hjb::FeedbackPolicy;
use mfg_kinetic::model::{Action, Family, Model};

pub struct ProductChain<'a> {
    model: &'a Model,
    n: usize,
    states: Vec<Vec<usize>>,
    mu: Vec<Vec<f64>>,
}

impl<'a> ProductChain<'a> {
    pub fn new(model: &'a Model, n: usize) -> Self {
        let d = model.d();
        let total = d.pow(n as u32);
        let states: Vec<Vec<usize>> = (0..total)
            .map(|mut k| {
                (0..n)
                    .map(|_| {
                        let x = k % d;
                        k /= d;
                        x
                    })
                    .collect()
            })
            .collect();
        let mu = states
            .iter()
            .map(|s| {
                let mut p = vec![0.0; d];
                for &x in s {
                    p[x] += 1.0 / n as f64;
                }
                p
            })
            .collect();
        ProductChain { model, n, states, mu }
    }

    fn encode(&self, s: &[usize]) -> usize {
        let d = self.model.d();
        s.iter().rev().fold(0, |acc, &x| acc * d + x)
    }

    /// `Σ_{moves} rate (v(target) - v(s))` for every player except the first.
    fn others_drift(&self, acts: &[Action], v: &[f64], k: usize) -> f64 {
        let spec = &self.model.spec;
        let s = &self.states[k];
        let mut out = 0.0;
        for i in 1..self.n {
            for y in (0..spec.d).filter(|&y| y != s[i]) {
                let mut t = s.clone();
                t[i] = y;
                out += spec.rate(s[i], y, &acts[s[i]], &self.mu[k]) * (v[self.encode(&t)] - v[k]);
            }
        }
        out
    }

    /// Generator part and running cost of the first player under action `a`.
    fn own_drift(&self, a: &Action, v: &[f64], k: usize) -> f64 {
        let spec = &self.model.spec;
        let s = &self.states[k];
        let mut out = spec.running_cost(s[0], a, &self.mu[k]);
        for y in (0..spec.d).filter(|&y| y != s[0]) {
            let mut t = s.clone();
            t[0] = y;
            out += spec.rate(s[0], y, a, &self.mu[k]) * (v[self.encode(&t)] - v[k]);
        }
        out
    }

    fn best_action(&self, v: &[f64], k: usize) -> Action {
        let spec = &self.model.spec;
        let s = &self.states[k];
        match &spec.family {
            Family::FiniteAction(f) => {
                let mut best = (f64::INFINITY, 0);
                for i in 0..f.actions.len() {
                    let val = self.own_drift(&Action::Index(i), v, k);
                    if val < best.0 {
                        best = (val, i);
                    }
                }
                Action::Index(best.1)
            }
            Family::ControlledRate(f) => {
                let x = s[0];
                let a = (0..spec.d)
                    .map(|y| {
                        if y == x {
                            return 0.0;
                        }
                        let mut t = s.clone();
                        t[0] = y;
                        let diff = v[self.encode(&t)] - v[k];
                        (-diff / (2.0 * f.theta)).max(0.0).min(f.max_rate)
                    })
                    .collect();
                Action::Rates(a)
            }
        }
    }

    fn terminal(&self) -> Vec<f64> {
        (0..self.states.len())
            .map(|k| self.model.spec.terminal_cost(self.states[k][0], &self.mu[k]))
            .collect()
    }

    fn expectation(&self, v: &[f64]) -> f64 {
        let m0 = self.model.m0.as_slice();
        self.states
            .iter()
            .zip(v)
            .map(|(s, v)| s.iter().map(|&x| m0[x]).product::<f64>() * v)
            .sum()
    }

    fn rk4<G: Fn(&[f64]) -> Vec<f64>>(v: &[f64], h: f64, g: G) -> Vec<f64> {
        let add = |k: &[f64], c: f64| -> Vec<f64> { v.iter().zip(k).map(|(a, b)| a + c * b).collect() };
        let k1 = g(v);
        let k2 = g(&add(&k1, h / 2.0));
        let k3 = g(&add(&k2, h / 2.0));
        let k4 = g(&add(&k3, h));
        (0..v.len()).map(|i| v[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    }

    /// Player 1's expected cost when everybody uses `policy`.
    pub fn symmetric_cost(&self, policy: &FeedbackPolicy) -> f64 {
        let h = self.model.grid.dt();
        let mut v = self.terminal();
        for k in (0..self.model.grid.n_steps).rev() {
            let acts = &policy.actions[k];
            v = Self::rk4(&v, h, |w| {
                (0..w.len())
                    .map(|j| self.own_drift(&acts[self.states[j][0]], w, j) + self.others_drift(acts, w, j))
                    .collect()
            });
        }
        self.expectation(&v)
    }

    /// Player 1's optimal cost against the others using `policy`, with the
    /// node action read from a re-minimized predictor step and the interval
    /// then integrated with that action held fixed.
    pub fn best_response_cost(&self, policy: &FeedbackPolicy) -> f64 {
        let h = self.model.grid.dt();
        let mut v = self.terminal();
        for k in (0..self.model.grid.n_steps).rev() {
            let acts = &policy.actions[k];
            let predicted = Self::rk4(&v, h, |w| {
                (0..w.len())
                    .map(|j| {
                        let a = self.best_action(w, j);
                        self.own_drift(&a, w, j) + self.others_drift(acts, w, j)
                    })
                    .collect()
            });
            let own: Vec<Action> = (0..v.len()).map(|j| self.best_action(&predicted, j)).collect();
            v = Self::rk4(&v, h, |w| {
                (0..w.len())
                    .map(|j| self.own_drift(&own[j], w, j) + self.others_drift(acts, w, j))
                    .collect()
            });
        }
        self.expectation(&v)
    }
}
