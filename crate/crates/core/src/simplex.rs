//! Probability vectors on a finite state space.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};

/// Tolerance on the total mass of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over `d` states: nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_probability(&p).map_err(MfgError::NonSimplex)?;
        Ok(Simplex(p))
    }

    /// Point mass on state `x`.
    pub fn vertex(d: usize, x: usize) -> Self {
        let mut p = vec![0.0; d];
        p[x] = 1.0;
        Simplex(p)
    }

    pub fn uniform(d: usize) -> Self {
        Simplex(vec![1.0 / d as f64; d])
    }

    /// Clamps entries in `[-tol, 0)` to zero and rescales to unit mass.
    ///
    /// Returns the clamped vector together with the absolute mass correction
    /// that was applied.
    pub fn renormalized(mut p: Vec<f64>) -> Result<(Self, f64)> {
        for v in p.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total: f64 = p.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(MfgError::NonSimplex(format!("cannot renormalize mass {total}")));
        }
        for v in p.iter_mut() {
            *v /= total;
        }
        Ok((Simplex(p), (total - 1.0).abs()))
    }

    /// Empirical measure of an occupancy vector.
    pub fn from_counts(counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        debug_assert!(total > 0);
        let inv = 1.0 / total as f64;
        Simplex(counts.iter().map(|&c| c as f64 * inv).collect())
    }

    /// Convex combination `(1 - w) * self + w * other`.
    pub fn mix(&self, other: &Simplex, w: f64) -> Simplex {
        debug_assert!((0.0..=1.0).contains(&w));
        let p: Vec<f64> = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| ((1.0 - w) * a + w * b).max(0.0))
            .collect();
        debug_assert!(check_probability(&p).is_ok());
        Simplex(p)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, g: &[f64]) -> f64 {
        self.0.iter().zip(g).map(|(p, v)| p * v).sum()
    }
}

impl std::ops::Index<usize> for Simplex {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Simplex {
    type Error = MfgError;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        Simplex::new(p)
    }
}

impl From<Simplex> for Vec<f64> {
    fn from(p: Simplex) -> Vec<f64> {
        p.0
    }
}

fn check_probability(p: &[f64]) -> std::result::Result<(), String> {
    if p.is_empty() {
        return Err("empty vector".into());
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(format!("component {i} is {v}"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(format!("mass {total} differs from 1"));
    }
    Ok(())
}

/// Euclidean distance between two probability vectors.
pub fn simplex_distance(p: &Simplex, q: &Simplex) -> f64 {
    euclidean(p.as_slice(), q.as_slice())
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
