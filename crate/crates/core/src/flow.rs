//! Uniform time grids and piecewise-linear flows of probability vectors.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::simplex::{euclidean, Simplex};

/// Uniform grid `t_k = T k / n` on `[0, T]` with `n` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(MfgError::DegenerateHorizon(horizon));
        }
        if n_steps == 0 {
            return Err(MfgError::InvalidParameter("n_steps must be at least 1".into()));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.n_steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }

    /// Interval `[t_k, t_{k+1})` containing `t`; `t = T` maps to the last interval.
    pub fn interval(&self, t: f64) -> usize {
        let k = (t / self.dt()).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.n_steps - 1)
        }
    }
}

/// A flow `t -> m(t)` sampled at the nodes of a [`TimeGrid`], linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    grid: TimeGrid,
    values: Vec<Simplex>,
}

impl MeasureFlow {
    pub fn new(grid: TimeGrid, values: Vec<Simplex>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(MfgError::InvalidParameter(format!(
                "flow has {} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        let d = values[0].dim();
        if values.iter().any(|v| v.dim() != d) {
            return Err(MfgError::InvalidParameter("flow values differ in dimension".into()));
        }
        Ok(MeasureFlow { grid, values })
    }

    /// The flow that stays at `p` for all times.
    pub fn constant(grid: TimeGrid, p: Simplex) -> Self {
        MeasureFlow {
            grid,
            values: vec![p; grid.len()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Simplex] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn node(&self, k: usize) -> &Simplex {
        &self.values[k]
    }

    pub fn initial(&self) -> &Simplex {
        &self.values[0]
    }

    pub fn terminal(&self) -> &Simplex {
        &self.values[self.grid.n_steps]
    }

    /// Value at `t_k + frac * dt`, `frac` in `[0, 1]`.
    pub fn lerp(&self, k: usize, frac: f64) -> Simplex {
        if frac <= 0.0 || k == self.grid.n_steps {
            return self.values[k].clone();
        }
        if frac >= 1.0 {
            return self.values[k + 1].clone();
        }
        self.values[k].mix(&self.values[k + 1], frac)
    }

    /// Linear interpolation at an arbitrary time in `[0, T]`.
    pub fn at(&self, t: f64) -> Result<Simplex> {
        if !(t >= 0.0 && t <= self.grid.horizon) {
            return Err(MfgError::OutOfRange {
                t,
                horizon: self.grid.horizon,
            });
        }
        let k = self.grid.interval(t);
        let frac = (t - self.grid.time(k)) / self.grid.dt();
        Ok(self.lerp(k, frac.clamp(0.0, 1.0)))
    }

    /// Sup over nodes of the Euclidean distance to another flow on the same grid.
    pub fn sup_distance(&self, other: &MeasureFlow) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(p, q)| euclidean(p.as_slice(), q.as_slice()))
            .fold(0.0, f64::max)
    }

    /// Node-wise convex combination `(1 - w) * self + w * other`.
    pub fn mix(&self, other: &MeasureFlow, w: f64) -> MeasureFlow {
        MeasureFlow {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(p, q)| p.mix(q, w))
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("p{i}")));
        w.write_record(&header)?;
        for (t, p) in self.grid.times().zip(&self.values) {
            let mut row = vec![fmt_f64(t)];
            row.extend(p.as_slice().iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let nums = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| MfgError::Schema(format!("flow csv: {e}")))?;
            if nums.len() < 3 {
                return Err(MfgError::Schema("flow csv needs t and at least two states".into()));
            }
            times.push(nums[0]);
            values.push(Simplex::new(nums[1..].to_vec())?);
        }
        if times.len() < 2 {
            return Err(MfgError::Schema("flow csv needs at least two rows".into()));
        }
        let grid = TimeGrid::new(*times.last().unwrap(), times.len() - 1)?;
        for (k, t) in times.iter().enumerate() {
            if (t - grid.time(k)).abs() > 1e-9 * grid.horizon.max(1.0) {
                return Err(MfgError::Schema(format!("flow csv row {k} is off the uniform grid")));
            }
        }
        MeasureFlow::new(grid, values)
    }
}

/// Result of a discrete Lipschitz check on a flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Largest `|m(t_{k+1}) - m(t_k)| / dt` over the grid, compared to `bound`.
pub fn flow_lipschitz_check(flow: &MeasureFlow, bound: f64) -> LipschitzReport {
    const TOL: f64 = 1e-9;
    let dt = flow.grid.dt();
    let max_ratio = flow
        .values
        .windows(2)
        .map(|w| euclidean(w[0].as_slice(), w[1].as_slice()) / dt)
        .fold(0.0, f64::max);
    LipschitzReport {
        max_ratio,
        bound,
        pass: max_ratio <= bound + TOL,
    }
}

/// Fixed 17-significant-digit scientific format used by every CSV artifact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
