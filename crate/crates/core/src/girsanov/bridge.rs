use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientSet, State};

/// Run-level description of the control: the bridge itself is built per
/// path from the realized state at `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub target: Vec<f64>,
    pub t0: f64,
    pub horizon: f64,
    /// Truncation level `n`: states with `|x| > n` at `t0` restart from 0.
    pub truncation: f64,
}

impl BridgeSpec {
    /// Defaults `t0 = 0.9 T` and `n = 10 (1 + |x0|)`.
    pub fn new(target: Vec<f64>, horizon: f64, x0: &[f64]) -> Self {
        let norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        BridgeSpec { target, t0: 0.9 * horizon, horizon, truncation: 10.0 * (1.0 + norm) }
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn with_truncation(mut self, n: f64) -> Self {
        self.truncation = n;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.target.len() != dim {
            return Err(Error::param(
                "target",
                format!("has dimension {}, model has dimension {dim}", self.target.len()),
            ));
        }
        if !self.target.iter().all(|v| v.is_finite()) {
            return Err(Error::param("target", "must be finite"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::param("horizon", "must be positive and finite"));
        }
        if !(self.t0 >= 0.0 && self.t0 < self.horizon) {
            return Err(Error::param("t0", format!("must lie in [0, {})", self.horizon)));
        }
        if !(self.truncation >= 0.0) {
            return Err(Error::param("truncation", "must be non-negative"));
        }
        Ok(())
    }
}

/// Linear bridge `J` from the truncated start to the target on `[t0, T]`
/// and the control `h(t) = (y - start) / (T - t0) - b(J(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeControl {
    pub t0: f64,
    pub horizon: f64,
    pub truncation: f64,
    pub start: State,
    pub target: State,
    /// True when the realized state exceeded the truncation level.
    pub truncated: bool,
}

/// Builds the bridge from the state `x_t0` observed at `t0`.
pub fn make_bridge(
    x_t0: &State,
    n: f64,
    y: &State,
    t0: f64,
    horizon: f64,
    coeffs: &CoefficientSet,
) -> Result<BridgeControl> {
    let spec = BridgeSpec { target: y.iter().copied().collect(), t0, horizon, truncation: n };
    spec.validate(coeffs.dim())?;
    if x_t0.len() != coeffs.dim() {
        return Err(Error::param("x_t0", "dimension does not match the model"));
    }
    let truncated = !(x_t0.norm() <= n);
    let start = if truncated { State::zeros(x_t0.len()) } else { x_t0.clone() };
    Ok(BridgeControl { t0, horizon, truncation: n, start, target: y.clone(), truncated })
}

impl BridgeControl {
    /// `dJ/dt`, constant on `[t0, T]`.
    pub fn velocity(&self) -> State {
        (&self.target - &self.start) / (self.horizon - self.t0)
    }

    /// `J(t)`; exact at both ends.
    pub fn j(&self, t: f64) -> State {
        let span = self.horizon - self.t0;
        let w_end = (t - self.t0) / span;
        let w_start = (self.horizon - t) / span;
        &self.start * w_start + &self.target * w_end
    }

    /// `h(t)`.
    pub fn h(&self, coeffs: &CoefficientSet, t: f64) -> State {
        self.velocity() - coeffs.drift(&self.j(t))
    }

    /// `sup |h|` over `m + 1` equally spaced points of `[t0, T]`.
    pub fn sup_h(&self, coeffs: &CoefficientSet, m: usize) -> f64 {
        let m = m.max(1);
        (0..=m)
            .map(|k| {
                let t = self.t0 + (self.horizon - self.t0) * k as f64 / m as f64;
                self.h(coeffs, t).norm()
            })
            .fold(0.0, f64::max)
    }
}
