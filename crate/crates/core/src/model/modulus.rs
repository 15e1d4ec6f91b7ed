//! The continuity modulus `kappa` and its concave envelope `rho_delta`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Modulus of continuity controlling the one-sided growth of the drift and
/// diffusion differences.
#[derive(Clone)]
pub enum ModulusKappa {
    /// `kappa(x) = c1 * max(log(1/x), k)^(1/beta1)`.
    Log { c1: f64, k: f64, beta1: f64 },
    /// Lipschitz case: `kappa(x) = c`.
    Constant(f64),
    /// Any positive scalar function bounded on `[1, inf)`.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ModulusKappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModulusKappa::Log { c1, k, beta1 } => write!(f, "Log {{ c1: {c1}, k: {k}, beta1: {beta1} }}"),
            ModulusKappa::Constant(c) => write!(f, "Constant({c})"),
            ModulusKappa::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ModulusKappa {
    /// The logarithmic family. `beta1 = 1` is admitted as the boundary case
    /// used by the envelope bound `x^2 kappa(x) <= rho_delta(x^2)`.
    pub fn log_family(c1: f64, k: f64, beta1: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(Error::param("c1", "must be positive and finite"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::param("k", "must be positive and finite"));
        }
        if !(beta1 >= 1.0 && beta1.is_finite()) {
            return Err(Error::param("beta1", "must be >= 1 and finite"));
        }
        Ok(ModulusKappa::Log { c1, k, beta1 })
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param("kappa", "constant modulus must be positive and finite"));
        }
        Ok(ModulusKappa::Constant(c))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        kappa_eval(self, x)
    }

    /// `max kappa(x) / log(1/x)` over a geometric grid from `1e-2` down to
    /// `1e-12`; finite for every admissible modulus.
    pub fn log_ratio_sup(&self) -> Result<f64> {
        let mut sup: f64 = 0.0;
        let mut x: f64 = 1e-2;
        while x >= 1e-12 * (1.0 - 1e-9) {
            sup = sup.max(self.eval(x)? / (1.0 / x).ln());
            x *= 0.1f64.sqrt();
        }
        Ok(sup)
    }

    /// Numerical admissibility audit: positive on a grid over `(0, 1e6]`,
    /// bounded on `[1, 1e6]`, finite log-ratio near the origin.
    pub fn validate(&self) -> Result<()> {
        let mut x = 1e-12;
        while x <= 1e6 {
            let v = self.eval(x)?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("kappa({x}) = {v} is not positive and finite")));
            }
            x *= 10f64.sqrt();
        }
        let r = self.log_ratio_sup()?;
        if !r.is_finite() {
            return Err(Error::Domain("kappa(x)/log(1/x) is unbounded as x -> 0".into()));
        }
        Ok(())
    }
}

/// Evaluates the modulus at `x > 0`.
pub fn kappa_eval(kappa: &ModulusKappa, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("kappa is defined for x > 0, got {x}")));
    }
    Ok(match kappa {
        ModulusKappa::Log { c1, k, beta1 } => c1 * (1.0 / x).ln().max(*k).powf(1.0 / beta1),
        ModulusKappa::Constant(c) => *c,
        ModulusKappa::Custom(f) => f(x),
    })
}

/// Concave envelope
/// `rho_delta(x) = x log(1/x)` for `x <= delta`, and the tangent line
/// `(log(1/delta) - 1) x + delta` beyond it.
pub fn rho_delta(x: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < (-1.0f64).exp()) {
        return Err(Error::param("delta", format!("must lie in (0, e^-1), got {delta}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("rho_delta is defined for x >= 0, got {x}")));
    }
    Ok(if x == 0.0 {
        0.0
    } else if x <= delta {
        x * (1.0 / x).ln()
    } else {
        ((1.0 / delta).ln() - 1.0) * x + delta
    })
}
