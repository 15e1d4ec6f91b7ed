//! Bounded test functions `phi` used by the semigroup estimators.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable description of a built-in test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    /// `tanh(x_k)`
    Tanh { coord: usize },
    /// `cos(freq * x_k)`
    Cos { coord: usize, freq: f64 },
    /// `exp(-|x - center|^2 / (2 width^2))`
    Gaussian { center: Vec<f64>, width: f64 },
    /// Indicator of the closed ball.
    Ball { center: Vec<f64>, radius: f64 },
    Constant { value: f64 },
}

/// A bounded function on state space together with its sup norm.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    sup_norm: f64,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("sup_norm", &self.sup_norm)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    /// A user function with a declared bound `sup |phi| <= sup_norm`.
    pub fn new(name: impl Into<String>, sup_norm: f64, f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>) -> Result<Self> {
        if !(sup_norm.is_finite() && sup_norm >= 0.0) {
            return Err(Error::param("sup_norm", "must be finite and nonnegative"));
        }
        Ok(TestFunction { name: name.into(), sup_norm, f })
    }

    pub fn from_spec(spec: &TestFunctionSpec, dim: usize) -> Result<Self> {
        let check_coord = |k: usize| {
            if k < dim {
                Ok(())
            } else {
                Err(Error::param("coord", format!("{k} is out of range for dimension {dim}")))
            }
        };
        let check_center = |c: &[f64]| {
            if c.len() == dim {
                Ok(())
            } else {
                Err(Error::param("center", format!("must have dimension {dim}")))
            }
        };
        match spec.clone() {
            TestFunctionSpec::Tanh { coord } => {
                check_coord(coord)?;
                Self::new(format!("tanh(x{coord})"), 1.0, Arc::new(move |x: &[f64]| x[coord].tanh()))
            }
            TestFunctionSpec::Cos { coord, freq } => {
                check_coord(coord)?;
                Self::new(format!("cos({freq:?}*x{coord})"), 1.0, Arc::new(move |x: &[f64]| (freq * x[coord]).cos()))
            }
            TestFunctionSpec::Gaussian { center, width } => {
                check_center(&center)?;
                if !(width > 0.0) {
                    return Err(Error::param("width", "must be positive"));
                }
                let name = format!("gaussian(width={width:?})");
                Self::new(
                    name,
                    1.0,
                    Arc::new(move |x: &[f64]| {
                        let d2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                        (-d2 / (2.0 * width * width)).exp()
                    }),
                )
            }
            TestFunctionSpec::Ball { center, radius } => {
                check_center(&center)?;
                if !(radius >= 0.0) {
                    return Err(Error::param("radius", "must be nonnegative"));
                }
                Self::new(
                    format!("ball(radius={radius:?})"),
                    1.0,
                    Arc::new(move |x: &[f64]| {
                        let d2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                        if d2 <= radius * radius {
                            1.0
                        } else {
                            0.0
                        }
                    }),
                )
            }
            TestFunctionSpec::Constant { value } => {
                Self::new(format!("constant({value:?})"), value.abs(), Arc::new(move |_x: &[f64]| value))
            }
        }
    }

    pub fn tanh(coord: usize) -> Self {
        TestFunction {
            name: format!("tanh(x{coord})"),
            sup_norm: 1.0,
            f: Arc::new(move |x: &[f64]| x[coord].tanh()),
        }
    }

    pub fn constant(value: f64) -> Self {
        TestFunction {
            name: format!("constant({value:?})"),
            sup_norm: value.abs(),
            f: Arc::new(move |_x: &[f64]| value),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
