use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{sigma_lambda, SymmetricMatrix};
use crate::model::{CoefficientSet, State};

/// Parameters of the reflection-type coupling started from `(x0, y0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingParams {
    /// Coupling neighbourhood, in `(0, e^-1)`.
    pub delta: f64,
    /// Exponent in `u_delta`, in `(0, 1)`.
    pub alpha: f64,
    /// Distance at which the pair is declared coupled; at most `delta * 1e-3`.
    pub couple_eps: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    /// Glue the pair at the coupling time. Disable to study the marginals.
    pub glue: bool,
    /// Also detect meetings inside a step with the Brownian-bridge
    /// crossing probability of the projected distance.
    pub bridge_detection: bool,
}

impl CouplingParams {
    /// Defaults: `alpha = 0.5`, `couple_eps = delta * 1e-4`, gluing and
    /// bridge detection on.
    pub fn new(x0: Vec<f64>, y0: Vec<f64>, delta: f64) -> Result<Self> {
        let p = CouplingParams {
            delta,
            alpha: 0.5,
            couple_eps: delta * 1e-4,
            x0,
            y0,
            glue: true,
            bridge_detection: true,
        };
        p.validate(p.x0.len())?;
        Ok(p)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate(self.x0.len())?;
        Ok(self)
    }

    pub fn without_glue(mut self) -> Self {
        self.glue = false;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < (-1f64).exp()) {
            return Err(Error::param("delta", format!("must lie in (0, e^-1), got {}", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.couple_eps > 0.0 && self.couple_eps <= self.delta * 1e-3) {
            return Err(Error::param("couple_eps", "must lie in (0, delta * 1e-3]"));
        }
        if self.x0.len() != dim || self.y0.len() != dim {
            return Err(Error::param("x0", format!("initial pair must have dimension {dim}")));
        }
        if !self.x0.iter().chain(&self.y0).all(|v| v.is_finite()) {
            return Err(Error::param("x0", "initial pair must be finite"));
        }
        let gap = self.initial_gap();
        if gap > self.delta {
            return Err(Error::param(
                "y0",
                format!("|x0 - y0| = {gap} exceeds delta = {}", self.delta),
            ));
        }
        Ok(())
    }

    pub fn initial_gap(&self) -> f64 {
        self.x0.iter().zip(&self.y0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// `beta^2 = (|x0 - y0| / delta)^alpha`, so that `u_delta = beta u`.
    pub fn beta_squared(&self) -> f64 {
        (self.initial_gap() / self.delta).powf(self.alpha)
    }
}

/// `alpha = exp(-(1 + delta)(|lambda0| + 2C) t) / 3` for a user-supplied `C`.
pub fn proof_alpha(t: f64, c: f64, lambda0: f64, delta: f64) -> Result<f64> {
    if !(t >= 0.0 && c >= 0.0 && delta > 0.0) {
        return Err(Error::param("t", "t, C must be nonnegative and delta positive"));
    }
    Ok((-(1.0 + delta) * (lambda0.abs() + 2.0 * c) * t).exp() / 3.0)
}

fn unit_direction(x: &State, y: &State) -> Result<State> {
    let diff = x - y;
    let r = diff.norm();
    if r == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(diff / r)
}

fn degeneracy(x: &State, y: &State, e: Error) -> Error {
    Error::CouplingDegeneracy {
        x: x.iter().copied().collect(),
        y: y.iter().copied().collect(),
        reason: e.to_string(),
    }
}

pub(crate) struct OperatorParts {
    pub u: State,
    pub a_x: DMatrix<f64>,
    pub a_y: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub sl_x: SymmetricMatrix,
    pub sl_y: SymmetricMatrix,
}

pub(crate) fn operator_parts(x: &State, y: &State, coeffs: &CoefficientSet, params: &CouplingParams) -> Result<OperatorParts> {
    let u = unit_direction(x, y)?;
    let lambda2 = coeffs.constants().lambda2;
    let (sx, sy) = (coeffs.diffusion(x), coeffs.diffusion(y));
    let sl_x = sigma_lambda(&sx, lambda2).map_err(|e| degeneracy(x, y, e))?;
    let sl_y = sigma_lambda(&sy, lambda2).map_err(|e| degeneracy(x, y, e))?;
    let d = x.len();
    let beta2 = params.beta_squared();
    let c = (DMatrix::identity(d, d) - &u * u.transpose() * (2.0 * beta2)) * lambda2
        + sl_x.as_matrix() * sl_y.as_matrix().transpose();
    Ok(OperatorParts {
        u,
        a_x: &sx * sx.transpose(),
        a_y: &sy * sy.transpose(),
        c,
        sl_x,
        sl_y,
    })
}

/// `c(x, y) = lambda2 (I - 2 u_delta u_delta^T) + sigma_l(x) sigma_l(y)^T`.
pub fn coupling_matrix(x: &State, y: &State, coeffs: &CoefficientSet, params: &CouplingParams) -> Result<DMatrix<f64>> {
    Ok(operator_parts(x, y, coeffs, params)?.c)
}

/// The block covariance `[[a(x), c], [c^T, a(y)]]` of the coupled noise.
pub fn block_covariance(x: &State, y: &State, coeffs: &CoefficientSet, params: &CouplingParams) -> Result<SymmetricMatrix> {
    let p = operator_parts(x, y, coeffs, params)?;
    Ok(assemble_block(&p))
}

pub(crate) fn assemble_block(p: &OperatorParts) -> SymmetricMatrix {
    let d = p.a_x.nrows();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&p.a_x);
    m.view_mut((d, d), (d, d)).copy_from(&p.a_y);
    m.view_mut((d, 0), (d, d)).copy_from(&p.c.transpose());
    SymmetricMatrix::from_lower(m).expect("block matrix is square")
}

/// The scalar and matrix functionals of the distance `r = |x - y|` that
/// appear in the generator computation for `g(r) = r / (1 + r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GFunctionals {
    pub r: f64,
    pub g: f64,
    /// `g'(r) = 1 / (1 + r)^2`
    pub g1: f64,
    /// `g''(r) = -2 / (1 + r)^3`
    pub g2: f64,
    /// `G = a(x) + a(y) - c - c^T`, row-major.
    pub big_g: Vec<f64>,
    /// `<u, G u>`
    pub g_bar: f64,
    pub trace_g: f64,
    /// `<x - y, b(x) - b(y)>`
    pub f: f64,
    /// `||sigma_l(x) - sigma_l(y)||_HS^2`
    pub sigma_lambda_gap: f64,
}

/// `g(r) = r / (1 + r)` with its first two derivatives.
pub fn g_derivatives(r: f64) -> (f64, f64, f64) {
    (r / (1.0 + r), 1.0 / (1.0 + r).powi(2), -2.0 / (1.0 + r).powi(3))
}

pub fn g_functionals(x: &State, y: &State, coeffs: &CoefficientSet, params: &CouplingParams) -> Result<GFunctionals> {
    let p = operator_parts(x, y, coeffs, params)?;
    let r = (x - y).norm();
    let (g, g1, g2) = g_derivatives(r);
    let big_g = &p.a_x + &p.a_y - &p.c - p.c.transpose();
    let g_bar = p.u.dot(&(&big_g * &p.u));
    let gap = p.sl_x.as_matrix() - p.sl_y.as_matrix();
    Ok(GFunctionals {
        r,
        g,
        g1,
        g2,
        trace_g: big_g.trace(),
        big_g: big_g.transpose().as_slice().to_vec(),
        g_bar,
        f: (x - y).dot(&(coeffs.drift(x) - coeffs.drift(y))),
        sigma_lambda_gap: gap.norm_squared(),
    })
}
