//! Built-in coefficient families. Each constructor fills in declared
//! constants that the hypothesis checker is expected to confirm (or, where
//! a hypothesis cannot hold for the family, to refute).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::coeffs::{CoefficientSet, Constants, JumpKernel, State};
use super::modulus::ModulusKappa;
use crate::error::{Error, Result};

/// `b(x) = -theta x`, `sigma = sigma I`, marks uniform on `[-1, 1]^dim` at
/// rate `jump_rate`, `f(x, u) = jump_scale u + jump_gain u_1 x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub dim: usize,
    pub theta: f64,
    pub sigma: f64,
    pub jump_rate: f64,
    pub jump_scale: f64,
    pub jump_gain: f64,
}

impl LinearParams {
    /// The one-dimensional jump Ornstein-Uhlenbeck reference model
    /// `b = -theta x`, constant `sigma`, `f(x, u) = u`, `u ~ U[-1, 1]`.
    pub fn jump_ou(theta: f64, sigma: f64, jump_rate: f64) -> Self {
        LinearParams {
            dim: 1,
            theta,
            sigma,
            jump_rate,
            jump_scale: 1.0,
            jump_gain: 0.0,
        }
    }

    /// Stationary variance `(sigma^2 + rate/3) / (2 theta)` of the jump OU model.
    pub fn jump_ou_stationary_variance(&self) -> f64 {
        (self.sigma * self.sigma + self.jump_rate * self.jump_scale * self.jump_scale / 3.0) / (2.0 * self.theta)
    }
}

fn check_finite(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !v.is_finite() {
            return Err(Error::param(*name, "must be finite"));
        }
    }
    Ok(())
}

/// Uniform-cube moments `E|u|^2 = d/3`, `E|u|^4 = d/5 + d(d-1)/9`.
fn cube_moment(dim: usize, q: u32) -> Option<f64> {
    let d = dim as f64;
    match q {
        2 => Some(d / 3.0),
        4 => Some(d / 5.0 + d * (d - 1.0) / 9.0),
        _ => None,
    }
}

struct AdditiveJumps {
    rate: f64,
    scale: f64,
    gain: f64,
    dim: usize,
}

impl AdditiveJumps {
    fn install(&self, set: CoefficientSet) -> Result<CoefficientSet> {
        if self.rate == 0.0 {
            return Ok(set);
        }
        let (scale, gain, dim, rate) = (self.scale, self.gain, self.dim, self.rate);
        let jump = Arc::new(move |x: &State, u: &State| u * scale + x * (gain * u[0]));
        let kernel = JumpKernel::uniform(rate, -1.0, 1.0, dim)?;
        let compensator = Arc::new(move |_x: &State| DVector::zeros(dim));
        let moment = Arc::new(move |x: &State, q: u32| match q {
            2 => Some(
                rate * (scale * scale * dim as f64 / 3.0
                    + 2.0 * scale * gain * x[0] / 3.0
                    + gain * gain * x.norm_squared() / 3.0),
            ),
            4 if gain == 0.0 => cube_moment(dim, 4).map(|m| rate * scale.powi(4) * m),
            _ => None,
        });
        Ok(set
            .with_jumps(jump, kernel)
            .with_jump_integrals(Some(compensator), Some(moment))
            .with_jump_lipschitz(Arc::new(move |u: &State| (gain * u[0]).abs().max(scale.abs() * u.norm()))))
    }

    /// `sup_u L(u)` over the closed cube.
    fn sup_lipschitz(&self) -> f64 {
        if self.rate == 0.0 {
            0.0
        } else {
            self.gain.abs().max(self.scale.abs() * (self.dim as f64).sqrt())
        }
    }

    /// Growth constant for `int |f|^q nu <= lambda1 (1+|x|)^q`, q = 2, 4.
    fn growth(&self) -> f64 {
        let m = self.sup_lipschitz();
        (self.rate * m * m).max(self.rate * m.powi(4))
    }

    fn gamma(&self) -> f64 {
        let s = self.sup_lipschitz();
        if s < 1.0 {
            (0.5 * (1.0 + s)).max(1e-3)
        } else {
            0.5
        }
    }
}

fn isotropic(dim: usize, sigma: f64) -> Arc<dyn Fn(&State) -> DMatrix<f64> + Send + Sync> {
    Arc::new(move |_x: &State| DMatrix::identity(dim, dim) * sigma)
}

pub fn linear(p: LinearParams) -> Result<CoefficientSet> {
    check_finite(&[
        ("theta", p.theta),
        ("sigma", p.sigma),
        ("jump_rate", p.jump_rate),
        ("jump_scale", p.jump_scale),
        ("jump_gain", p.jump_gain),
    ])?;
    let LinearParams { dim, theta, sigma, jump_rate, jump_scale, jump_gain } = p;
    let label = format!(
        "linear(dim={dim},theta={theta:?},sigma={sigma:?},jump_rate={jump_rate:?},jump_scale={jump_scale:?},jump_gain={jump_gain:?})"
    );
    let jumps = AdditiveJumps { rate: jump_rate, scale: jump_scale, gain: jump_gain, dim };
    let d = dim as f64;
    let set = CoefficientSet::new(label, dim, Arc::new(move |x: &State| x * (-theta)), isotropic(dim, sigma))?;
    let set = jumps.install(set)?;
    let jump_diff = jump_rate * jump_gain * jump_gain / 3.0;
    let cross = jump_rate * (jump_scale * jump_gain).abs() / 3.0;
    let lambda3 = 2.0 * theta - jump_rate * jump_gain * jump_gain / 3.0 - cross;
    let constants = Constants {
        lambda0: if jump_diff > 0.0 { 0.5 * jump_diff * 1.25 } else { 0.0 },
        lambda1: positive_or_one(theta.powi(2).max(sigma * sigma * d).max(jumps.growth())),
        lambda2: if sigma > 0.0 { sigma * sigma } else { 1.0 },
        lambda3: if lambda3 > 0.0 { lambda3 } else { 1.0 },
        lambda4: sigma * sigma * d + jump_rate * jump_scale * jump_scale * d / 3.0 + cross,
        r: 2.0,
        gamma: jumps.gamma(),
    };
    let stiffness = if theta > 0.0 { Some(theta) } else { None };
    Ok(set
        .with_constants(constants)?
        .with_kappa(ModulusKappa::Constant(1.0))
        .with_stiffness(stiffness))
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        1.0
    }
}

/// Standard Brownian motion in `R^dim`.
pub fn brownian(dim: usize) -> Result<CoefficientSet> {
    let set = CoefficientSet::new(
        format!("brownian(dim={dim})"),
        dim,
        Arc::new(move |_x: &State| DVector::zeros(dim)),
        isotropic(dim, 1.0),
    )?;
    set.with_constants(Constants {
        lambda1: dim as f64,
        ..Constants::default()
    })
}

/// `b(x) = -theta x - coefficient x |x|^(power-1)`, `sigma = sigma I`,
/// additive jumps `f(x,u) = jump_scale u` with uniform cube marks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialParams {
    pub dim: usize,
    pub theta: f64,
    pub coefficient: f64,
    pub power: f64,
    pub sigma: f64,
    pub jump_rate: f64,
    pub jump_scale: f64,
}

impl PolynomialParams {
    /// `b(x) = -x|x|`, `sigma = 1`, `f(x,u) = u`: the `r = 3` reference model.
    pub fn superlinear(jump_rate: f64) -> Self {
        PolynomialParams {
            dim: 1,
            theta: 0.0,
            coefficient: 1.0,
            power: 2.0,
            sigma: 1.0,
            jump_rate,
            jump_scale: 1.0,
        }
    }
}

pub fn polynomial_drift(p: PolynomialParams) -> Result<CoefficientSet> {
    check_finite(&[
        ("theta", p.theta),
        ("coefficient", p.coefficient),
        ("power", p.power),
        ("sigma", p.sigma),
        ("jump_rate", p.jump_rate),
        ("jump_scale", p.jump_scale),
    ])?;
    if p.power < 1.0 {
        return Err(Error::param("power", "must be >= 1"));
    }
    if p.coefficient < 0.0 || p.theta < 0.0 {
        return Err(Error::param("coefficient", "theta and coefficient must be nonnegative"));
    }
    let PolynomialParams { dim, theta, coefficient, power, sigma, jump_rate, jump_scale } = p;
    let label = format!(
        "polynomial-drift(dim={dim},theta={theta:?},coefficient={coefficient:?},power={power:?},sigma={sigma:?},jump_rate={jump_rate:?},jump_scale={jump_scale:?})"
    );
    let drift = Arc::new(move |x: &State| {
        let n = x.norm();
        x * (-theta - coefficient * n.powf(power - 1.0))
    });
    let set = CoefficientSet::new(label, dim, drift, isotropic(dim, sigma))?;
    let jumps = AdditiveJumps { rate: jump_rate, scale: jump_scale, gain: 0.0, dim };
    let set = jumps.install(set)?;
    let d = dim as f64;
    let (r, lambda3) = if coefficient > 0.0 {
        (power + 1.0, 2.0 * coefficient)
    } else {
        (2.0, positive_or_one(2.0 * theta))
    };
    let constants = Constants {
        lambda0: 0.0,
        // Linear growth is only a claim here: it fails whenever power > 1.
        lambda1: positive_or_one((theta + coefficient).powi(2).max(sigma * sigma * d).max(jumps.growth())),
        lambda2: if sigma > 0.0 { sigma * sigma } else { 1.0 },
        lambda3,
        lambda4: sigma * sigma * d + jump_rate * jump_scale * jump_scale * d / 3.0,
        r,
        gamma: jumps.gamma(),
    };
    Ok(set.with_constants(constants)?.with_kappa(ModulusKappa::Constant(1.0)))
}

/// `b_i(x) = -theta x_i + eps x_i kappa(|x_i|)` with the logarithmic modulus,
/// `sigma(x) = diag(sigma + eta cos(x_i))`, additive uniform jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogModulusParams {
    pub dim: usize,
    pub theta: f64,
    pub eps: f64,
    pub sigma: f64,
    pub eta: f64,
    pub c1: f64,
    pub k: f64,
    pub beta1: f64,
    pub jump_rate: f64,
    pub jump_scale: f64,
}

impl Default for LogModulusParams {
    fn default() -> Self {
        LogModulusParams {
            dim: 1,
            theta: 1.0,
            eps: 0.2,
            sigma: 1.0,
            eta: 0.2,
            c1: 1.0,
            k: 1.0,
            beta1: 2.0,
            jump_rate: 1.0,
            jump_scale: 0.5,
        }
    }
}

pub fn log_modulus_perturbed(p: LogModulusParams) -> Result<CoefficientSet> {
    check_finite(&[
        ("theta", p.theta),
        ("eps", p.eps),
        ("sigma", p.sigma),
        ("eta", p.eta),
        ("jump_rate", p.jump_rate),
        ("jump_scale", p.jump_scale),
    ])?;
    let kappa = ModulusKappa::log_family(p.c1, p.k, p.beta1)?;
    if !(p.sigma > p.eta && p.eta >= 0.0) {
        return Err(Error::param("eta", "need 0 <= eta < sigma for a nondegenerate diffusion"));
    }
    if p.eps < 0.0 {
        return Err(Error::param("eps", "must be nonnegative"));
    }
    let LogModulusParams { dim, theta, eps, sigma, eta, c1, k, beta1, jump_rate, jump_scale } = p;
    let label = format!(
        "log-modulus-perturbed(dim={dim},theta={theta:?},eps={eps:?},sigma={sigma:?},eta={eta:?},c1={c1:?},k={k:?},beta1={beta1:?},jump_rate={jump_rate:?},jump_scale={jump_scale:?})"
    );
    let kd = kappa.clone();
    let drift = Arc::new(move |x: &State| {
        x.map(|xi| {
            let pert = if xi == 0.0 { 0.0 } else { xi * kd.eval(xi.abs()).unwrap_or(0.0) };
            -theta * xi + eps * pert
        })
    });
    let diffusion = Arc::new(move |x: &State| DMatrix::from_diagonal(&x.map(|xi| sigma + eta * xi.cos())));
    let set = CoefficientSet::new(label, dim, drift, diffusion)?;
    let jumps = AdditiveJumps { rate: jump_rate, scale: jump_scale, gain: 0.0, dim };
    let set = jumps.install(set)?;

    let d = dim as f64;
    let lin = c1 * k.powf(1.0 / beta1);
    let lambda2 = (0.5 * (sigma - eta)).powi(2);
    let sig_lambda_lip = if eta > 0.0 {
        (sigma + eta) * eta / ((sigma - eta) * 0.75f64.sqrt())
    } else {
        0.0
    };
    // Modulus constant 2 for x kappa(|x|), a factor 2 for splitting across
    // coordinates, and a 1.5 safety margin; confirmed by the checker.
    let lambda0 = 1.5 * (2.0 * eps * 2.0 * 2.0 + eta.powi(2).max(sig_lambda_lip.powi(2)) / lin);
    let lambda3 = 2.0 * theta - 2.0 * eps * c1 * (k.powf(1.0 / beta1) + 0.5);
    let constants = Constants {
        lambda0,
        lambda1: positive_or_one(
            (2.0 * (theta + eps * lin).powi(2) + 2.0 * (eps * c1).powi(2) * d + d * (sigma + eta).powi(2))
                .max(jumps.growth()),
        ),
        lambda2,
        lambda3: if lambda3 > 0.0 { lambda3 } else { 1.0 },
        lambda4: eps * c1 * d + d * (sigma + eta).powi(2) + jump_rate * jump_scale * jump_scale * d / 3.0,
        r: 2.0,
        gamma: jumps.gamma(),
    };
    Ok(set.with_constants(constants)?.with_kappa(kappa))
}
