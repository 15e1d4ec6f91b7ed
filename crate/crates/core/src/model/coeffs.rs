use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::modulus::ModulusKappa;
use crate::error::{Error, Result};

pub type State = DVector<f64>;
pub type VectorField = Arc<dyn Fn(&State) -> State + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;
pub type JumpMap = Arc<dyn Fn(&State, &State) -> State + Send + Sync>;
pub type MarkSampler = Arc<dyn Fn(&mut dyn RngCore) -> State + Send + Sync>;
pub type MarkWeight = Arc<dyn Fn(&State) -> f64 + Send + Sync>;
/// `(x, q) -> integral of |f(x,u)|^q nu(du)` when known in closed form.
pub type JumpMoment = Arc<dyn Fn(&State, u32) -> Option<f64> + Send + Sync>;

/// Law of the marks, normalized to a probability on `U_0`.
#[derive(Clone)]
pub enum MarkLaw {
    /// Uniform on the cube `[lo, hi]^dim`.
    Uniform { lo: f64, hi: f64, dim: usize },
    Custom(MarkSampler),
}

impl fmt::Debug for MarkLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkLaw::Uniform { lo, hi, dim } => write!(f, "Uniform([{lo}, {hi}]^{dim})"),
            MarkLaw::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Finite-activity Poisson random measure on the mark space `U_0`: the total
/// rate `nu(U_0)` together with the normalized mark law.
#[derive(Clone, Debug)]
pub struct JumpKernel {
    total_rate: f64,
    law: MarkLaw,
}

impl JumpKernel {
    /// A kernel without jumps.
    pub fn none() -> Self {
        JumpKernel {
            total_rate: 0.0,
            law: MarkLaw::Uniform { lo: 0.0, hi: 0.0, dim: 1 },
        }
    }

    pub fn uniform(total_rate: f64, lo: f64, hi: f64, dim: usize) -> Result<Self> {
        check_rate(total_rate)?;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::param("marks", format!("invalid uniform range [{lo}, {hi}]")));
        }
        if dim == 0 {
            return Err(Error::param("marks", "mark dimension must be positive"));
        }
        Ok(JumpKernel {
            total_rate,
            law: MarkLaw::Uniform { lo, hi, dim },
        })
    }

    pub fn custom(total_rate: f64, sampler: MarkSampler) -> Result<Self> {
        check_rate(total_rate)?;
        Ok(JumpKernel {
            total_rate,
            law: MarkLaw::Custom(sampler),
        })
    }

    /// `nu(U_0)`, jumps per unit time.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn law(&self) -> &MarkLaw {
        &self.law
    }

    /// Draws one mark from `nu / nu(U_0)`.
    pub fn sample_mark<R: RngCore>(&self, rng: &mut R) -> State {
        match &self.law {
            MarkLaw::Uniform { lo, hi, dim } => {
                DVector::from_fn(*dim, |_, _| lo + (hi - lo) * rng.random::<f64>())
            }
            MarkLaw::Custom(sampler) => sampler(rng),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::param(
            "total_rate",
            format!("jump activity must be finite and nonnegative, got {rate}"),
        ));
    }
    Ok(())
}

/// The declared structural constants of a model. They are claims to be
/// audited by [`crate::model::check_hypotheses`], not derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub r: f64,
    pub gamma: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            lambda0: 0.0,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 0.0,
            r: 2.0,
            gamma: 0.5,
        }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("r", self.r),
            ("gamma", self.gamma),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::param(*name, "must be finite"));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if v <= 0.0 {
                return Err(Error::param(name, "must be strictly positive"));
            }
        }
        if self.lambda4 < 0.0 {
            return Err(Error::param("lambda4", "must be nonnegative"));
        }
        if self.r < 2.0 {
            return Err(Error::param("r", "must be >= 2"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A model `dX = b(X) dt + sigma(X) dW + int f(X-, u) N~(dt, du)` together
/// with its declared constants, modulus and jump Lipschitz profile `L(u)`.
#[derive(Clone)]
pub struct CoefficientSet {
    label: String,
    dim: usize,
    drift: VectorField,
    diffusion: MatrixField,
    jump: JumpMap,
    kernel: JumpKernel,
    constants: Constants,
    kappa: ModulusKappa,
    jump_lipschitz: MarkWeight,
    compensator: Option<VectorField>,
    jump_moment: Option<JumpMoment>,
    stiffness: Option<f64>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("kernel", &self.kernel)
            .field("constants", &self.constants)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// A pure diffusion model; jumps, constants and the rest are added with
    /// the `with_*` builders.
    pub fn new(label: impl Into<String>, dim: usize, drift: VectorField, diffusion: MatrixField) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "state dimension must be positive"));
        }
        Ok(CoefficientSet {
            label: label.into(),
            dim,
            drift,
            diffusion,
            jump: Arc::new(move |_x: &State, _u: &State| DVector::zeros(dim)),
            kernel: JumpKernel::none(),
            constants: Constants::default(),
            kappa: ModulusKappa::Constant(1.0),
            jump_lipschitz: Arc::new(|_u: &State| 0.0),
            compensator: Some(Arc::new(move |_x: &State| DVector::zeros(dim))),
            jump_moment: Some(Arc::new(|_x: &State, _q| Some(0.0))),
            stiffness: None,
        })
    }

    /// Installs the jump part. Closed-form compensator and moments are
    /// cleared; supply them again with [`Self::with_jump_integrals`].
    pub fn with_jumps(mut self, jump: JumpMap, kernel: JumpKernel) -> Self {
        self.jump = jump;
        self.kernel = kernel;
        self.compensator = None;
        self.jump_moment = None;
        self
    }

    /// Closed forms for `int f(x,u) nu(du)` and `int |f(x,u)|^q nu(du)`.
    pub fn with_jump_integrals(mut self, compensator: Option<VectorField>, moment: Option<JumpMoment>) -> Self {
        self.compensator = compensator;
        self.jump_moment = moment;
        self
    }

    pub fn with_constants(mut self, constants: Constants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn with_kappa(mut self, kappa: ModulusKappa) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_jump_lipschitz(mut self, l: MarkWeight) -> Self {
        self.jump_lipschitz = l;
        self
    }

    /// Declared bound on the drift's stiffness; the explicit scheme refuses
    /// steps larger than `1 / (4 * stiffness)`.
    pub fn with_stiffness(mut self, stiffness: Option<f64>) -> Self {
        self.stiffness = stiffness;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn kappa(&self) -> &ModulusKappa {
        &self.kappa
    }

    pub fn kernel(&self) -> &JumpKernel {
        &self.kernel
    }

    pub fn stiffness(&self) -> Option<f64> {
        self.stiffness
    }

    pub fn drift(&self, x: &State) -> State {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: &State) -> DMatrix<f64> {
        (self.diffusion)(x)
    }

    /// `a(x) = sigma(x) sigma(x)^T`.
    pub fn diffusion_covariance(&self, x: &State) -> DMatrix<f64> {
        let s = self.diffusion(x);
        &s * s.transpose()
    }

    pub fn jump(&self, x: &State, u: &State) -> State {
        (self.jump)(x, u)
    }

    pub fn jump_lipschitz(&self, u: &State) -> f64 {
        (self.jump_lipschitz)(u)
    }

    pub fn has_jumps(&self) -> bool {
        self.kernel.total_rate > 0.0
    }

    /// Closed-form compensator `int f(x,u) nu(du)`, when available.
    pub fn analytic_compensator(&self, x: &State) -> Option<State> {
        if !self.has_jumps() {
            return Some(DVector::zeros(self.dim));
        }
        self.compensator.as_ref().map(|c| c(x))
    }

    /// Closed-form `int |f(x,u)|^q nu(du)`, when available.
    pub fn analytic_jump_moment(&self, x: &State, q: u32) -> Option<f64> {
        if !self.has_jumps() {
            return Some(0.0);
        }
        self.jump_moment.as_ref().and_then(|m| m(x, q))
    }

    /// Checks that a state is finite, naming it in the error otherwise.
    pub(crate) fn ensure_finite(what: &str, x: &State, v: &[f64]) -> Result<()> {
        if v.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::Evaluation {
                what: what.to_string(),
                point: x.iter().copied().collect(),
            })
        }
    }
}
