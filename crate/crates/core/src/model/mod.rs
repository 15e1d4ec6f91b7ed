//! Coefficient sets, the non-Lipschitz modulus and the hypothesis checker.

mod coeffs;
pub mod families;
mod hypotheses;
mod modulus;

pub use coeffs::{
    CoefficientSet, Constants, JumpKernel, JumpMap, JumpMoment, MarkLaw, MarkSampler, MarkWeight, MatrixField,
    State, VectorField,
};
pub use hypotheses::{
    check_hypotheses, Hypothesis, HypothesisEntry, HypothesisReport, PointCloud, SamplerSpec, Verdict,
};
pub use modulus::{kappa_eval, rho_delta, ModulusKappa};
