//! Reflection-type coupling of two copies of the jump SDE, coupling-time
//! estimation and the strong Feller modulus.

mod feller;
mod operator;
mod path;

pub use feller::{strong_feller_modulus, ModulusReport, ModulusSizes};
pub use operator::{
    block_covariance, coupling_matrix, g_derivatives, g_functionals, proof_alpha, CouplingParams, GFunctionals,
};
pub use path::{
    coupled_step, estimate_tail, simulate_coupled, simulate_coupled_ensemble, CoupledEnsemble, CoupledEnsembleSpec,
    CoupledPathRecord, CouplingTimes,
};
