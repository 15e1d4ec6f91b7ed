//! Invariant-measure estimation, total variation between empirical
//! measures, exponential rate fits, the drift-condition comparison ODE and
//! the spectral-gap probe.

mod kb;
mod measure;
mod ode;
mod rate;
mod spectral;

pub use kb::{kb_samples, krylov_bogoliubov, marginal_measure, tv_decay, GridChoice, KbMode, KbSpec};
pub use measure::{tv_distance, tv_estimate, EmpiricalMeasure, HistogramGrid, Moments, TvEstimate, MAX_GRID_DIM};
pub use ode::{drift_ode_bound, drift_ode_closed_form, drift_ode_curve, drift_ode_equilibrium};
pub use rate::{rate_fit, DecayPoint, RateFit, RateOptions};
pub use spectral::{spectral_probe, SpectralSeries, SpectralSpec};
