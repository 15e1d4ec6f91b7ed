use serde::{Deserialize, Serialize};

use super::bridge::BridgeSpec;
use super::controlled::{simulate_controlled_ensemble, ControlledEnsembleSpec};
use crate::error::{Error, Result};
use crate::model::CoefficientSet;
use crate::stats::{Proportion, Z95};

/// `[e0 + C (T - t0)]^{exp(-|lambda0| (T - t0))}`.
pub fn bihari_bound(e0: f64, c: f64, lambda0: f64, t0: f64, horizon: f64) -> Result<f64> {
    if !(e0 >= 0.0) {
        return Err(Error::param("e0", "must be non-negative"));
    }
    if !(c >= 0.0) {
        return Err(Error::param("C", "must be non-negative"));
    }
    if !(horizon > t0) {
        return Err(Error::param("t0", "must be smaller than T"));
    }
    let span = horizon - t0;
    Ok((e0 + c * span).powf((-lambda0.abs() * span).exp()))
}

/// `C = 2 lambda1 (2 + R + (T - t0) H)^2` with `R = max(n, |y|)` and
/// `H = (|y| + n) / (T - t0) + sqrt(lambda1) (1 + R)` bounding `sup |h|`
/// for every admissible start.
pub fn calibrate_bihari_constant(coeffs: &CoefficientSet, bridge: &BridgeSpec) -> Result<f64> {
    bridge.validate(coeffs.dim())?;
    let lambda1 = coeffs.constants().lambda1;
    let y = bridge.target.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n = bridge.truncation;
    let span = bridge.horizon - bridge.t0;
    let r = n.max(y);
    let h = (y + n) / span + lambda1.sqrt() * (1.0 + r);
    Ok(2.0 * lambda1 * (2.0 + r + span * h).powi(2))
}

/// Inputs of [`irreducibility_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub x0: Vec<f64>,
    pub target: Vec<f64>,
    pub radius: f64,
    pub horizon: f64,
    pub t0: f64,
    pub truncation: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Constant of the Bihari bound; calibrated from the model when absent.
    pub bihari_constant: Option<f64>,
}

impl ProbeSpec {
    /// Defaults `t0 = 0.9 T`, `n = 10 (1 + |x0|)`, `dt = T / 100`.
    pub fn new(x0: Vec<f64>, target: Vec<f64>, radius: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        let b = BridgeSpec::new(target.clone(), horizon, &x0);
        ProbeSpec {
            x0,
            target,
            radius,
            horizon,
            t0: b.t0,
            truncation: b.truncation,
            dt: horizon / 100.0,
            n_paths,
            seed,
            bihari_constant: None,
        }
    }

    pub fn bridge(&self) -> BridgeSpec {
        BridgeSpec { target: self.target.clone(), t0: self.t0, horizon: self.horizon, truncation: self.truncation }
    }
}

/// Flat record of one probe run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub model: String,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub target: Vec<f64>,
    pub radius: f64,
    pub horizon: f64,
    pub t0: f64,
    pub truncation: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub lambda0: f64,
    pub bihari_constant: f64,
    pub bihari_constant_calibrated: bool,
    pub truncation_error: f64,
    pub truncation_error_stderr: f64,
    pub truncated_paths: usize,
    pub miss_probability: f64,
    pub miss_stderr: f64,
    pub miss_ci_low: f64,
    pub miss_ci_high: f64,
    pub bihari_bound: f64,
    pub chebyshev_bound: f64,
    pub hits: usize,
    pub weighted_estimate: f64,
    pub weighted_stderr: f64,
    pub weighted_ci_low: f64,
    pub weighted_ci_high: f64,
    pub mean_weight: f64,
    pub mean_weight_stderr: f64,
    pub sup_control: f64,
    /// `certified` when the weighted interval excludes 0, else
    /// `positivity-not-demonstrated`.
    pub status: String,
}

impl ProbeReport {
    pub fn certified(&self) -> bool {
        self.status == "certified"
    }
}

/// Controlled-process miss probability, the Chebyshev/Bihari bound and the
/// importance-sampled `p_T(x0, B(y, a))` from one ensemble.
pub fn irreducibility_probe(coeffs: &CoefficientSet, spec: &ProbeSpec) -> Result<ProbeReport> {
    if !(spec.radius > 0.0 && spec.radius.is_finite()) {
        return Err(Error::param("radius", "must be positive and finite"));
    }
    let bridge = spec.bridge();
    let (c, calibrated) = match spec.bihari_constant {
        Some(c) => (c, false),
        None => (calibrate_bihari_constant(coeffs, &bridge)?, true),
    };
    let ens = simulate_controlled_ensemble(
        coeffs,
        &ControlledEnsembleSpec {
            x0: spec.x0.clone(),
            bridge: bridge.clone(),
            dt: spec.dt,
            n_paths: spec.n_paths,
            master_seed: spec.seed,
            checkpoints: vec![spec.horizon],
        },
    )?;
    let t = spec.horizon;
    let ti = ens.checkpoint_index(t)?;
    let n = ens.n_paths();
    let inside = |v: &[f64]| {
        v.iter()
            .zip(&spec.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            < spec.radius
    };
    let hits = (0..n).filter(|&i| inside(ens.value(i, ti))).count();
    let miss = Proportion::new((n - hits) as u64, n as u64);
    let weighted = ens.weighted_expectation(t, |v| if inside(v) { 1.0 } else { 0.0 })?;
    let mean_weight = ens.mean_weight(t)?;
    let e0 = ens.truncation_error();
    let lambda0 = coeffs.constants().lambda0;
    let bound = bihari_bound(e0.value, c, lambda0, spec.t0, spec.horizon)?;
    let (lo, hi) = weighted.ci95();
    let status = if hits > 0 && lo > 0.0 { "certified" } else { "positivity-not-demonstrated" };
    Ok(ProbeReport {
        model: coeffs.label().to_string(),
        seed: spec.seed,
        x0: spec.x0.clone(),
        target: spec.target.clone(),
        radius: spec.radius,
        horizon: spec.horizon,
        t0: spec.t0,
        truncation: spec.truncation,
        dt: spec.dt,
        n_paths: n,
        lambda0,
        bihari_constant: c,
        bihari_constant_calibrated: calibrated,
        truncation_error: e0.value,
        truncation_error_stderr: e0.stderr,
        truncated_paths: ens.truncated,
        miss_probability: miss.estimate,
        miss_stderr: miss.stderr(),
        miss_ci_low: miss.ci_low,
        miss_ci_high: miss.ci_high,
        bihari_bound: bound,
        chebyshev_bound: bound / (spec.radius * spec.radius),
        hits,
        weighted_estimate: weighted.value,
        weighted_stderr: weighted.stderr,
        weighted_ci_low: lo,
        weighted_ci_high: hi,
        mean_weight: mean_weight.value,
        mean_weight_stderr: mean_weight.stderr,
        sup_control: ens.sup_control,
        status: status.to_string(),
    })
}

/// Half-width of the weighted interval in units of the estimate; a
/// diagnostic for weight degeneracy.
pub fn relative_half_width(report: &ProbeReport) -> f64 {
    Z95 * report.weighted_stderr / report.weighted_estimate
}
