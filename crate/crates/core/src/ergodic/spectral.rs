use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::measure::EmpiricalMeasure;
use super::rate::{rate_fit, DecayPoint, RateFit, RateOptions};
use crate::error::{Error, Result};
use crate::model::CoefficientSet;
use crate::rng::substream;
use crate::sim::{simulate_ensemble, EnsembleSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSpec {
    pub times: Vec<f64>,
    pub dt: f64,
    pub paths_per_cell: usize,
    /// Cells lighter than this are skipped.
    pub min_mass: f64,
    /// Exponents of the `L^gamma(mu)` norms.
    pub gammas: Vec<f64>,
    pub seed: u64,
}

/// `||p_t phi - mu(p_t phi)||_{L^gamma(mu)}` over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSeries {
    pub gamma: f64,
    /// `mu(p_t phi)` per time, equal to `mu(phi)` when `mu` is invariant.
    pub mu_phi: Vec<f64>,
    pub cells_used: usize,
    /// Norms with the Monte Carlo noise contribution removed.
    pub points: Vec<DecayPoint>,
    /// Norms as measured.
    pub raw: Vec<f64>,
    /// `(sum_c mu_c E|Z|^gamma se_c^gamma)^{1/gamma}`, the noise level of
    /// the raw norms.
    pub noise: Vec<f64>,
    /// Fit of the series itself, absent when the signal is too short.
    pub fit: Option<RateFit>,
    /// `C exp(-alpha t / gamma)` from the supplied reference fit.
    pub reference: Option<Vec<f64>>,
}

/// `E|Z|^gamma` for a standard normal `Z`.
fn normal_abs_moment(g: f64) -> f64 {
    2f64.powf(g / 2.0) * gamma((g + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// Starts `paths_per_cell` paths at the center of every cell of `mu` and
/// measures how fast `p_t phi` approaches `mu(phi)` in `L^gamma(mu)`.
pub fn spectral_probe(
    coeffs: &CoefficientSet,
    mu: &EmpiricalMeasure,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    spec: &SpectralSpec,
    reference: Option<&RateFit>,
) -> Result<Vec<SpectralSeries>> {
    if spec.times.is_empty() || spec.paths_per_cell < 2 {
        return Err(Error::param("spectral", "needs times and at least 2 paths per cell"));
    }
    if spec.gammas.iter().any(|g| !(*g >= 1.0)) {
        return Err(Error::param("gammas", "exponents must be >= 1"));
    }
    let horizon = spec.times.iter().copied().fold(0.0, f64::max);
    let cells: Vec<usize> = (0..mu.grid.n_cells()).filter(|&c| mu.mass(c) >= spec.min_mass && mu.mass(c) > 0.0).collect();
    if cells.is_empty() {
        return Err(Error::param("min_mass", "no cell carries enough mass"));
    }
    let total: f64 = cells.iter().map(|&c| mu.mass(c)).sum();
    let weights: Vec<f64> = cells.iter().map(|&c| mu.mass(c) / total).collect();
    let centers: Vec<Vec<f64>> = cells.iter().map(|&c| mu.grid.cell_center(c)).collect();

    // means[cell][time], stderrs[cell][time]
    let mut means = Vec::with_capacity(cells.len());
    let mut ses = Vec::with_capacity(cells.len());
    for (k, &cell) in cells.iter().enumerate() {
        let start_seed = substream(spec.seed, &format!("spectral-cell-{cell}"));
        let ens = if horizon > 0.0 {
            Some(simulate_ensemble(
                coeffs,
                &EnsembleSpec::new(centers[k].clone(), horizon, spec.dt, spec.paths_per_cell, start_seed)
                    .with_checkpoints(spec.times.clone()),
            )?)
        } else {
            None
        };
        let (mut m, mut s) = (Vec::new(), Vec::new());
        for &t in &spec.times {
            let e = match &ens {
                Some(e) if t > 0.0 => e.expectation(t, phi)?,
                _ => crate::stats::Estimate { value: phi(&centers[k]), stderr: 0.0 },
            };
            m.push(e.value);
            s.push(e.stderr);
        }
        means.push(m);
        ses.push(s);
    }

    let mut out = Vec::with_capacity(spec.gammas.len());
    for &g in &spec.gammas {
        let cg = normal_abs_moment(g);
        let mut points = Vec::with_capacity(spec.times.len());
        let (mut raw, mut floors, mut mu_phis) = (Vec::new(), Vec::new(), Vec::new());
        for (ti, &t) in spec.times.iter().enumerate() {
            let mu_phi: f64 = (0..cells.len()).map(|k| weights[k] * means[k][ti]).sum();
            let mut sum = 0.0;
            let mut noise = 0.0;
            for k in 0..cells.len() {
                let dev = means[k][ti] - mu_phi;
                sum += weights[k] * dev.abs().powf(g);
                noise += weights[k] * cg * ses[k][ti].powf(g);
            }
            let norm = (sum - noise).max(0.0).powf(1.0 / g);
            let var: f64 = if norm > 0.0 {
                (0..cells.len())
                    .map(|k| {
                        let dev = means[k][ti] - mu_phi;
                        let grad = norm.powf(1.0 - g) * weights[k] * dev.abs().powf(g - 1.0);
                        (grad * ses[k][ti]).powi(2)
                    })
                    .sum()
            } else {
                noise.powf(2.0 / g)
            };
            mu_phis.push(mu_phi);
            raw.push(sum.powf(1.0 / g));
            floors.push(noise.powf(1.0 / g));
            points.push(DecayPoint { t, value: norm, stderr: var.sqrt(), floor: 0.0 });
        }
        let fit = rate_fit(&points, &RateOptions { seed: spec.seed, weighted: true, ..RateOptions::default() }).ok();
        let reference = reference.map(|r| spec.times.iter().map(|&t| r.reference(t, g)).collect());
        out.push(SpectralSeries { gamma: g, mu_phi: mu_phis, cells_used: cells.len(), points, raw, noise: floors, fit, reference });
    }
    Ok(out)
}
