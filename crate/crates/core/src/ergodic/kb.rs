use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::{EmpiricalMeasure, HistogramGrid};
use crate::error::{Error, Result};
use crate::model::{CoefficientSet, State};
use crate::rng::{path_rng, substream};
use crate::sim::{check_start, drive, prepare, PathEnsemble};

/// How time averages are collected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KbMode {
    /// Occupation histogram of one path at the uniform nodes of
    /// `[burn_in, T]`.
    SinglePath,
    /// One state per path at a time drawn uniformly from `[burn_in, T]`.
    Ensemble { n_paths: usize },
}

/// Grid used for the histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridChoice {
    Fixed { grid: HistogramGrid },
    /// Box covering the central `coverage` fraction of the samples.
    Covering { bins: usize, coverage: f64 },
}

impl Default for GridChoice {
    fn default() -> Self {
        GridChoice::Covering { bins: 100, coverage: 0.999 }
    }
}

impl GridChoice {
    pub fn resolve(&self, dim: usize, samples: &[f64]) -> Result<HistogramGrid> {
        match self {
            GridChoice::Fixed { grid } => {
                if grid.dim() != dim {
                    return Err(Error::param("grid", "dimension does not match the model"));
                }
                Ok(grid.clone())
            }
            GridChoice::Covering { bins, coverage } => {
                HistogramGrid::covering(dim, samples.chunks_exact(dim), *bins, *coverage)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbSpec {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    /// Defaults to 10% of the horizon.
    pub burn_in: Option<f64>,
    pub mode: KbMode,
    pub seed: u64,
}

impl KbSpec {
    pub fn burn_in(&self) -> f64 {
        self.burn_in.unwrap_or(0.1 * self.horizon)
    }

    fn validate(&self) -> Result<()> {
        let b = self.burn_in();
        if !(b >= 0.0 && b < self.horizon) {
            return Err(Error::param("burn_in", format!("must lie in [0, {})", self.horizon)));
        }
        if let KbMode::Ensemble { n_paths } = self.mode {
            if n_paths == 0 {
                return Err(Error::param("n_paths", "must be positive"));
            }
        }
        Ok(())
    }
}

fn single_path_samples(coeffs: &CoefficientSet, spec: &KbSpec, x0: &State) -> Result<Vec<f64>> {
    let mut rng = path_rng(substream(spec.seed, "kb-single"), 0);
    let (grid, jumps) = prepare(coeffs, spec.horizon, spec.dt, &[], &mut rng)?;
    let nodes = grid.nodes();
    let tol = 1e-9 * spec.dt;
    let first = (spec.burn_in() / spec.dt - 1e-9).ceil() as u64;
    let mut k = first;
    let mut samples = Vec::new();
    drive(coeffs, x0, &grid, &jumps, &mut rng, |v| {
        let t = nodes[v.index];
        let target = k as f64 * spec.dt;
        if target <= spec.horizon + tol && (t - target).abs() <= tol {
            samples.extend(v.state.iter());
            k += 1;
        }
    })?;
    Ok(samples)
}

fn ensemble_sample(coeffs: &CoefficientSet, spec: &KbSpec, x0: &State, i: u64) -> Result<State> {
    let mut rng = path_rng(substream(spec.seed, "kb-ensemble"), i);
    let b = spec.burn_in();
    let tau = b + (spec.horizon - b) * rng.random::<f64>();
    if tau <= 0.0 {
        return Ok(x0.clone());
    }
    let (grid, jumps) = prepare(coeffs, tau, spec.dt, &[], &mut rng)?;
    drive(coeffs, x0, &grid, &jumps, &mut rng, |_| {})
}

/// Raw samples of the time-averaged law, flattened.
pub fn kb_samples(coeffs: &CoefficientSet, spec: &KbSpec) -> Result<Vec<f64>> {
    let x0 = State::from_column_slice(&spec.x0);
    check_start(coeffs, &x0)?;
    spec.validate()?;
    match spec.mode {
        KbMode::SinglePath => single_path_samples(coeffs, spec, &x0),
        KbMode::Ensemble { n_paths } => {
            let states: Vec<Result<State>> = (0..n_paths as u64)
                .into_par_iter()
                .map(|i| ensemble_sample(coeffs, spec, &x0, i))
                .collect();
            let mut out = Vec::with_capacity(n_paths * coeffs.dim());
            for s in states {
                out.extend(s?.iter());
            }
            Ok(out)
        }
    }
}

/// Krylov-Bogoliubov estimate of the invariant measure.
pub fn krylov_bogoliubov(coeffs: &CoefficientSet, spec: &KbSpec, grid: &GridChoice) -> Result<EmpiricalMeasure> {
    let samples = kb_samples(coeffs, spec)?;
    let d = coeffs.dim();
    let grid = grid.resolve(d, &samples)?;
    Ok(EmpiricalMeasure::from_samples(grid, samples.chunks_exact(d)))
}

/// Histogram of an ensemble's marginal at checkpoint `t`.
pub fn marginal_measure(ensemble: &PathEnsemble, t: f64, grid: &HistogramGrid) -> Result<EmpiricalMeasure> {
    let c = ensemble.checkpoint_index(t)?;
    if grid.dim() != ensemble.dim {
        return Err(Error::param("grid", "dimension does not match the ensemble"));
    }
    Ok(EmpiricalMeasure::from_samples(
        grid.clone(),
        (0..ensemble.n_paths()).map(|i| ensemble.value(i, c)),
    ))
}

/// `TV(p_t(x0, .), mu)` at every checkpoint of `ensemble`, on the grid of
/// `mu`, as decay points with standard errors and null floors.
pub fn tv_decay(ensemble: &PathEnsemble, mu: &EmpiricalMeasure) -> Result<Vec<super::rate::DecayPoint>> {
    ensemble
        .checkpoints
        .iter()
        .map(|&t| {
            let p = marginal_measure(ensemble, t, &mu.grid)?;
            let tv = super::measure::tv_estimate(&p, mu)?;
            Ok(super::rate::DecayPoint { t, value: tv.value, stderr: tv.stderr, floor: tv.floor })
        })
        .collect()
}
