use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::euler::{check_start, drive, prepare, simulate_path_with_nodes, PathRecord};
use crate::error::{Error, Result};
use crate::model::{CoefficientSet, State};
use crate::rng::path_rng;
use crate::stats::{Estimate, Proportion};

/// What to simulate: `n_paths` independent paths from `x0`, path `i`
/// seeded by `(master_seed, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Times at which every path's state is kept; always contains 0 and
    /// the horizon after normalization.
    pub checkpoints: Vec<f64>,
    /// Keep full [`PathRecord`]s (memory grows with paths x steps).
    pub store_paths: bool,
}

impl EnsembleSpec {
    pub fn new(x0: Vec<f64>, horizon: f64, dt: f64, n_paths: usize, master_seed: u64) -> Self {
        EnsembleSpec { x0, horizon, dt, n_paths, master_seed, checkpoints: Vec::new(), store_paths: false }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<f64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn storing_paths(mut self) -> Self {
        self.store_paths = true;
        self
    }

    /// Sorted, deduplicated checkpoints including 0 and the horizon.
    pub(crate) fn normalized_checkpoints(&self) -> Result<Vec<f64>> {
        let mut c = self.checkpoints.clone();
        for &t in &c {
            if !(t.is_finite() && (0.0..=self.horizon).contains(&t)) {
                return Err(Error::Usage(format!("checkpoint {t} lies outside [0, {}]", self.horizon)));
            }
        }
        c.push(0.0);
        c.push(self.horizon);
        c.sort_by(f64::total_cmp);
        c.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * self.horizon.max(1.0));
        Ok(c)
    }
}

/// Checkpoint states, running suprema and optional full records of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub label: String,
    pub dim: usize,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub checkpoints: Vec<f64>,
    /// Path-major: `values[i][c * dim + k]` is coordinate `k` of path `i` at checkpoint `c`.
    values: Vec<Vec<f64>>,
    sup_sq: Vec<f64>,
    /// Largest per-step compensator standard error seen, if Monte Carlo was used.
    pub compensator_stderr: Option<f64>,
    pub paths: Option<Vec<PathRecord>>,
}

struct PathOutcome {
    values: Vec<f64>,
    sup_sq: f64,
    comp_se: Option<f64>,
    record: Option<PathRecord>,
}

fn simulate_one(coeffs: &CoefficientSet, spec: &EnsembleSpec, checkpoints: &[f64], i: u64) -> Result<PathOutcome> {
    let x0 = State::from_column_slice(&spec.x0);
    let mut rng = path_rng(spec.master_seed, i);
    let d = coeffs.dim();
    if spec.store_paths {
        let rec = simulate_path_with_nodes(coeffs, &x0, spec.horizon, spec.dt, checkpoints, &mut rng)?;
        let mut values = Vec::with_capacity(checkpoints.len() * d);
        for &t in checkpoints {
            let idx = rec.grid.position(t).expect("checkpoints are forced grid nodes");
            values.extend(rec.states[idx].iter());
        }
        let comp_se = rec.compensator_stderr.iter().copied().reduce(f64::max);
        return Ok(PathOutcome { values, sup_sq: rec.sup_norm_squared(), comp_se, record: Some(rec) });
    }
    let (grid, jumps) = prepare(coeffs, spec.horizon, spec.dt, checkpoints, &mut rng)?;
    let targets: Vec<usize> = checkpoints
        .iter()
        .map(|&t| grid.position(t).expect("checkpoints are forced grid nodes"))
        .collect();
    let mut values = Vec::with_capacity(checkpoints.len() * d);
    let mut next = 0;
    let mut sup_sq = 0.0f64;
    let mut comp_se: Option<f64> = None;
    drive(coeffs, &x0, &grid, &jumps, &mut rng, |v| {
        sup_sq = sup_sq.max(v.state.norm_squared());
        if let Some(p) = v.pre {
            sup_sq = sup_sq.max(p.norm_squared());
        }
        if let Some(se) = v.compensator_stderr {
            comp_se = Some(comp_se.map_or(se, |m| m.max(se)));
        }
        while next < targets.len() && targets[next] == v.index {
            values.extend(v.state.iter());
            next += 1;
        }
    })?;
    Ok(PathOutcome { values, sup_sq, comp_se, record: None })
}

/// Simulates an ensemble on the current rayon pool. Path `i` depends only
/// on `(master_seed, i)`, so the result does not depend on the pool size.
pub fn simulate_ensemble(coeffs: &CoefficientSet, spec: &EnsembleSpec) -> Result<PathEnsemble> {
    let x0 = State::from_column_slice(&spec.x0);
    check_start(coeffs, &x0)?;
    if spec.n_paths == 0 {
        return Err(Error::param("n_paths", "must be positive"));
    }
    let checkpoints = spec.normalized_checkpoints()?;
    let outcomes: Vec<Result<PathOutcome>> = (0..spec.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_one(coeffs, spec, &checkpoints, i))
        .collect();
    let mut values = Vec::with_capacity(spec.n_paths);
    let mut sup_sq = Vec::with_capacity(spec.n_paths);
    let mut paths = spec.store_paths.then(|| Vec::with_capacity(spec.n_paths));
    let mut comp: Option<f64> = None;
    for o in outcomes {
        let o = o?;
        values.push(o.values);
        sup_sq.push(o.sup_sq);
        if let Some(se) = o.comp_se {
            comp = Some(comp.map_or(se, |m| m.max(se)));
        }
        if let (Some(p), Some(r)) = (paths.as_mut(), o.record) {
            p.push(r);
        }
    }
    Ok(PathEnsemble {
        label: coeffs.label().to_string(),
        dim: coeffs.dim(),
        x0: spec.x0.clone(),
        horizon: spec.horizon,
        dt: spec.dt,
        master_seed: spec.master_seed,
        checkpoints,
        values,
        sup_sq,
        compensator_stderr: comp,
        paths,
    })
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.values.len()
    }

    /// Index of checkpoint `t`; a usage error if `t` was not requested.
    pub fn checkpoint_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * self.dt;
        self.checkpoints
            .iter()
            .position(|&c| (c - t).abs() <= tol)
            .ok_or_else(|| Error::Usage(format!("t = {t} is not a checkpoint of this ensemble")))
    }

    /// State of path `i` at checkpoint index `c`.
    pub fn value(&self, i: usize, c: usize) -> &[f64] {
        &self.values[i][c * self.dim..(c + 1) * self.dim]
    }

    /// Coordinate `k` of every path at time `t`.
    pub fn marginal(&self, t: f64, k: usize) -> Result<Vec<f64>> {
        let c = self.checkpoint_index(t)?;
        if k >= self.dim {
            return Err(Error::Usage(format!("coordinate {k} out of range for dimension {}", self.dim)));
        }
        Ok(self.values.iter().map(|v| v[c * self.dim + k]).collect())
    }

    /// Monte Carlo estimate of `E phi(X_t)`.
    pub fn expectation(&self, t: f64, phi: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
        let c = self.checkpoint_index(t)?;
        Ok(Estimate::from_samples((0..self.n_paths()).map(|i| phi(self.value(i, c)))))
    }

    /// `E max_c |X_{t_c}|^2` over the checkpoints only. Unlike the grid
    /// supremum this does not pick up extra nodes when the step is refined.
    pub fn checkpoint_sup_second_moment(&self) -> Estimate {
        let n_c = self.checkpoints.len();
        Estimate::from_samples(
            (0..self.n_paths())
                .map(|i| (0..n_c).map(|c| self.value(i, c).iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max)),
        )
    }

    pub fn sup_norms_squared(&self) -> &[f64] {
        &self.sup_sq
    }
}

/// `E sup_{t <= T} |X_t|^2` over grid nodes, pre- and post-jump values included.
pub fn estimate_sup_second_moment(ensemble: &PathEnsemble) -> Estimate {
    Estimate::from_samples(ensemble.sup_sq.iter().copied())
}

/// A closed box (bounds may be infinite) or closed ball in state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Event {
    Everything,
    Empty,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Event {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Event::Everything => true,
            Event::Empty => false,
            Event::Box { lo, hi } => x.iter().zip(lo).zip(hi).all(|((v, l), h)| *l <= *v && *v <= *h),
            Event::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Event::Box { lo, hi } if lo.len() != dim || hi.len() != dim => {
                Err(Error::Usage(format!("box bounds must have dimension {dim}")))
            }
            Event::Ball { center, radius } if center.len() != dim || !(*radius >= 0.0) => {
                Err(Error::Usage(format!("ball needs a {dim}-dimensional center and a nonnegative radius")))
            }
            _ => Ok(()),
        }
    }
}

/// `p_t(x0, E)` as the fraction of paths in `E` at checkpoint `t`, with a
/// Wilson 95% interval.
pub fn estimate_transition(ensemble: &PathEnsemble, t: f64, event: &Event) -> Result<Proportion> {
    event.validate(ensemble.dim)?;
    let c = ensemble.checkpoint_index(t)?;
    let n = ensemble.n_paths() as u64;
    match event {
        Event::Everything => return Ok(Proportion::exact(n, n)),
        Event::Empty => return Ok(Proportion::exact(0, n)),
        _ => {}
    }
    let hits = (0..ensemble.n_paths()).filter(|&i| event.contains(ensemble.value(i, c))).count();
    Ok(Proportion::new(hits as u64, ensemble.n_paths() as u64))
}
