use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bridge::{make_bridge, BridgeControl, BridgeSpec};
use crate::error::{Error, Result};
use crate::model::{CoefficientSet, State};
use crate::rng::{path_rng, substream};
use crate::sim::{compensator, ensure_state, prepare, standard_normal, PathRecord, TimeGrid};
use crate::stats::{Estimate, KahanSum};

/// Largest accepted condition number of `sigma` when solving for `H`.
pub const MAX_CONDITION: f64 = 1e12;

/// Running Girsanov log-density of one controlled path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovWeight {
    /// `log xi` at every grid node of the path.
    pub log_xi: Vec<f64>,
    /// `sup |H|` over the controlled steps.
    pub sup_control: f64,
}

impl GirsanovWeight {
    pub fn terminal_log(&self) -> f64 {
        *self.log_xi.last().expect("a path has at least one node")
    }

    pub fn terminal(&self) -> f64 {
        self.terminal_log().exp()
    }
}

/// Solves `sigma H = h`, refusing numerically singular `sigma`.
pub(crate) fn solve_control(sigma: DMatrix<f64>, h: &State, point: &State) -> Result<State> {
    let singular = |condition: f64| Error::Nondegeneracy { point: point.iter().copied().collect(), condition };
    if sigma.nrows() == 1 {
        let s = sigma[(0, 0)];
        if s == 0.0 || !s.is_finite() {
            return Err(singular(f64::INFINITY));
        }
        return Ok(h / s);
    }
    let sv = sigma.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(singular(condition));
    }
    sigma.lu().solve(h).ok_or_else(|| singular(f64::INFINITY))
}

/// One visited node of a controlled path.
pub(crate) struct ControlledVisit<'a> {
    pub index: usize,
    pub pre: Option<&'a State>,
    pub state: &'a State,
    pub log_xi: f64,
}

pub(crate) struct ControlledRun {
    pub bridge: BridgeControl,
    pub x_t0: State,
    pub sup_control: f64,
}

/// Uncontrolled dynamics up to `t0`, then the control `h` is added to the
/// drift and `log xi` accumulates `-<H, dW> - |H|^2 dt / 2` at left points,
/// so `E[xi g(Y)] = E[g(X)]` holds exactly for the discretized laws.
pub(crate) fn drive_controlled<R: Rng, F: FnMut(ControlledVisit<'_>)>(
    coeffs: &CoefficientSet,
    x0: &State,
    spec: &BridgeSpec,
    grid: &TimeGrid,
    jumps: &[crate::sim::JumpEvent],
    rng: &mut R,
    mut visit: F,
) -> Result<ControlledRun> {
    let nodes = grid.nodes();
    let jump_nodes = grid.jump_nodes();
    let start_index = grid
        .position(spec.t0)
        .ok_or_else(|| Error::Precondition("t0 is not a grid node".into()))?;
    let target = State::from_column_slice(&spec.target);
    let d = coeffs.dim();
    let jumping = coeffs.has_jumps();
    let mut x = x0.clone();
    let mut log_xi = KahanSum::new();
    let mut bridge: Option<BridgeControl> = None;
    let mut x_t0 = x0.clone();
    let mut sup_control = 0.0f64;
    if start_index == 0 {
        bridge = Some(make_bridge(&x, spec.truncation, &target, spec.t0, spec.horizon, coeffs)?);
    }
    visit(ControlledVisit { index: 0, pre: None, state: &x, log_xi: 0.0 });
    let mut jp = 0;
    for i in 1..nodes.len() {
        let t = nodes[i - 1];
        let dt = nodes[i] - t;
        let comp = if jumping { Some(compensator(coeffs, &x, rng).0) } else { None };
        let z = standard_normal(rng, d);
        let sigma = coeffs.diffusion(&x);
        let mut drift = coeffs.drift(&x);
        if let Some(c) = &comp {
            drift -= c;
        }
        if let Some(b) = &bridge {
            let h = b.h(coeffs, t);
            let control = solve_control(sigma.clone(), &h, &x)?;
            sup_control = sup_control.max(control.norm());
            log_xi.add(-dt.sqrt() * control.dot(&z));
            log_xi.add(-0.5 * control.norm_squared() * dt);
            drift += h;
        }
        x = &x + drift * dt + sigma * z * dt.sqrt();
        ensure_state(&x, nodes[i])?;
        let jumped = jp < jump_nodes.len() && jump_nodes[jp] == i;
        let pre = if jumped {
            let pre = x.clone();
            x = &pre + coeffs.jump(&pre, &jumps[jp].mark);
            ensure_state(&x, nodes[i])?;
            jp += 1;
            Some(pre)
        } else {
            None
        };
        if i == start_index {
            x_t0 = x.clone();
            bridge = Some(make_bridge(&x, spec.truncation, &target, spec.t0, spec.horizon, coeffs)?);
        }
        visit(ControlledVisit { index: i, pre: pre.as_ref(), state: &x, log_xi: log_xi.value() });
    }
    let bridge = bridge.expect("t0 lies on the grid");
    if start_index == 0 {
        x_t0 = x0.clone();
    }
    if !sup_control.is_finite() {
        return Err(Error::Nondegeneracy { point: x.iter().copied().collect(), condition: f64::INFINITY });
    }
    Ok(ControlledRun { bridge, x_t0, sup_control })
}

fn check_inputs(coeffs: &CoefficientSet, x0: &State, spec: &BridgeSpec) -> Result<()> {
    crate::sim::check_start(coeffs, x0)?;
    spec.validate(coeffs.dim())
}

/// Simulates the controlled process `Y` with its Girsanov weight. Returns
/// the bridge realized at `t0` as well.
pub fn simulate_controlled<R: Rng>(
    coeffs: &CoefficientSet,
    x0: &State,
    spec: &BridgeSpec,
    dt: f64,
    rng: &mut R,
) -> Result<(PathRecord, GirsanovWeight, BridgeControl)> {
    check_inputs(coeffs, x0, spec)?;
    let (grid, jumps) = prepare(coeffs, spec.horizon, dt, &[spec.t0], rng)?;
    let mut states = Vec::with_capacity(grid.len());
    let mut pre_jump = Vec::with_capacity(jumps.len());
    let mut log_xi = Vec::with_capacity(grid.len());
    let run = drive_controlled(coeffs, x0, spec, &grid, &jumps, rng, |v| {
        states.push(v.state.clone());
        if let Some(p) = v.pre {
            pre_jump.push(p.clone());
        }
        log_xi.push(v.log_xi);
    })?;
    let record = PathRecord { x0: x0.clone(), grid, states, pre_jump, jumps, compensator_stderr: Vec::new() };
    Ok((record, GirsanovWeight { log_xi, sup_control: run.sup_control }, run.bridge))
}

/// Ensemble of controlled paths observed at checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledEnsembleSpec {
    pub x0: Vec<f64>,
    pub bridge: BridgeSpec,
    pub dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Observation times; the horizon is always included.
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledEnsemble {
    pub dim: usize,
    pub checkpoints: Vec<f64>,
    /// `Y` at each checkpoint, flattened per path.
    values: Vec<Vec<f64>>,
    /// `log xi` at each checkpoint, per path.
    log_xi: Vec<Vec<f64>>,
    /// `|X_t0 - X_t0^n|^2` per path.
    pub truncation_error_sq: Vec<f64>,
    pub truncated: usize,
    pub sup_control: f64,
}

struct Outcome {
    values: Vec<f64>,
    log_xi: Vec<f64>,
    truncation_error_sq: f64,
    truncated: bool,
    sup_control: f64,
}

fn checkpoints_for(spec: &ControlledEnsembleSpec) -> Result<Vec<f64>> {
    let mut c: Vec<f64> = spec.checkpoints.clone();
    c.push(spec.bridge.horizon);
    for &t in &c {
        if !(t.is_finite() && (0.0..=spec.bridge.horizon).contains(&t)) {
            return Err(Error::param("checkpoints", format!("time {t} outside [0, T]")));
        }
    }
    c.sort_by(f64::total_cmp);
    c.dedup();
    Ok(c)
}

fn run_one(coeffs: &CoefficientSet, spec: &ControlledEnsembleSpec, checkpoints: &[f64], i: u64) -> Result<Outcome> {
    let seed = substream(spec.master_seed, "controlled");
    let mut rng = path_rng(seed, i);
    let x0 = State::from_column_slice(&spec.x0);
    let mut forced = checkpoints.to_vec();
    forced.push(spec.bridge.t0);
    let (grid, jumps) = prepare(coeffs, spec.bridge.horizon, spec.dt, &forced, &mut rng)?;
    let targets: Vec<usize> = checkpoints
        .iter()
        .map(|&t| grid.position(t).expect("checkpoints are grid nodes"))
        .collect();
    let mut values = Vec::with_capacity(checkpoints.len() * coeffs.dim());
    let mut log_xi = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    let run = drive_controlled(coeffs, &x0, &spec.bridge, &grid, &jumps, &mut rng, |v| {
        while next < targets.len() && targets[next] == v.index {
            values.extend(v.state.iter());
            log_xi.push(v.log_xi);
            next += 1;
        }
    })?;
    Ok(Outcome {
        values,
        log_xi,
        truncation_error_sq: (&run.x_t0 - &run.bridge.start).norm_squared(),
        truncated: run.bridge.truncated,
        sup_control: run.sup_control,
    })
}

/// Simulates controlled paths in parallel; path `i` depends only on the
/// master seed and `i`.
pub fn simulate_controlled_ensemble(coeffs: &CoefficientSet, spec: &ControlledEnsembleSpec) -> Result<ControlledEnsemble> {
    let x0 = State::from_column_slice(&spec.x0);
    check_inputs(coeffs, &x0, &spec.bridge)?;
    if spec.n_paths == 0 {
        return Err(Error::param("n_paths", "must be positive"));
    }
    let checkpoints = checkpoints_for(spec)?;
    let outcomes: Vec<Result<Outcome>> = (0..spec.n_paths as u64)
        .into_par_iter()
        .map(|i| run_one(coeffs, spec, &checkpoints, i))
        .collect();
    let mut ens = ControlledEnsemble {
        dim: coeffs.dim(),
        checkpoints,
        values: Vec::with_capacity(spec.n_paths),
        log_xi: Vec::with_capacity(spec.n_paths),
        truncation_error_sq: Vec::with_capacity(spec.n_paths),
        truncated: 0,
        sup_control: 0.0,
    };
    for o in outcomes {
        let o = o?;
        ens.values.push(o.values);
        ens.log_xi.push(o.log_xi);
        ens.truncation_error_sq.push(o.truncation_error_sq);
        ens.truncated += usize::from(o.truncated);
        ens.sup_control = ens.sup_control.max(o.sup_control);
    }
    Ok(ens)
}

impl ControlledEnsemble {
    pub fn n_paths(&self) -> usize {
        self.values.len()
    }

    pub fn checkpoint_index(&self, t: f64) -> Result<usize> {
        self.checkpoints
            .iter()
            .position(|&c| (c - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .ok_or_else(|| Error::Usage(format!("t = {t} is not a checkpoint")))
    }

    /// `Y_t` of path `i` at checkpoint index `c`.
    pub fn value(&self, i: usize, c: usize) -> &[f64] {
        &self.values[i][c * self.dim..(c + 1) * self.dim]
    }

    pub fn weight(&self, i: usize, c: usize) -> f64 {
        self.log_xi[i][c].exp()
    }

    pub fn log_weight(&self, i: usize, c: usize) -> f64 {
        self.log_xi[i][c]
    }

    /// `E[xi_t]`.
    pub fn mean_weight(&self, t: f64) -> Result<Estimate> {
        let c = self.checkpoint_index(t)?;
        Ok(Estimate::from_samples((0..self.n_paths()).map(|i| self.weight(i, c))))
    }

    /// `E[xi_t phi(Y_t)]`.
    pub fn weighted_expectation(&self, t: f64, phi: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
        let c = self.checkpoint_index(t)?;
        Ok(Estimate::from_samples((0..self.n_paths()).map(|i| self.weight(i, c) * phi(self.value(i, c)))))
    }

    /// Unweighted `E[phi(Y_t)]`.
    pub fn expectation(&self, t: f64, phi: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
        let c = self.checkpoint_index(t)?;
        Ok(Estimate::from_samples((0..self.n_paths()).map(|i| phi(self.value(i, c)))))
    }

    /// `E|X_t0 - X_t0^n|^2`.
    pub fn truncation_error(&self) -> Estimate {
        Estimate::from_samples(self.truncation_error_sq.iter().copied())
    }
}
