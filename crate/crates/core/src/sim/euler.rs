use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::grid::{validate_step, TimeGrid};
use super::jumps::{sample_jump_times, JumpEvent};
use crate::error::{Error, Result};
use crate::model::{CoefficientSet, State};
use crate::stats::Estimate;

/// Fresh marks per step when the compensator has no closed form.
pub const COMPENSATOR_MARKS: usize = 64;

/// Stability guard for the explicit scheme: with a declared stiffness `k`,
/// steps above `1 / (4 k)` are refused.
pub fn check_step(coeffs: &CoefficientSet, dt: f64) -> Result<()> {
    if let Some(k) = coeffs.stiffness() {
        let bound = 1.0 / (4.0 * k);
        if dt > bound {
            return Err(Error::StepTooLarge { dt, bound });
        }
    }
    Ok(())
}

pub(crate) fn standard_normal<R: Rng>(rng: &mut R, dim: usize) -> State {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `int f(x, u) nu(du)`: the closed form when declared, else a mean over
/// [`COMPENSATOR_MARKS`] fresh marks together with its standard error.
pub(crate) fn compensator<R: Rng>(coeffs: &CoefficientSet, x: &State, rng: &mut R) -> (State, Option<f64>) {
    if let Some(c) = coeffs.analytic_compensator(x) {
        return (c, None);
    }
    let kernel = coeffs.kernel();
    let rate = kernel.total_rate();
    let d = coeffs.dim();
    let mut sum = DVector::zeros(d);
    let mut sum_sq = DVector::zeros(d);
    for _ in 0..COMPENSATOR_MARKS {
        let u = kernel.sample_mark(rng);
        let v = coeffs.jump(x, &u);
        sum_sq += v.component_mul(&v);
        sum += v;
    }
    let n = COMPENSATOR_MARKS as f64;
    let mean = &sum / n;
    let var: f64 = (0..d)
        .map(|k| ((sum_sq[k] - n * mean[k] * mean[k]) / (n - 1.0)).max(0.0) / n)
        .sum();
    (mean * rate, Some(rate * var.sqrt()))
}

/// `x + (b(x) - comp) h + sigma(x) sqrt(h) z`.
pub(crate) fn euler_increment(coeffs: &CoefficientSet, x: &State, comp: Option<&State>, h: f64, z: &State) -> State {
    let mut drift = coeffs.drift(x);
    if let Some(c) = comp {
        drift -= c;
    }
    let noise = coeffs.diffusion(x) * z;
    x + drift * h + noise * h.sqrt()
}

pub(crate) fn ensure_state(x: &State, time: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp { time })
    }
}

/// One visited grid node: `pre` is set at jump nodes.
pub(crate) struct NodeVisit<'a> {
    pub index: usize,
    pub pre: Option<&'a State>,
    pub state: &'a State,
    pub compensator_stderr: Option<f64>,
}

/// Runs the jump-adapted Euler scheme over a prepared grid, reporting each
/// node to `visit`. `jumps` must align with `grid.jump_nodes()`.
pub(crate) fn drive<R: Rng, F: FnMut(NodeVisit<'_>)>(
    coeffs: &CoefficientSet,
    x0: &State,
    grid: &TimeGrid,
    jumps: &[JumpEvent],
    rng: &mut R,
    mut visit: F,
) -> Result<State> {
    let nodes = grid.nodes();
    let jump_nodes = grid.jump_nodes();
    let d = coeffs.dim();
    let mut x = x0.clone();
    visit(NodeVisit { index: 0, pre: None, state: &x, compensator_stderr: None });
    let mut jp = 0;
    let jumping = coeffs.has_jumps();
    for i in 1..nodes.len() {
        let h = nodes[i] - nodes[i - 1];
        let (comp, se) = if jumping {
            let (c, se) = compensator(coeffs, &x, rng);
            (Some(c), se)
        } else {
            (None, None)
        };
        let z = standard_normal(rng, d);
        x = euler_increment(coeffs, &x, comp.as_ref(), h, &z);
        ensure_state(&x, nodes[i])?;
        if jp < jump_nodes.len() && jump_nodes[jp] == i {
            let pre = x;
            x = &pre + coeffs.jump(&pre, &jumps[jp].mark);
            ensure_state(&x, nodes[i])?;
            visit(NodeVisit { index: i, pre: Some(&pre), state: &x, compensator_stderr: se });
            jp += 1;
        } else {
            visit(NodeVisit { index: i, pre: None, state: &x, compensator_stderr: se });
        }
    }
    Ok(x)
}

/// Samples the jump atoms and builds the merged grid for one path.
pub(crate) fn prepare<R: Rng>(
    coeffs: &CoefficientSet,
    horizon: f64,
    dt: f64,
    forced: &[f64],
    rng: &mut R,
) -> Result<(TimeGrid, Vec<JumpEvent>)> {
    validate_step(horizon, dt)?;
    check_step(coeffs, dt)?;
    let jumps = sample_jump_times(coeffs.kernel(), horizon, rng);
    let times: Vec<f64> = jumps.iter().map(|j| j.time).collect();
    let grid = TimeGrid::new(horizon, dt, &times, forced)?;
    Ok((grid, jumps))
}

/// A simulated trajectory on its jump-adapted grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub x0: State,
    pub grid: TimeGrid,
    /// State at every node; post-jump at jump nodes.
    pub states: Vec<State>,
    /// Pre-jump states, aligned with `grid.jump_nodes()`.
    pub pre_jump: Vec<State>,
    pub jumps: Vec<JumpEvent>,
    /// Per-step standard error of the Monte Carlo compensator, empty when
    /// the compensator has a closed form.
    pub compensator_stderr: Vec<f64>,
}

impl PathRecord {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("a path has at least one node")
    }

    /// `sup_t |X_t|^2` over all nodes, pre-jump values included.
    pub fn sup_norm_squared(&self) -> f64 {
        self.states
            .iter()
            .chain(self.pre_jump.iter())
            .map(|x| x.norm_squared())
            .fold(0.0, f64::max)
    }

    /// Summary of the compensator noise along the path.
    pub fn compensator_noise(&self) -> Option<Estimate> {
        (!self.compensator_stderr.is_empty()).then(|| Estimate::from_samples(self.compensator_stderr.iter().copied()))
    }
}

/// Simulates one path of the jump SDE on `[0, horizon]`.
pub fn simulate_path<R: Rng>(
    coeffs: &CoefficientSet,
    x0: &State,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    simulate_path_with_nodes(coeffs, x0, horizon, dt, &[], rng)
}

/// As [`simulate_path`], with extra grid nodes at the `forced` times.
pub fn simulate_path_with_nodes<R: Rng>(
    coeffs: &CoefficientSet,
    x0: &State,
    horizon: f64,
    dt: f64,
    forced: &[f64],
    rng: &mut R,
) -> Result<PathRecord> {
    check_start(coeffs, x0)?;
    let (grid, jumps) = prepare(coeffs, horizon, dt, forced, rng)?;
    let mut states = Vec::with_capacity(grid.len());
    let mut pre_jump = Vec::with_capacity(jumps.len());
    let mut compensator_stderr = Vec::new();
    drive(coeffs, x0, &grid, &jumps, rng, |v| {
        states.push(v.state.clone());
        if let Some(p) = v.pre {
            pre_jump.push(p.clone());
        }
        if let Some(se) = v.compensator_stderr {
            compensator_stderr.push(se);
        }
    })?;
    Ok(PathRecord { x0: x0.clone(), grid, states, pre_jump, jumps, compensator_stderr })
}

pub(crate) fn check_start(coeffs: &CoefficientSet, x0: &State) -> Result<()> {
    if x0.len() != coeffs.dim() {
        return Err(Error::param(
            "x0",
            format!("has dimension {}, model has dimension {}", x0.len(), coeffs.dim()),
        ));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::param("x0", "must be finite"));
    }
    Ok(())
}
