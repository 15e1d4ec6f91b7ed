use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operator::{assemble_block, operator_parts, CouplingParams};
use crate::error::{Error, Result};
use crate::matops::{default_clip_tol, sqrt_psd};
use crate::model::{CoefficientSet, State};
use crate::rng::{path_rng, substream};
use crate::sim::{compensator, ensure_state, euler_increment, model_hash, prepare, standard_normal, COMPENSATOR_MARKS};
use crate::stats::Proportion;

/// Compensators at `x` and `y` from common marks.
fn compensator_pair<R: Rng>(coeffs: &CoefficientSet, x: &State, y: &State, rng: &mut R) -> Option<(State, State)> {
    if !coeffs.has_jumps() {
        return None;
    }
    if let (Some(cx), Some(cy)) = (coeffs.analytic_compensator(x), coeffs.analytic_compensator(y)) {
        return Some((cx, cy));
    }
    let kernel = coeffs.kernel();
    let d = coeffs.dim();
    let (mut sx, mut sy) = (DVector::zeros(d), DVector::zeros(d));
    for _ in 0..COMPENSATOR_MARKS {
        let u = kernel.sample_mark(rng);
        sx += coeffs.jump(x, &u);
        sy += coeffs.jump(y, &u);
    }
    let k = kernel.total_rate() / COMPENSATOR_MARKS as f64;
    Some((sx * k, sy * k))
}

/// Diffusion part of one coupled step, also returning `<u, G u>` at the
/// start of the step.
fn diffusion_pair_step<R: Rng>(
    coeffs: &CoefficientSet,
    params: &CouplingParams,
    x: &State,
    y: &State,
    h: f64,
    rng: &mut R,
) -> Result<(State, State, f64)> {
    let d = coeffs.dim();
    let parts = operator_parts(x, y, coeffs, params)?;
    let block = assemble_block(&parts);
    let root = sqrt_psd(&block, default_clip_tol(block.as_matrix())).map_err(|e| Error::CouplingDegeneracy {
        x: x.iter().copied().collect(),
        y: y.iter().copied().collect(),
        reason: e.to_string(),
    })?;
    let g = &parts.a_x + &parts.a_y - &parts.c - parts.c.transpose();
    let g_bar = parts.u.dot(&(&g * &parts.u));
    let comp = compensator_pair(coeffs, x, y, rng);
    let xi = standard_normal(rng, 2 * d);
    let noise = root.as_matrix() * xi * h.sqrt();
    let mut bx = coeffs.drift(x);
    let mut by = coeffs.drift(y);
    if let Some((cx, cy)) = comp {
        bx -= cx;
        by -= cy;
    }
    let nx = x + bx * h + noise.rows(0, d);
    let ny = y + by * h + noise.rows(d, d);
    Ok((nx, ny, g_bar))
}

fn single_step<R: Rng>(coeffs: &CoefficientSet, x: &State, h: f64, rng: &mut R) -> State {
    let comp = if coeffs.has_jumps() { Some(compensator(coeffs, x, rng).0) } else { None };
    let z = standard_normal(rng, coeffs.dim());
    euler_increment(coeffs, x, comp.as_ref(), h, &z)
}

/// One step of the coupled dynamics over `[s, s + dt]`, followed by the
/// shared jumps `marks` (applied to both components).
///
/// A pair with `x == y` moves as a single marginal step applied to both.
pub fn coupled_step<R: Rng>(
    coeffs: &CoefficientSet,
    params: &CouplingParams,
    x: &State,
    y: &State,
    dt: f64,
    marks: &[State],
    rng: &mut R,
) -> Result<(State, State)> {
    let (mut nx, mut ny) = if x == y {
        let n = single_step(coeffs, x, dt, rng);
        (n.clone(), n)
    } else {
        let (nx, ny, _) = diffusion_pair_step(coeffs, params, x, y, dt, rng)?;
        (nx, ny)
    };
    for u in marks {
        nx = &nx + coeffs.jump(&nx, u);
        ny = &ny + coeffs.jump(&ny, u);
    }
    Ok((nx, ny))
}

/// One node of a coupled path.
pub(crate) struct PairVisit<'a> {
    pub time: f64,
    pub x: &'a State,
    pub y: &'a State,
    pub glued: bool,
}

/// Summary of a coupled run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingTimes {
    /// Coupling time; `None` when the pair has not met by the horizon.
    pub tau: Option<f64>,
    /// First time the distance exceeds `delta`; `None` if never.
    pub s_delta: Option<f64>,
    pub jumps: usize,
}

fn drive_coupled<R: Rng, F: FnMut(PairVisit<'_>)>(
    coeffs: &CoefficientSet,
    params: &CouplingParams,
    horizon: f64,
    dt: f64,
    forced: &[f64],
    rng: &mut R,
    mut visit: F,
) -> Result<CouplingTimes> {
    params.validate(coeffs.dim())?;
    let (grid, jumps) = prepare(coeffs, horizon, dt, forced, rng)?;
    let mut x = State::from_column_slice(&params.x0);
    let mut y = State::from_column_slice(&params.y0);
    let mut tau = None;
    let mut s_delta = None;
    let mut glued = false;
    if (&x - &y).norm() <= params.couple_eps {
        tau = Some(0.0);
        if params.glue {
            x = y.clone();
            glued = true;
        }
    }
    visit(PairVisit { time: 0.0, x: &x, y: &y, glued });
    let nodes = grid.nodes();
    let jump_nodes = grid.jump_nodes();
    let mut jp = 0;
    for i in 1..nodes.len() {
        let t = nodes[i];
        let h = t - nodes[i - 1];
        if glued {
            y = single_step(coeffs, &y, h, rng);
        } else {
            let r = (&x - &y).norm();
            let u_prev = (&x - &y) / r;
            let (nx, ny, g_bar) = diffusion_pair_step(coeffs, params, &x, &y, h, rng)?;
            let uniform: f64 = rng.random();
            x = nx;
            y = ny;
            let diff = &x - &y;
            let proj = diff.dot(&u_prev);
            let bridge = params.bridge_detection
                && g_bar > 0.0
                && proj > 0.0
                && uniform < (-2.0 * r * proj / (g_bar * h)).exp();
            if tau.is_none() && (diff.norm() <= params.couple_eps || proj <= 0.0 || bridge) {
                tau = Some(t);
                glued = params.glue;
            }
        }
        ensure_state(&y, t)?;
        if jp < jump_nodes.len() && jump_nodes[jp] == i {
            let mark = &jumps[jp].mark;
            y = &y + coeffs.jump(&y, mark);
            if !glued {
                x = &x + coeffs.jump(&x, mark);
            }
            jp += 1;
            ensure_state(&y, t)?;
        }
        if glued {
            x.copy_from(&y);
        } else {
            ensure_state(&x, t)?;
            if tau.is_none() && (&x - &y).norm() <= params.couple_eps {
                tau = Some(t);
                if params.glue {
                    glued = true;
                    x.copy_from(&y);
                }
            }
        }
        if s_delta.is_none() && (&x - &y).norm() > params.delta {
            s_delta = Some(t);
        }
        visit(PairVisit { time: t, x: &x, y: &y, glued });
    }
    Ok(CouplingTimes { tau, s_delta, jumps: jumps.len() })
}

/// A coupled trajectory `(X~, Y~)` with its coupling and exit times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPathRecord {
    pub times: Vec<f64>,
    pub x: Vec<State>,
    pub y: Vec<State>,
    pub glued: Vec<bool>,
    pub tau: Option<f64>,
    pub s_delta: Option<f64>,
    /// Jumps of each component (equal by construction: marks are shared).
    pub jumps: usize,
}

impl CoupledPathRecord {
    pub fn distances(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).map(|(a, b)| (a - b).norm()).collect()
    }
}

/// Simulates one coupled pair from `(params.x0, params.y0)` on `[0, horizon]`.
pub fn simulate_coupled<R: Rng>(
    coeffs: &CoefficientSet,
    params: &CouplingParams,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<CoupledPathRecord> {
    let mut rec = CoupledPathRecord {
        times: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
        glued: Vec::new(),
        tau: None,
        s_delta: None,
        jumps: 0,
    };
    let times = drive_coupled(coeffs, params, horizon, dt, &[], rng, |v| {
        rec.times.push(v.time);
        rec.x.push(v.x.clone());
        rec.y.push(v.y.clone());
        rec.glued.push(v.glued);
    })?;
    rec.tau = times.tau;
    rec.s_delta = times.s_delta;
    rec.jumps = times.jumps;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledEnsembleSpec {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub checkpoints: Vec<f64>,
}

impl CoupledEnsembleSpec {
    pub fn new(horizon: f64, dt: f64, n_paths: usize, master_seed: u64) -> Self {
        CoupledEnsembleSpec { horizon, dt, n_paths, master_seed, checkpoints: Vec::new() }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<f64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }
}

/// Checkpoint states and coupling times of many independent coupled pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledEnsemble {
    pub label: String,
    pub dim: usize,
    pub params: CouplingParams,
    pub horizon: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub checkpoints: Vec<f64>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    pub times: Vec<CouplingTimes>,
}

/// Simulates coupled pairs; pair `i` depends only on `(master_seed, i)`.
pub fn simulate_coupled_ensemble(
    coeffs: &CoefficientSet,
    params: &CouplingParams,
    spec: &CoupledEnsembleSpec,
) -> Result<CoupledEnsemble> {
    params.validate(coeffs.dim())?;
    if spec.n_paths == 0 {
        return Err(Error::param("n_paths", "must be positive"));
    }
    let checkpoints = crate::sim::EnsembleSpec {
        x0: params.x0.clone(),
        horizon: spec.horizon,
        dt: spec.dt,
        n_paths: spec.n_paths,
        master_seed: spec.master_seed,
        checkpoints: spec.checkpoints.clone(),
        store_paths: false,
    }
    .normalized_checkpoints()?;
    let stream = substream(spec.master_seed, "coupled");
    let d = coeffs.dim();
    let outcomes: Vec<Result<(Vec<f64>, Vec<f64>, CouplingTimes)>> = (0..spec.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(stream, i);
            let mut xs = Vec::with_capacity(checkpoints.len() * d);
            let mut ys = Vec::with_capacity(checkpoints.len() * d);
            let mut next = 0;
            let tol = 1e-9 * spec.dt;
            let times = drive_coupled(coeffs, params, spec.horizon, spec.dt, &checkpoints, &mut rng, |v| {
                while next < checkpoints.len() && (checkpoints[next] - v.time).abs() <= tol {
                    xs.extend(v.x.iter());
                    ys.extend(v.y.iter());
                    next += 1;
                }
            })?;
            debug_assert_eq!(next, checkpoints.len());
            Ok((xs, ys, times))
        })
        .collect();
    let mut x = Vec::with_capacity(spec.n_paths);
    let mut y = Vec::with_capacity(spec.n_paths);
    let mut times = Vec::with_capacity(spec.n_paths);
    for o in outcomes {
        let (a, b, t) = o?;
        x.push(a);
        y.push(b);
        times.push(t);
    }
    Ok(CoupledEnsemble {
        label: coeffs.label().to_string(),
        dim: d,
        params: params.clone(),
        horizon: spec.horizon,
        dt: spec.dt,
        master_seed: spec.master_seed,
        checkpoints,
        x,
        y,
        times,
    })
}

impl CoupledEnsemble {
    pub fn n_paths(&self) -> usize {
        self.times.len()
    }

    pub fn checkpoint_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * self.dt;
        self.checkpoints
            .iter()
            .position(|&c| (c - t).abs() <= tol)
            .ok_or_else(|| Error::Usage(format!("t = {t} is not a checkpoint of this ensemble")))
    }

    pub fn x_value(&self, i: usize, c: usize) -> &[f64] {
        &self.x[i][c * self.dim..(c + 1) * self.dim]
    }

    pub fn y_value(&self, i: usize, c: usize) -> &[f64] {
        &self.y[i][c * self.dim..(c + 1) * self.dim]
    }

    /// Coordinate `k` of the first (`second = false`) or second component at `t`.
    pub fn marginal(&self, t: f64, k: usize, second: bool) -> Result<Vec<f64>> {
        let c = self.checkpoint_index(t)?;
        if k >= self.dim {
            return Err(Error::Usage(format!("coordinate {k} out of range for dimension {}", self.dim)));
        }
        Ok((0..self.n_paths())
            .map(|i| if second { self.y_value(i, c)[k] } else { self.x_value(i, c)[k] })
            .collect())
    }

    /// Writes the ensemble in the columnar layout of [`crate::sim::write_columnar`]
    /// with paired state columns, followed per path by `tau` and `s_delta`
    /// summary rows whose time column holds the value (`inf` if never).
    pub fn write_columnar<W: Write>(&self, out: &mut W) -> Result<()> {
        let d = self.dim;
        writeln!(out, "# model_hash={}", model_hash(&self.label))?;
        writeln!(out, "# seed={}", self.master_seed)?;
        writeln!(out, "# d={d}")?;
        writeln!(out, "# T={:.16e}", self.horizon)?;
        writeln!(out, "# dt={:.16e}", self.dt)?;
        let xs: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        let ys: Vec<String> = (0..d).map(|k| format!("y{k}")).collect();
        writeln!(out, "path_id,time,{},{},flag", xs.join(","), ys.join(","))?;
        let blanks = ",".repeat(2 * d);
        for i in 0..self.n_paths() {
            for (c, t) in self.checkpoints.iter().enumerate() {
                write!(out, "{i},{t:.16e}")?;
                for v in self.x_value(i, c).iter().chain(self.y_value(i, c)) {
                    write!(out, ",{v:.16e}")?;
                }
                writeln!(out, ",post")?;
            }
            for (flag, v) in [("tau", self.times[i].tau), ("s_delta", self.times[i].s_delta)] {
                match v {
                    Some(t) => writeln!(out, "{i},{t:.16e}{blanks},{flag}")?,
                    None => writeln!(out, "{i},inf{blanks},{flag}")?,
                }
            }
        }
        Ok(())
    }
}

/// `P(tau > t)` with a Wilson 95% interval.
pub fn estimate_tail(ensemble: &CoupledEnsemble, t: f64) -> Result<Proportion> {
    if !(t >= 0.0 && t <= ensemble.horizon) {
        return Err(Error::Usage(format!("t = {t} lies outside [0, {}]", ensemble.horizon)));
    }
    let alive = ensemble.times.iter().filter(|c| c.tau.is_none_or(|tau| tau > t)).count();
    Ok(Proportion::new(alive as u64, ensemble.n_paths() as u64))
}
