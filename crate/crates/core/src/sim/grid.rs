use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform Euler grid merged with jump times and optional forced nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    dt: f64,
    nodes: Vec<f64>,
    jump_nodes: Vec<usize>,
}

/// Times closer than this fraction of the base step are merged.
const MERGE_TOL: f64 = 1e-9;

pub(crate) fn validate_step(horizon: f64, dt: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param("horizon", format!("must be positive and finite, got {horizon}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", format!("must be positive and finite, got {dt}")));
    }
    Ok(())
}

/// Number of uniform steps; the last one is shortened to land on `horizon`.
pub(crate) fn uniform_steps(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - MERGE_TOL).ceil().max(1.0) as usize
}

impl TimeGrid {
    /// The uniform grid `k dt`, `k < n`, closed by `horizon`.
    pub fn uniform(horizon: f64, dt: f64) -> Result<Self> {
        Self::new(horizon, dt, &[], &[])
    }

    /// Merges sorted `jump_times` in `(0, horizon]` and `forced` nodes in
    /// `[0, horizon]` into the uniform grid.
    pub fn new(horizon: f64, dt: f64, jump_times: &[f64], forced: &[f64]) -> Result<Self> {
        validate_step(horizon, dt)?;
        let n = uniform_steps(horizon, dt);
        let mut base: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        base.push(horizon);
        for &t in forced {
            if !(0.0..=horizon).contains(&t) {
                return Err(Error::Usage(format!("forced grid node {t} lies outside [0, {horizon}]")));
            }
        }
        let mut extra: Vec<f64> = forced.to_vec();
        extra.sort_by(f64::total_cmp);
        let base = merge_sorted(&base, &extra, dt * MERGE_TOL);

        let mut nodes = Vec::with_capacity(base.len() + jump_times.len());
        let mut jump_nodes = Vec::with_capacity(jump_times.len());
        let mut j = 0;
        let mut prev_jump = f64::NEG_INFINITY;
        for &t in jump_times {
            if !(t > 0.0 && t <= horizon) || t < prev_jump {
                return Err(Error::Usage(format!("jump time {t} is not sorted within (0, {horizon}]")));
            }
            prev_jump = t;
        }
        for &t in &base {
            while j < jump_times.len() && jump_times[j] < t - dt * MERGE_TOL {
                push_jump(&mut nodes, &mut jump_nodes, jump_times[j]);
                j += 1;
            }
            if j < jump_times.len() && (jump_times[j] - t).abs() <= dt * MERGE_TOL {
                nodes.push(t);
                if t > 0.0 {
                    jump_nodes.push(nodes.len() - 1);
                }
                j += 1;
                // Simultaneous jumps are vanishingly unlikely; later ones get
                // their own node an ulp later.
                while j < jump_times.len() && (jump_times[j] - t).abs() <= dt * MERGE_TOL {
                    push_jump(&mut nodes, &mut jump_nodes, jump_times[j]);
                    j += 1;
                }
            } else {
                nodes.push(t);
            }
        }
        debug_assert_eq!(j, jump_times.len());
        Ok(TimeGrid { horizon, dt, nodes, jump_nodes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Indices of nodes carrying a jump, increasing.
    pub fn jump_nodes(&self) -> &[usize] {
        &self.jump_nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node at time `t`, if one exists.
    pub fn position(&self, t: f64) -> Option<usize> {
        let tol = self.dt * MERGE_TOL;
        let i = self.nodes.partition_point(|&s| s < t - tol);
        (i < self.nodes.len() && (self.nodes[i] - t).abs() <= tol).then_some(i)
    }
}

fn push_jump(nodes: &mut Vec<f64>, jump_nodes: &mut Vec<usize>, t: f64) {
    let t = match nodes.last() {
        Some(&last) if t <= last => next_up(last),
        _ => t,
    };
    nodes.push(t);
    jump_nodes.push(nodes.len() - 1);
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

fn merge_sorted(a: &[f64], b: &[f64], tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let t = if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        match out.last() {
            Some(&last) if (t - last).abs() <= tol => {}
            _ => out.push(t),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_ends_at_horizon() {
        let g = TimeGrid::uniform(1.0, 0.3).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        let g = TimeGrid::uniform(1.0, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(*g.nodes().last().unwrap(), 1.0);
    }

    #[test]
    fn jumps_and_forced_nodes_merge_once() {
        let g = TimeGrid::new(1.0, 0.25, &[0.1, 0.5, 1.0], &[0.3]).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.1, 0.25, 0.3, 0.5, 0.75, 1.0]);
        assert_eq!(g.jump_nodes(), &[1, 4, 6]);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.position(0.3), Some(3));
        assert_eq!(g.position(0.31), None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TimeGrid::uniform(0.0, 0.1).is_err());
        assert!(TimeGrid::uniform(1.0, -0.1).is_err());
        assert!(TimeGrid::new(1.0, 0.1, &[0.5, 0.2], &[]).is_err());
        assert!(TimeGrid::new(1.0, 0.1, &[], &[1.5]).is_err());
    }
}
