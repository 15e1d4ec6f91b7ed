//! Sampling-based audit of the structural hypotheses on `(b, sigma, f)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::coeffs::{CoefficientSet, State};
use crate::error::{Error, Result};
use crate::matops::{hs_norm, sigma_lambda, SymmetricMatrix};
use crate::rng::{path_rng, substream, PathRng};
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    H1,
    H2,
    H3,
    Hf,
    #[serde(rename = "H1'")]
    H1Prime,
    #[serde(rename = "Hf'")]
    HfPrime,
    Hbsf,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 7] = [
        Hypothesis::H1,
        Hypothesis::H2,
        Hypothesis::H3,
        Hypothesis::Hf,
        Hypothesis::H1Prime,
        Hypothesis::HfPrime,
        Hypothesis::Hbsf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H3 => "H3",
            Hypothesis::Hf => "Hf",
            Hypothesis::H1Prime => "H1'",
            Hypothesis::HfPrime => "Hf'",
            Hypothesis::Hbsf => "Hbsf",
        }
    }

    pub fn parse(s: &str) -> Option<Hypothesis> {
        Hypothesis::ALL.into_iter().find(|h| h.name() == s)
    }
}

/// Point cloud and Monte Carlo sizes used by [`check_hypotheses`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSpec {
    /// Independent uniform pairs in the ball of radius `radius`.
    pub pairs: usize,
    /// Pairs at log-spaced separations from `min_gap` up to 1.
    pub near_diagonal: usize,
    pub radius: f64,
    pub min_gap: f64,
    /// Marks for single-point jump integrals without a closed form.
    pub marks: usize,
    /// Points (a prefix of the cloud) at which those integrals are estimated.
    pub moment_points: usize,
    /// Marks shared by all pairs for `int |f(x,u) - f(y,u)|^2 nu(du)`.
    pub pair_marks: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            pairs: 4096,
            near_diagonal: 256,
            radius: 10.0,
            min_gap: 1e-8,
            marks: 100_000,
            moment_points: 64,
            pair_marks: 512,
        }
    }
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::param("radius", "must be positive and finite"));
        }
        if !(self.min_gap > 0.0 && self.min_gap < 1.0) {
            return Err(Error::param("min_gap", "must lie in (0, 1)"));
        }
        if self.pairs + self.near_diagonal == 0 {
            return Err(Error::param("pairs", "the cloud is empty"));
        }
        if self.marks == 0 || self.pair_marks == 0 {
            return Err(Error::param("marks", "must be positive"));
        }
        Ok(())
    }

    /// The deterministic cloud for a given dimension and seed.
    pub fn cloud(&self, dim: usize, seed: u64) -> Result<PointCloud> {
        self.validate()?;
        let mut rng = path_rng(substream(seed, "hypothesis-cloud"), 0);
        let mut pairs = Vec::with_capacity(self.pairs + self.near_diagonal);
        for _ in 0..self.pairs {
            let x = uniform_ball(&mut rng, dim, self.radius);
            let y = uniform_ball(&mut rng, dim, self.radius);
            pairs.push((x, y));
        }
        let n = self.near_diagonal;
        for k in 0..n {
            let frac = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            let gap = self.min_gap.powf(1.0 - frac);
            let x = uniform_ball(&mut rng, dim, self.radius);
            let y = &x + unit_vector(&mut rng, dim) * gap;
            pairs.push((x, y));
        }
        let mut points = vec![DVector::zeros(dim)];
        for (x, y) in &pairs {
            points.push(x.clone());
            points.push(y.clone());
        }
        Ok(PointCloud { points, pairs })
    }
}

fn unit_vector(rng: &mut PathRng, dim: usize) -> State {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn uniform_ball(rng: &mut PathRng, dim: usize, radius: f64) -> State {
    let dir = unit_vector(rng, dim);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir * r
}

/// Sampled points (the origin first) and pairs.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<State>,
    pub pairs: Vec<(State, State)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Inconclusive,
}

/// Audit of one hypothesis. Pair inequalities are divided through by
/// `|x - y|^2` (by `|x - y|` for the Lipschitz bound on `f`) so that
/// near-diagonal pairs are compared on the same scale as distant ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub name: String,
    pub satisfied: Verdict,
    /// Signed slack `lhs - rhs` at the sample closest to violating.
    pub worst_violation: f64,
    /// Tolerance applied at that sample.
    pub tolerance: f64,
    /// Point(s) achieving the worst slack.
    pub witness: Vec<Vec<f64>>,
    /// Monte Carlo standard error of the slack at the witness, if any.
    pub stderr: Option<f64>,
    pub samples_used: u64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub model: String,
    pub seed: u64,
    pub entries: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub fn entry(&self, h: Hypothesis) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| e.name == h.name())
    }

    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied == Verdict::Yes)
    }
}

/// Running worst case over the samples of one inequality.
struct Audit {
    name: &'static str,
    worst_excess: f64,
    slack: f64,
    tolerance: f64,
    witness: Vec<Vec<f64>>,
    stderr: Option<f64>,
    samples: u64,
    note: Option<String>,
}

impl Audit {
    fn new(h: Hypothesis) -> Self {
        Audit {
            name: h.name(),
            worst_excess: f64::NEG_INFINITY,
            slack: f64::NEG_INFINITY,
            tolerance: 0.0,
            witness: Vec::new(),
            stderr: None,
            samples: 0,
            note: None,
        }
    }

    /// Records `lhs <= rhs`; `scale` is the magnitude of the dominant term.
    fn record(&mut self, lhs: f64, rhs: f64, scale: f64, stderr: Option<f64>, witness: &[&State]) {
        self.record_with_roundoff(lhs, rhs, scale, 0.0, stderr, witness);
    }

    /// As [`Self::record`], with `roundoff` the magnitude of the terms that
    /// cancel when forming differences such as `b(x) - b(y)`.
    fn record_with_roundoff(
        &mut self,
        lhs: f64,
        rhs: f64,
        scale: f64,
        roundoff: f64,
        stderr: Option<f64>,
        witness: &[&State],
    ) {
        self.samples += 1;
        let slack = lhs - rhs;
        let tol = 1e-9 * (1.0 + scale.abs()) + 16.0 * f64::EPSILON * roundoff;
        let excess = match stderr {
            // Rank noisy samples by their upper confidence excess.
            Some(se) => slack - tol + 3.0 * se,
            None => slack - tol,
        };
        if excess > self.worst_excess {
            self.worst_excess = excess;
            self.slack = slack;
            self.tolerance = tol;
            self.stderr = stderr;
            self.witness = witness.iter().map(|p| p.iter().copied().collect()).collect();
        }
    }

    fn finish(self) -> HypothesisEntry {
        let se = self.stderr.unwrap_or(0.0);
        let satisfied = if self.samples == 0 || self.slack <= self.tolerance && self.slack + 3.0 * se <= self.tolerance {
            Verdict::Yes
        } else if self.slack - 3.0 * se > self.tolerance {
            Verdict::No
        } else {
            Verdict::Inconclusive
        };
        HypothesisEntry {
            name: self.name.to_string(),
            satisfied,
            worst_violation: if self.samples == 0 { 0.0 } else { self.slack },
            tolerance: self.tolerance,
            witness: if satisfied == Verdict::Yes && self.samples == 0 { Vec::new() } else { self.witness },
            stderr: self.stderr,
            samples_used: self.samples,
            note: self.note,
        }
    }
}

struct Evaluator<'a> {
    m: &'a CoefficientSet,
}

impl<'a> Evaluator<'a> {
    fn drift(&self, x: &State) -> Result<State> {
        let v = self.m.drift(x);
        CoefficientSet::ensure_finite("drift", x, v.as_slice())?;
        Ok(v)
    }

    fn diffusion(&self, x: &State) -> Result<nalgebra::DMatrix<f64>> {
        let s = self.m.diffusion(x);
        CoefficientSet::ensure_finite("diffusion", x, s.as_slice())?;
        Ok(s)
    }

    fn jump(&self, x: &State, u: &State) -> Result<State> {
        let v = self.m.jump(x, u);
        CoefficientSet::ensure_finite("jump map", x, v.as_slice())?;
        Ok(v)
    }

    fn kappa(&self, x: &State, y: &State) -> Result<f64> {
        let gap = (x - y).norm();
        let k = self.m.kappa().eval(gap)?;
        if !k.is_finite() {
            return Err(Error::Evaluation {
                what: "modulus".into(),
                point: x.iter().copied().collect(),
            });
        }
        Ok(k)
    }
}

/// Evaluates each selected hypothesis on the cloud described by `sampler`.
///
/// The result is bit-identical for identical `(coeffs, which, sampler, seed)`.
pub fn check_hypotheses(
    coeffs: &CoefficientSet,
    which: &[Hypothesis],
    sampler: &SamplerSpec,
    seed: u64,
) -> Result<HypothesisReport> {
    let cloud = sampler.cloud(coeffs.dim(), seed)?;
    let ev = Evaluator { m: coeffs };
    let mut mark_rng = path_rng(substream(seed, "hypothesis-marks"), 0);
    let marks: Vec<State> = if coeffs.has_jumps() {
        (0..sampler.pair_marks.max(sampler.marks))
            .map(|_| coeffs.kernel().sample_mark(&mut mark_rng))
            .collect()
    } else {
        Vec::new()
    };
    let mut selected: Vec<Hypothesis> = which.to_vec();
    selected.sort();
    selected.dedup();
    let mut entries = Vec::with_capacity(selected.len());
    for h in selected {
        let entry = match h {
            Hypothesis::H1 => check_h1(&ev, &cloud, false)?,
            Hypothesis::H1Prime => check_h1(&ev, &cloud, true)?,
            Hypothesis::H2 => check_h2(&ev, &cloud)?,
            Hypothesis::H3 => check_h3(&ev, &cloud)?,
            Hypothesis::Hf => check_hf(&ev, &cloud, sampler, &marks)?,
            Hypothesis::HfPrime => check_hf_prime(&ev, &cloud, sampler, &marks)?,
            Hypothesis::Hbsf => check_hbsf(&ev, &cloud, sampler, &marks)?,
        };
        entries.push(entry);
    }
    Ok(HypothesisReport {
        model: coeffs.label().to_string(),
        seed,
        entries,
    })
}

fn check_h1(ev: &Evaluator, cloud: &PointCloud, prime: bool) -> Result<HypothesisEntry> {
    let c = ev.m.constants();
    let mut audit = Audit::new(if prime { Hypothesis::H1Prime } else { Hypothesis::H1 });
    for (x, y) in &cloud.pairs {
        let diff = x - y;
        let g2 = diff.norm_squared();
        if g2 == 0.0 {
            continue;
        }
        let (bx, by) = (ev.drift(x)?, ev.drift(y)?);
        let drift_term = 2.0 * diff.dot(&(&bx - &by));
        let (sx, sy) = (ev.diffusion(x)?, ev.diffusion(y)?);
        let sigma_gap = hs_norm(&(&sx - &sy));
        let roundoff = (2.0 * g2.sqrt() * (bx.norm() + by.norm()) + 2.0 * sigma_gap * (hs_norm(&sx) + hs_norm(&sy))) / g2;
        let noise_term = if prime {
            match (sigma_lambda(&sx, c.lambda2), sigma_lambda(&sy, c.lambda2)) {
                (Ok(a), Ok(b)) => hs_norm(&(a.as_matrix() - b.as_matrix())).powi(2),
                (Err(Error::NotPsd { eigenvalue, .. }), _) | (_, Err(Error::NotPsd { eigenvalue, .. })) => {
                    audit.note = Some("sigma sigma^T - lambda2 I is not PSD at the witness".into());
                    audit.record(-eigenvalue, 0.0, 0.0, None, &[x, y]);
                    continue;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        } else {
            sigma_gap.powi(2)
        };
        let lhs = (drift_term + noise_term) / g2;
        let rhs = c.lambda0 * ev.kappa(x, y)?;
        let scale = drift_term.abs().max(noise_term) / g2 + rhs.abs();
        audit.record_with_roundoff(lhs, rhs, scale, roundoff, None, &[x, y]);
    }
    Ok(audit.finish())
}

fn check_h2(ev: &Evaluator, cloud: &PointCloud) -> Result<HypothesisEntry> {
    let c = ev.m.constants();
    let mut audit = Audit::new(Hypothesis::H2);
    for x in &cloud.points {
        let lhs = ev.drift(x)?.norm_squared() + hs_norm(&ev.diffusion(x)?).powi(2);
        let rhs = c.lambda1 * (1.0 + x.norm()).powi(2);
        audit.record(lhs, rhs, lhs.max(rhs), None, &[x]);
    }
    Ok(audit.finish())
}

fn check_h3(ev: &Evaluator, cloud: &PointCloud) -> Result<HypothesisEntry> {
    let c = ev.m.constants();
    let floor = c.lambda2.sqrt();
    let mut audit = Audit::new(Hypothesis::H3);
    for x in &cloud.points {
        let s = ev.diffusion(x)?;
        let low = SymmetricMatrix::symmetrize(&s)?.min_eigenvalue();
        audit.record(floor, low, floor.max(low.abs()), None, &[x]);
    }
    Ok(audit.finish())
}

/// `int |f(x,u)|^q nu(du)`: closed form when available, else Monte Carlo.
fn jump_moment(ev: &Evaluator, x: &State, q: u32, marks: &[State], n: usize) -> Result<(f64, Option<f64>)> {
    if let Some(v) = ev.m.analytic_jump_moment(x, q) {
        return Ok((v, None));
    }
    let rate = ev.m.kernel().total_rate();
    let mut samples = Vec::with_capacity(n);
    for u in &marks[..n] {
        samples.push(ev.jump(x, u)?.norm().powi(q as i32));
    }
    let est = Estimate::from_samples(samples);
    Ok((rate * est.value, Some(rate * est.stderr)))
}

fn moment_points(ev: &Evaluator, cloud: &PointCloud, sampler: &SamplerSpec, q: u32) -> usize {
    let has_closed_form = ev.m.analytic_jump_moment(&cloud.points[0], q).is_some();
    if has_closed_form {
        cloud.points.len()
    } else {
        sampler.moment_points.clamp(1, cloud.points.len())
    }
}

fn check_hf(ev: &Evaluator, cloud: &PointCloud, sampler: &SamplerSpec, marks: &[State]) -> Result<HypothesisEntry> {
    let c = ev.m.constants();
    let mut audit = Audit::new(Hypothesis::Hf);
    if !ev.m.has_jumps() {
        audit.note = Some("no jumps: the conditions on f hold trivially".into());
        return Ok(audit.finish());
    }
    let rate = ev.m.kernel().total_rate();
    let pm = &marks[..sampler.pair_marks];
    for (x, y) in &cloud.pairs {
        let g2 = (x - y).norm_squared();
        if g2 == 0.0 {
            continue;
        }
        let mut samples = Vec::with_capacity(pm.len());
        let mut roundoff = 0.0f64;
        for u in pm {
            let (fx, fy) = (ev.jump(x, u)?, ev.jump(y, u)?);
            let df = (&fx - &fy).norm();
            roundoff = roundoff.max(2.0 * df * (fx.norm() + fy.norm()) / g2);
            samples.push(df * df / g2);
        }
        let est = Estimate::from_samples(samples);
        let lhs = rate * est.value;
        let rhs = 2.0 * c.lambda0.abs() * ev.kappa(x, y)?;
        let se = rate * est.stderr;
        audit.record_with_roundoff(lhs, rhs, lhs.max(rhs), rate * roundoff, (se > 0.0).then_some(se), &[x, y]);
    }
    for q in [2u32, 4] {
        let n = moment_points(ev, cloud, sampler, q);
        for x in &cloud.points[..n] {
            let (lhs, se) = jump_moment(ev, x, q, marks, sampler.marks)?;
            let rhs = c.lambda1 * (1.0 + x.norm()).powi(q as i32);
            audit.record(lhs, rhs, lhs.max(rhs), se, &[x]);
        }
    }
    if c.lambda0 == 0.0 {
        audit.note = Some("lambda0 = 0 requires f(., u) to be constant in x".into());
    }
    Ok(audit.finish())
}

fn check_hf_prime(
    ev: &Evaluator,
    cloud: &PointCloud,
    sampler: &SamplerSpec,
    marks: &[State],
) -> Result<HypothesisEntry> {
    let gamma = ev.m.constants().gamma;
    let mut audit = Audit::new(Hypothesis::HfPrime);
    if !ev.m.has_jumps() {
        audit.note = Some("no jumps: the conditions on f hold trivially".into());
        return Ok(audit.finish());
    }
    let zero = DVector::zeros(ev.m.dim());
    let pm = &marks[..sampler.pair_marks];
    for u in pm {
        let l = ev.m.jump_lipschitz(u);
        audit.record(l, gamma, l.max(gamma), None, &[u]);
        let f0 = ev.jump(&zero, u)?.norm();
        audit.record(f0, l, f0.max(l), None, &[&zero, u]);
    }
    for (k, (x, y)) in cloud.pairs.iter().enumerate() {
        let gap = (x - y).norm();
        if gap == 0.0 {
            continue;
        }
        let u = &pm[k % pm.len()];
        let (fx, fy) = (ev.jump(x, u)?, ev.jump(y, u)?);
        let lhs = (&fx - &fy).norm() / gap;
        let l = ev.m.jump_lipschitz(u);
        let roundoff = (fx.norm() + fy.norm()) / gap;
        audit.record_with_roundoff(lhs, l, lhs.max(l), roundoff, None, &[x, y, u]);
    }
    Ok(audit.finish())
}

fn check_hbsf(ev: &Evaluator, cloud: &PointCloud, sampler: &SamplerSpec, marks: &[State]) -> Result<HypothesisEntry> {
    let c = ev.m.constants();
    let mut audit = Audit::new(Hypothesis::Hbsf);
    let n = if ev.m.has_jumps() {
        moment_points(ev, cloud, sampler, 2)
    } else {
        cloud.points.len()
    };
    for x in &cloud.points[..n] {
        let drift_term = 2.0 * x.dot(&ev.drift(x)?);
        let noise = hs_norm(&ev.diffusion(x)?).powi(2);
        let (jump, se) = if ev.m.has_jumps() {
            jump_moment(ev, x, 2, marks, sampler.marks)?
        } else {
            (0.0, None)
        };
        let lhs = drift_term + noise + jump;
        let growth = c.lambda3 * x.norm().powf(c.r);
        let rhs = -growth + c.lambda4;
        let scale = drift_term.abs().max(noise).max(jump).max(growth).max(c.lambda4);
        audit.record(lhs, rhs, scale, se, &[x]);
    }
    Ok(audit.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_is_deterministic_and_contains_near_diagonal_pairs() {
        let s = SamplerSpec::default();
        let a = s.cloud(2, 5).unwrap();
        let b = s.cloud(2, 5).unwrap();
        assert_eq!(a.pairs, b.pairs);
        let min_gap = a.pairs.iter().map(|(x, y)| (x - y).norm()).fold(f64::INFINITY, f64::min);
        assert!((min_gap - 1e-8).abs() < 1e-15);
        assert!(a.points.iter().all(|p| p.norm() <= 10.0 + 1.0));
    }

    #[test]
    fn hypothesis_names_round_trip() {
        for h in Hypothesis::ALL {
            assert_eq!(Hypothesis::parse(h.name()), Some(h));
            let js = serde_json::to_string(&h).unwrap();
            assert_eq!(js, format!("\"{}\"", h.name()));
        }
    }
}
