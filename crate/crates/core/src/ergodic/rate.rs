use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::path_rng;
use crate::stats::quantile_sorted;

/// One observation of a decaying quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    /// Bias of the estimator at zero signal; 0 when unknown.
    pub floor: f64,
}

impl DecayPoint {
    pub fn new(t: f64, value: f64, stderr: f64) -> Self {
        DecayPoint { t, value, stderr, floor: 0.0 }
    }

    /// Clear of the noise: `value - floor > 3 stderr`.
    pub fn usable(&self) -> bool {
        self.value.is_finite() && self.value > 0.0 && self.value - self.floor > 3.0 * self.stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    /// The window starts at the first point below this fraction of the
    /// first value.
    pub knee_fraction: f64,
    pub bootstrap: usize,
    pub seed: u64,
    /// Weight each log value by its inverse delta-method variance
    /// `(value / stderr)^2` instead of equally.
    pub weighted: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions { knee_fraction: 0.9, bootstrap: 2000, seed: 0, weighted: false }
    }
}

/// Log-linear fit `value ~ C exp(-alpha t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<DecayPoint>,
    /// Indices of the points entering the fit: `[start, end)`.
    pub window: (usize, usize),
    pub alpha: f64,
    pub log_c: f64,
    pub c: f64,
    pub r_squared: f64,
    /// Percentile 95% interval of `alpha` from a pairs bootstrap.
    pub alpha_ci: (f64, f64),
    pub bootstrap: usize,
    pub seed: u64,
    pub weighted: bool,
}

impl RateFit {
    pub fn ci_contains(&self, alpha: f64) -> bool {
        self.alpha_ci.0 <= alpha && alpha <= self.alpha_ci.1
    }

    /// `C exp(-alpha t / gamma)`.
    pub fn reference(&self, t: f64, gamma: f64) -> f64 {
        self.c * (-self.alpha * t / gamma).exp()
    }
}

/// Weighted least squares `(slope, intercept, r_squared)`.
fn least_squares(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(b, c)| b * c).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((a, b), c) in x.iter().zip(y).zip(w) {
        sxx += c * (a - mx) * (a - mx);
        sxy += c * (a - mx) * (b - my);
        syy += c * (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        let sse: f64 = x.iter().zip(y).zip(w).map(|((a, b), c)| c * (b - intercept - slope * a).powi(2)).sum();
        1.0 - sse / syy
    };
    (slope, intercept, r2)
}

/// Fits the exponential decay rate over the window that starts at the
/// mixing knee and runs through the consecutive usable points after it.
pub fn rate_fit(points: &[DecayPoint], opts: &RateOptions) -> Result<RateFit> {
    if points.is_empty() {
        return Err(Error::InsufficientSignal { usable: 0 });
    }
    if points.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::param("times", "must be strictly increasing"));
    }
    let first = points[0].value;
    let start = points
        .iter()
        .position(|p| p.value < opts.knee_fraction * first)
        .unwrap_or(0);
    let end = start + points[start..].iter().take_while(|p| p.usable()).count();
    let usable = end - start;
    if usable < 4 {
        return Err(Error::InsufficientSignal { usable });
    }
    let x: Vec<f64> = points[start..end].iter().map(|p| p.t).collect();
    let y: Vec<f64> = points[start..end].iter().map(|p| p.value.ln()).collect();
    let w: Vec<f64> = points[start..end]
        .iter()
        .map(|p| if opts.weighted { 1.0 / (p.stderr / p.value).powi(2).max(1e-24) } else { 1.0 })
        .collect();
    let (slope, intercept, r_squared) = least_squares(&x, &y, &w);

    let mut rng = path_rng(opts.seed, 0);
    let mut alphas = Vec::with_capacity(opts.bootstrap);
    let (mut bx, mut by, mut bw) = (vec![0.0; usable], vec![0.0; usable], vec![0.0; usable]);
    while alphas.len() < opts.bootstrap {
        for k in 0..usable {
            let j = rng.random_range(0..usable);
            bx[k] = x[j];
            by[k] = y[j];
            bw[k] = w[j];
        }
        if bx.iter().all(|&v| v == bx[0]) {
            continue;
        }
        alphas.push(-least_squares(&bx, &by, &bw).0);
    }
    alphas.sort_by(f64::total_cmp);
    let alpha = -slope;
    let alpha_ci = if alphas.is_empty() {
        (alpha, alpha)
    } else {
        (quantile_sorted(&alphas, 0.025), quantile_sorted(&alphas, 0.975))
    };
    Ok(RateFit {
        points: points.to_vec(),
        window: (start, end),
        alpha,
        log_c: intercept,
        c: intercept.exp(),
        r_squared,
        alpha_ci,
        bootstrap: opts.bootstrap,
        seed: opts.seed,
        weighted: opts.weighted,
    })
}
