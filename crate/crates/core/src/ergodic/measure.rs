use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Largest dimension handled by gridded measures.
pub const MAX_GRID_DIM: usize = 3;

/// Axis-aligned box split into equal cells per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl HistogramGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d || bins.len() != d {
            return Err(Error::param("grid", "lo, hi and bins must have the same positive length"));
        }
        if d > MAX_GRID_DIM {
            return Err(Error::Usage(format!(
                "gridded measures support d <= {MAX_GRID_DIM}; use test-function distances for d = {d}"
            )));
        }
        for k in 0..d {
            if !(lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k]) {
                return Err(Error::param("grid", format!("axis {k} needs finite lo < hi")));
            }
            if bins[k] == 0 {
                return Err(Error::param("grid", format!("axis {k} needs at least one bin")));
            }
        }
        Ok(HistogramGrid { lo, hi, bins })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], vec![bins; dim])
    }

    /// Box spanning the central `coverage` fraction of the samples on each
    /// axis, widened by 5% of its width on both sides.
    pub fn covering<'a, I>(dim: usize, samples: I, bins: usize, coverage: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        if !(coverage > 0.0 && coverage <= 1.0) {
            return Err(Error::param("coverage", "must lie in (0, 1]"));
        }
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for x in samples {
            for (k, axis) in axes.iter_mut().enumerate() {
                if x[k].is_finite() {
                    axis.push(x[k]);
                }
            }
        }
        let tail = (1.0 - coverage) / 2.0;
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for axis in axes.iter_mut() {
            if axis.is_empty() {
                return Err(Error::param("samples", "no finite samples to cover"));
            }
            axis.sort_by(f64::total_cmp);
            let (a, b) = (quantile_sorted(axis, tail), quantile_sorted(axis, 1.0 - tail));
            let pad = if b > a { 0.05 * (b - a) } else { 0.5 * (1.0 + a.abs()) };
            lo.push(a - pad);
            hi.push(b + pad);
        }
        Self::new(lo, hi, vec![bins; dim])
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn width(&self, k: usize) -> f64 {
        (self.hi[k] - self.lo[k]) / self.bins[k] as f64
    }

    /// Row-major cell index, `None` outside the box. The upper face belongs
    /// to the last cell.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut index = 0;
        for k in 0..self.dim() {
            let v = x[k];
            if !(v >= self.lo[k] && v <= self.hi[k]) {
                return None;
            }
            let i = (((v - self.lo[k]) / self.width(k)) as usize).min(self.bins[k] - 1);
            index = index * self.bins[k] + i;
        }
        Some(index)
    }

    pub fn cell_index(&self, cell: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut c = cell;
        for k in (0..self.dim()).rev() {
            idx[k] = c % self.bins[k];
            c /= self.bins[k];
        }
        idx
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        self.cell_index(cell)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.lo[k] + (i as f64 + 0.5) * self.width(k))
            .collect()
    }

    /// Nested grid merging `factor[k]` consecutive cells on axis `k`.
    pub fn coarsen(&self, factor: &[usize]) -> Result<Self> {
        if factor.len() != self.dim() {
            return Err(Error::param("factor", "one factor per axis"));
        }
        for (k, &f) in factor.iter().enumerate() {
            if f == 0 || self.bins[k] % f != 0 {
                return Err(Error::param("factor", format!("axis {k}: {f} does not divide {}", self.bins[k])));
            }
        }
        Self::new(
            self.lo.clone(),
            self.hi.clone(),
            self.bins.iter().zip(factor).map(|(b, f)| b / f).collect(),
        )
    }
}

/// Running mean and second central moment per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Moments { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for k in 0..self.mean.len() {
            let delta = x[k] - self.mean[k];
            self.mean[k] += delta / n;
            self.m2[k] += delta * (x[k] - self.mean[k]);
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }

    /// Sample variance per coordinate.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|m| m / d).collect()
    }
}

/// Histogram of samples on a fixed grid; masses are kept as counts so
/// merging partial histograms is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub grid: HistogramGrid,
    counts: Vec<u64>,
    overflow: u64,
    /// Moments of the raw samples, independent of the binning.
    pub moments: Moments,
}

impl EmpiricalMeasure {
    pub fn empty(grid: HistogramGrid) -> Self {
        let d = grid.dim();
        let n = grid.n_cells();
        EmpiricalMeasure { grid, counts: vec![0; n], overflow: 0, moments: Moments::new(d) }
    }

    pub fn from_samples<'a, I>(grid: HistogramGrid, samples: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut m = Self::empty(grid);
        for x in samples {
            m.push(x);
        }
        m
    }

    pub fn push(&mut self, x: &[f64]) {
        match self.grid.cell_of(x) {
            Some(c) => self.counts[c] += 1,
            None => self.overflow += 1,
        }
        self.moments.push(x);
    }

    pub fn merge(&mut self, other: &EmpiricalMeasure) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Usage("cannot merge measures on different grids".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.moments.merge(&other.moments);
        Ok(())
    }

    pub fn sample_count(&self) -> u64 {
        self.moments.n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mass(&self, cell: usize) -> f64 {
        self.counts[cell] as f64 / self.moments.n as f64
    }

    pub fn masses(&self) -> Vec<f64> {
        let n = self.moments.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn overflow(&self) -> f64 {
        self.overflow as f64 / self.moments.n as f64
    }

    pub fn mean(&self) -> &[f64] {
        &self.moments.mean
    }

    pub fn variance(&self) -> Vec<f64> {
        self.moments.variance()
    }

    /// Measure of the same samples on a nested coarser grid.
    pub fn coarsen(&self, factor: &[usize]) -> Result<EmpiricalMeasure> {
        let grid = self.grid.coarsen(factor)?;
        let mut counts = vec![0u64; grid.n_cells()];
        for (cell, &c) in self.counts.iter().enumerate() {
            let idx = self.grid.cell_index(cell);
            let mut j = 0;
            for k in 0..grid.dim() {
                j = j * grid.bins[k] + idx[k] / factor[k];
            }
            counts[j] += c;
        }
        Ok(EmpiricalMeasure { grid, counts, overflow: self.overflow, moments: self.moments.clone() })
    }

    /// `int phi dmu` with each cell represented by its center; overflow
    /// mass is dropped.
    pub fn integrate_centers(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(cell, _)| self.mass(cell) * phi(&self.grid.cell_center(cell)))
            .sum()
    }

    /// Text export: grid spec, then `cell,center..,mass` rows and the
    /// overflow mass.
    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# lo={:?}", self.grid.lo)?;
        writeln!(out, "# hi={:?}", self.grid.hi)?;
        writeln!(out, "# bins={:?}", self.grid.bins)?;
        writeln!(out, "# samples={}", self.sample_count())?;
        let header: Vec<String> = (0..self.grid.dim()).map(|k| format!("c{k}")).collect();
        writeln!(out, "cell,{},mass", header.join(","))?;
        for (cell, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let center: Vec<String> = self.grid.cell_center(cell).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{cell},{},{:.16e}", center.join(","), self.mass(cell))?;
        }
        writeln!(out, "overflow,{:.16e}", self.overflow())?;
        Ok(())
    }
}

/// `1/2 sum |m1 - m2| + 1/2 |overflow1 - overflow2|`.
pub fn tv_distance(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    Ok(tv_estimate(a, b)?.value)
}

/// Total variation between two empirical measures with its sampling error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    /// Delta-method standard error from the two multinomial samples.
    pub stderr: f64,
    /// Expected value of the estimator when both samples share one law:
    /// `1/2 sum sqrt(2/pi * p (1 - p) (1/n1 + 1/n2))`.
    pub floor: f64,
}

impl TvEstimate {
    /// True when the value stands clear of both the sampling error and the
    /// null bias.
    pub fn usable(&self) -> bool {
        self.value - self.floor > 3.0 * self.stderr
    }
}

pub fn tv_estimate(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<TvEstimate> {
    if a.grid != b.grid {
        return Err(Error::Usage("total variation needs measures on identical grids".into()));
    }
    let (na, nb) = (a.sample_count() as f64, b.sample_count() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Usage("total variation of an empty measure".into()));
    }
    let pairs = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(&x, &y)| (x as f64 / na, y as f64 / nb))
        .chain(std::iter::once((a.overflow(), b.overflow())));
    let inv = 1.0 / na + 1.0 / nb;
    let mut sum = 0.0;
    let (mut sa, mut sb) = (0.0, 0.0);
    let mut occupied_a = 0.0;
    let mut occupied_b = 0.0;
    let mut floor = 0.0;
    for (p, q) in pairs {
        let diff = p - q;
        sum += diff.abs();
        if diff != 0.0 {
            let s = diff.signum();
            sa += s * p;
            sb += s * q;
            occupied_a += p;
            occupied_b += q;
        }
        let pooled = (p * na + q * nb) / (na + nb);
        floor += (2.0 / std::f64::consts::PI * pooled * (1.0 - pooled) * inv).sqrt();
    }
    let var = 0.25 * ((occupied_a - sa * sa).max(0.0) / na + (occupied_b - sb * sb).max(0.0) / nb);
    Ok(TvEstimate { value: (0.5 * sum).min(1.0), stderr: var.sqrt(), floor: 0.5 * floor })
}
