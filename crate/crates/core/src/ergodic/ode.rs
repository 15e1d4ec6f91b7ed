use crate::error::{Error, Result};

/// Largest internal step of the implicit integrator.
const MAX_STEP: f64 = 5e-3;

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

fn validate(r: f64, lambda3: f64, lambda4: f64, x0sq: f64) -> Result<()> {
    if !(r > 2.0 && r.is_finite()) {
        return Err(Error::param("r", "the comparison bound needs r > 2"));
    }
    if !(lambda3 > 0.0 && lambda3.is_finite()) {
        return Err(Error::param("lambda3", "must be positive"));
    }
    if !(lambda4 >= 0.0 && lambda4.is_finite()) {
        return Err(Error::param("lambda4", "must be non-negative"));
    }
    if !(x0sq >= 0.0 && x0sq.is_finite()) {
        return Err(Error::param("x0sq", "must be non-negative"));
    }
    Ok(())
}

struct Rhs {
    p: f64,
    lambda3: f64,
    lambda4: f64,
}

impl Rhs {
    fn f(&self, y: f64) -> f64 {
        -self.lambda3 * y.max(0.0).powf(self.p) + self.lambda4
    }

    fn df(&self, y: f64) -> f64 {
        if y > 0.0 {
            -self.lambda3 * self.p * y.powf(self.p - 1.0)
        } else {
            0.0
        }
    }

    /// One two-stage Gauss-Legendre step, stages solved by Newton.
    fn step(&self, y: f64, h: f64) -> f64 {
        let (a11, a12, a21, a22) = (0.25, 0.25 - SQRT3_6, 0.25 + SQRT3_6, 0.25);
        let (mut k1, mut k2) = (self.f(y), self.f(y));
        for _ in 0..50 {
            let y1 = y + h * (a11 * k1 + a12 * k2);
            let y2 = y + h * (a21 * k1 + a22 * k2);
            let g1 = k1 - self.f(y1);
            let g2 = k2 - self.f(y2);
            let (d1, d2) = (self.df(y1), self.df(y2));
            let j11 = 1.0 - h * a11 * d1;
            let j12 = -h * a12 * d1;
            let j21 = -h * a21 * d2;
            let j22 = 1.0 - h * a22 * d2;
            let det = j11 * j22 - j12 * j21;
            let dk1 = (g1 * j22 - g2 * j12) / det;
            let dk2 = (j11 * g2 - j21 * g1) / det;
            k1 -= dk1;
            k2 -= dk2;
            if dk1.abs().max(dk2.abs()) <= 1e-15 * (1.0 + k1.abs().max(k2.abs())) {
                break;
            }
        }
        (y + 0.5 * h * (k1 + k2)).max(0.0)
    }
}

/// Solution of `f' = -lambda3 f^{r/2} + lambda4`, `f(0) = x0sq`, at each
/// of the increasing `times`.
pub fn drift_ode_curve(r: f64, lambda3: f64, lambda4: f64, x0sq: f64, times: &[f64]) -> Result<Vec<f64>> {
    validate(r, lambda3, lambda4, x0sq)?;
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("times", "must be finite, non-negative and non-decreasing"));
    }
    let rhs = Rhs { p: r / 2.0, lambda3, lambda4 };
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut y) = (0.0, x0sq);
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / MAX_STEP).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for _ in 0..n {
                y = rhs.step(y, h);
            }
            t = target;
        }
        out.push(y);
    }
    Ok(out)
}

/// Comparison bound on `E|X_t|^2` at time `t`.
pub fn drift_ode_bound(r: f64, lambda3: f64, lambda4: f64, x0sq: f64, t: f64) -> Result<f64> {
    Ok(drift_ode_curve(r, lambda3, lambda4, x0sq, &[t])?[0])
}

/// Closed form for `lambda4 = 0`:
/// `(f0^{1 - r/2} + lambda3 (r/2 - 1) t)^{1 / (1 - r/2)}`.
pub fn drift_ode_closed_form(r: f64, lambda3: f64, x0sq: f64, t: f64) -> Result<f64> {
    validate(r, lambda3, 0.0, x0sq)?;
    let e = 1.0 - r / 2.0;
    Ok((x0sq.powf(e) + lambda3 * (r / 2.0 - 1.0) * t).powf(1.0 / e))
}

/// Fixed point `(lambda4 / lambda3)^{2/r}`.
pub fn drift_ode_equilibrium(r: f64, lambda3: f64, lambda4: f64) -> Result<f64> {
    validate(r, lambda3, lambda4, 0.0)?;
    Ok((lambda4 / lambda3).powf(2.0 / r))
}
