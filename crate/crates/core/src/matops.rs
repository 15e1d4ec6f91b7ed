//! Symmetric positive semidefinite matrix algebra: principal square roots,
//! the shifted root `sqrt(sigma sigma^T - lambda2 I)`, Hilbert-Schmidt norms
//! and a direct numerical check of the commuting-pair norm inequality
//! `||A - B|| <= ||sqrt(A^2 - lambda I) - sqrt(B^2 - lambda I)||`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense real symmetric matrix. Construction copies the lower triangle
/// into the upper one, so `m[(i, j)] == m[(j, i)]` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Builds from the lower triangle of `m`.
    pub fn from_lower(mut m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Domain(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let d = m.nrows();
        for j in 0..d {
            for i in 0..j {
                m[(i, j)] = m[(j, i)];
            }
        }
        Ok(SymmetricMatrix(m))
    }

    /// Symmetrizes `(m + m^T) / 2`.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Domain("matrix must be square".into()));
        }
        Self::from_lower((m + m.transpose()) * 0.5)
    }

    pub fn identity(d: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Eigenvalues sorted ascending with matching eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self.dim() {
            1 => self.0[(0, 0)],
            2 => eig2(&self.0).0,
            _ => self.eigen().0[0],
        }
    }
}

/// Hilbert-Schmidt (Frobenius) norm `sqrt(sum m_ij^2)`.
pub fn hs_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Default clipping tolerance `1e-10 * max(1, ||M||_HS)`.
pub fn default_clip_tol(m: &DMatrix<f64>) -> f64 {
    1e-10 * hs_norm(m).max(1.0)
}

/// Eigenvalues (ascending) of a symmetric 2x2 matrix.
fn eig2(m: &DMatrix<f64>) -> (f64, f64) {
    let (a, b, c) = (m[(0, 0)], m[(1, 0)], m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - rad, mean + rad)
}

/// Principal square root of a symmetric PSD matrix.
///
/// Eigenvalues in `[-clip_tol, 0)` are clipped to zero; anything more
/// negative is rejected with [`Error::NotPsd`].
pub fn sqrt_psd(m: &SymmetricMatrix, clip_tol: f64) -> Result<SymmetricMatrix> {
    let a = m.as_matrix();
    match m.dim() {
        0 => return Ok(m.clone()),
        1 => {
            let v = a[(0, 0)];
            if v < -clip_tol {
                return Err(Error::NotPsd { eigenvalue: v, tolerance: clip_tol });
            }
            return Ok(SymmetricMatrix(DMatrix::from_element(1, 1, v.max(0.0).sqrt())));
        }
        2 => {
            let (lo, hi) = eig2(a);
            if lo < -clip_tol {
                return Err(Error::NotPsd { eigenvalue: lo, tolerance: clip_tol });
            }
            if lo < 0.0 {
                return sqrt_psd_eigen(m, clip_tol);
            }
            // Closed form for 2x2: S = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).
            let s = lo.sqrt() * hi.sqrt();
            let t = (lo + hi + 2.0 * s).sqrt();
            if t == 0.0 {
                return Ok(SymmetricMatrix(DMatrix::zeros(2, 2)));
            }
            let mut out = a.clone();
            out[(0, 0)] += s;
            out[(1, 1)] += s;
            return SymmetricMatrix::from_lower(out / t);
        }
        _ => {}
    }
    sqrt_psd_eigen(m, clip_tol)
}

fn sqrt_psd_eigen(m: &SymmetricMatrix, clip_tol: f64) -> Result<SymmetricMatrix> {
    let (values, vectors) = m.eigen();
    if values[0] < -clip_tol {
        return Err(Error::NotPsd { eigenvalue: values[0], tolerance: clip_tol });
    }
    let roots = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| v.max(0.0).sqrt()),
    ));
    SymmetricMatrix::from_lower(&vectors * roots * vectors.transpose())
}

/// `sigma_lambda = sqrt_psd(sigma sigma^T - lambda2 I)`.
///
/// A [`Error::NotPsd`] failure means the nondegeneracy bound
/// `<sigma h, h> >= sqrt(lambda2) |h|^2` cannot hold at this point.
pub fn sigma_lambda(sigma: &DMatrix<f64>, lambda2: f64) -> Result<SymmetricMatrix> {
    if !(lambda2 > 0.0) {
        return Err(Error::param("lambda2", "must be positive"));
    }
    let d = sigma.nrows();
    let a = sigma * sigma.transpose() - DMatrix::identity(d, d) * lambda2;
    let tol = default_clip_tol(&a);
    sqrt_psd(&SymmetricMatrix::from_lower(a)?, tol)
}

/// Outcome of [`lemma21_gap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormGap {
    /// `||A - B||_HS`
    pub lhs: f64,
    /// `||A_lambda - B_lambda||_HS`
    pub rhs: f64,
    pub holds: bool,
}

fn check_commuting_pair(a: &SymmetricMatrix, b: &SymmetricMatrix, lambda: f64) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Precondition("matrices have different dimensions".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let (am, bm) = (a.as_matrix(), b.as_matrix());
    let comm = hs_norm(&(am * bm - bm * am));
    let tol = 1e-9 * hs_norm(am) * hs_norm(bm);
    if comm > tol {
        return Err(Error::Precondition(format!(
            "A and B do not commute: ||AB - BA|| = {comm:e} > {tol:e}"
        )));
    }
    let floor = lambda.sqrt();
    for (name, m) in [("A", a), ("B", b)] {
        let lo = m.min_eigenvalue();
        if lo < floor * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!(
                "{name} has eigenvalue {lo} below sqrt(lambda) = {floor}"
            )));
        }
    }
    Ok(())
}

fn shifted_root(m: &SymmetricMatrix, lambda: f64) -> Result<SymmetricMatrix> {
    let d = m.dim();
    let sq = m.as_matrix() * m.as_matrix() - DMatrix::identity(d, d) * lambda;
    let tol = default_clip_tol(&sq);
    sqrt_psd(&SymmetricMatrix::from_lower(sq)?, tol)
}

/// Evaluates both sides of `||A - B|| <= ||A_lambda - B_lambda||` for a
/// commuting pair whose spectra lie above `sqrt(lambda)`.
pub fn lemma21_gap(a: &SymmetricMatrix, b: &SymmetricMatrix, lambda: f64) -> Result<NormGap> {
    check_commuting_pair(a, b, lambda)?;
    let al = shifted_root(a, lambda)?;
    let bl = shifted_root(b, lambda)?;
    let lhs = hs_norm(&(a.as_matrix() - b.as_matrix()));
    let rhs = hs_norm(&(al.as_matrix() - bl.as_matrix()));
    Ok(NormGap { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}

/// Both sides of the trace identity
/// `||A-B||^2 - ||A_l-B_l||^2 = 2 (tr(A_l B_l) - tr(AB) + lambda d)`,
/// together with the magnitude scale used for relative comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceIdentity {
    pub norm_difference: f64,
    pub trace_expression: f64,
    pub scale: f64,
}

impl TraceIdentity {
    pub fn relative_residual(&self) -> f64 {
        (self.norm_difference - self.trace_expression).abs() / self.scale.max(f64::MIN_POSITIVE)
    }
}

pub fn lemma21_trace_identity(a: &SymmetricMatrix, b: &SymmetricMatrix, lambda: f64) -> Result<TraceIdentity> {
    check_commuting_pair(a, b, lambda)?;
    let al = shifted_root(a, lambda)?;
    let bl = shifted_root(b, lambda)?;
    let (am, bm, alm, blm) = (a.as_matrix(), b.as_matrix(), al.as_matrix(), bl.as_matrix());
    let d = a.dim() as f64;
    let lhs = hs_norm(&(am - bm)).powi(2) - hs_norm(&(alm - blm)).powi(2);
    let tr_l = (alm * blm).trace();
    let tr = (am * bm).trace();
    Ok(TraceIdentity {
        norm_difference: lhs,
        trace_expression: 2.0 * (tr_l - tr + lambda * d),
        scale: tr_l.abs() + tr.abs() + lambda * d,
    })
}

/// Random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// A commuting SPD pair `A = U D_A U^T`, `B = U D_B U^T` sharing a random
/// orthogonal eigenbasis, with eigenvalues uniform in `[sqrt(lambda)(1+1e-3), upper]`.
pub fn commuting_spd_pair<R: Rng>(
    d: usize,
    lambda: f64,
    upper: f64,
    rng: &mut R,
) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let lo = lambda.sqrt() * (1.0 + 1e-3);
    if !(upper > lo) {
        return Err(Error::param("upper", format!("must exceed sqrt(lambda)(1+1e-3) = {lo}")));
    }
    let u = random_orthogonal(d, rng);
    let mut draw = || {
        let diag: Vec<f64> = (0..d).map(|_| rng.random_range(lo..upper)).collect();
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
    };
    let (da, db) = (draw(), draw());
    let a = SymmetricMatrix::symmetrize(&(&u * da * u.transpose()))?;
    let b = SymmetricMatrix::symmetrize(&(&u * db * u.transpose()))?;
    Ok((a, b))
}

/// Sizes of a seeded batch of commuting-pair checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma21Suite {
    pub pairs: usize,
    /// Pair `i` uses `lambdas[i % lambdas.len()]`.
    pub lambdas: Vec<f64>,
    /// Pair `i` uses `dims[(i / lambdas.len()) % dims.len()]`.
    pub dims: Vec<usize>,
    /// Upper end of the eigenvalue range.
    pub upper: f64,
    pub seed: u64,
}

impl Default for Lemma21Suite {
    fn default() -> Self {
        Lemma21Suite { pairs: 10_000, lambdas: vec![0.5, 1.0, 2.0], dims: vec![1, 2, 3, 4, 5], upper: 10.0, seed: 0 }
    }
}

/// Aggregate outcome of a [`Lemma21Suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma21Report {
    pub pairs: usize,
    pub holds: usize,
    /// Largest `lhs - rhs` over all pairs.
    pub max_excess: f64,
    /// Largest relative residual of the trace identity.
    pub max_trace_residual: f64,
    pub trace_identity_holds: bool,
    /// Index of the first failing pair, if any.
    pub first_failure: Option<usize>,
}

impl Lemma21Report {
    pub fn summary(&self) -> String {
        format!("holds: {}/{}", self.holds, self.pairs)
    }
}

/// Relative tolerance applied to the trace identity.
pub const TRACE_IDENTITY_TOL: f64 = 1e-8;

/// Runs the suite; pair `i` depends only on `(seed, i)`.
pub fn lemma21_suite(suite: &Lemma21Suite) -> Result<Lemma21Report> {
    use rayon::prelude::*;
    if suite.lambdas.is_empty() || suite.dims.is_empty() {
        return Err(Error::param("lemma21", "needs at least one lambda and one dimension"));
    }
    if suite.dims.contains(&0) {
        return Err(Error::param("dims", "must be positive"));
    }
    let master = crate::rng::substream(suite.seed, "lemma21");
    let results: Vec<Result<(NormGap, TraceIdentity)>> = (0..suite.pairs)
        .into_par_iter()
        .map(|i| {
            let lambda = suite.lambdas[i % suite.lambdas.len()];
            let d = suite.dims[(i / suite.lambdas.len()) % suite.dims.len()];
            let mut rng = crate::rng::path_rng(master, i as u64);
            let (a, b) = commuting_spd_pair(d, lambda, suite.upper, &mut rng)?;
            Ok((lemma21_gap(&a, &b, lambda)?, lemma21_trace_identity(&a, &b, lambda)?))
        })
        .collect();
    let mut report = Lemma21Report {
        pairs: suite.pairs,
        holds: 0,
        max_excess: f64::NEG_INFINITY,
        max_trace_residual: 0.0,
        trace_identity_holds: true,
        first_failure: None,
    };
    for (i, r) in results.into_iter().enumerate() {
        let (gap, trace) = r?;
        let residual = trace.relative_residual();
        let ok = gap.holds && residual <= TRACE_IDENTITY_TOL;
        if ok {
            report.holds += 1;
        } else if report.first_failure.is_none() {
            report.first_failure = Some(i);
        }
        report.max_excess = report.max_excess.max(gap.lhs - gap.rhs);
        report.max_trace_residual = report.max_trace_residual.max(residual);
    }
    report.trace_identity_holds = report.max_trace_residual <= TRACE_IDENTITY_TOL;
    Ok(report)
}
