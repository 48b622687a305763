//! Dense solves used by the ridge-type estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{MisedError, Result};

/// A factorization of a symmetric system, Cholesky when the matrix is
/// numerically positive definite and full-pivot LU otherwise.
pub(crate) enum SymmetricSolver {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(nalgebra::linalg::FullPivLU<f64, Dyn, Dyn>),
}

impl SymmetricSolver {
    pub(crate) fn new(a: DMatrix<f64>) -> Self {
        match Cholesky::new(a.clone()) {
            Some(c) => Self::Cholesky(c),
            None => Self::Lu(a.full_piv_lu()),
        }
    }

    /// Smallest over largest pivot magnitude; near zero for singular systems.
    pub(crate) fn pivot_ratio(&self) -> f64 {
        let pivots: Vec<f64> = match self {
            Self::Cholesky(c) => c.l_dirty().diagonal().iter().map(|v| v * v).collect(),
            Self::Lu(lu) => lu.u().diagonal().iter().map(|v| v.abs()).collect(),
        };
        let max = pivots.iter().fold(0.0f64, |m, v| m.max(*v));
        let min = pivots.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if max > 0.0 {
            min / max
        } else {
            0.0
        }
    }

    pub(crate) fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Self::Cholesky(c) => Some(c.solve(b)),
            Self::Lu(lu) => lu.solve(b),
        }
    }
}

/// `a + shift * I`.
pub(crate) fn shifted(a: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    let mut out = a.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += shift;
    }
    out
}

/// Relative residual `|a x - b| / |b|`, or the absolute residual when `b = 0`.
pub(crate) fn relative_residual(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let r = (a * x - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

/// Solves `a x = b` and rejects the answer unless it satisfies the residual
/// certificate `|a x - b| <= tol * |b|`.
pub(crate) fn certified_solve(
    solver: &SymmetricSolver,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    if b.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(b.len()));
    }
    let mut x = solver
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| MisedError::numerical("linear system is singular"))?;
    let mut res = relative_residual(a, &x, b);
    // A few rounds of iterative refinement for ill-conditioned but solvable systems.
    for _ in 0..3 {
        if res <= tol {
            break;
        }
        let r = b - a * &x;
        match solver.solve(&r) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => x += dx,
            _ => break,
        }
        res = relative_residual(a, &x, b);
    }
    if !(res <= tol) {
        return Err(MisedError::numerical(format!(
            "linear solve residual {res:.3e} exceeds {tol:.1e}; the system is ill-conditioned"
        )));
    }
    Ok(x)
}
