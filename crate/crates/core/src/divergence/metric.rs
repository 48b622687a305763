//! Local Mahalanobis metrics that reduce the bias of nearest-neighbor KL
//! estimation, built from the eigenstructure of the rescaled matrix
//! `B = (n1 - 1)^{-2/d} (p2/p1)^{2/d + 1} H1 - n2^{-2/d} H2`
//! where `H1`, `H2` are the Hessians of the two densities.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::derivative::MisedModel;
use crate::error::{MisedError, Result};
use crate::kernel::MultiIndex;
use crate::matrix::SampleMatrix;

/// Below this spectral norm `B` is treated as zero.
pub const METRIC_ZERO_NORM: f64 = 1e-12;

/// Eigenvalues within this fraction of the largest magnitude count as zero,
/// and receive this fraction of it as their metric eigenvalue.
const RELATIVE_EIGEN_FLOOR: f64 = 1e-10;

/// A symmetric positive-definite matrix with unit determinant, applied to
/// distances measured from `anchor`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalMetric {
    matrix: DMatrix<f64>,
    anchor: Vec<f64>,
}

impl LocalMetric {
    pub fn identity(anchor: &[f64]) -> Self {
        Self {
            matrix: DMatrix::identity(anchor.len(), anchor.len()),
            anchor: anchor.to_vec(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == DMatrix::identity(self.dim(), self.dim())
    }
}

/// Per-query Hessian matrices of an order-2 derivative model.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianField {
    pub matrices: Vec<DMatrix<f64>>,
}

/// Assembles `d x d` Hessians from the `d (d + 1) / 2` distinct second-order
/// multi-indices; the mixed index fills both `(a, b)` and `(b, a)`.
pub fn hessian_field(model: &MisedModel, queries: &SampleMatrix) -> Result<HessianField> {
    if model.order() != 2 {
        return Err(MisedError::invalid(format!(
            "Hessians need an order-2 model, got order {}",
            model.order()
        )));
    }
    let d = model.dim();
    let preds = model.predict_all(queries)?;
    let lookup: Vec<MultiIndex> = model.indices().cloned().collect();
    let mut slots = Vec::with_capacity(lookup.len());
    for j in &lookup {
        let e = j.entries();
        let nz: Vec<usize> = (0..d).filter(|&m| e[m] > 0).collect();
        let (a, b) = match nz.as_slice() {
            [a] => (*a, *a),
            [a, b] => (*a, *b),
            _ => unreachable!("order-2 index has one or two non-zero entries"),
        };
        slots.push((a, b));
    }
    let matrices = (0..queries.nrows())
        .map(|q| {
            let mut h = DMatrix::zeros(d, d);
            for (&(a, b), p) in slots.iter().zip(&preds) {
                h[(a, b)] = p[q];
                h[(b, a)] = p[q];
            }
            h
        })
        .collect();
    Ok(HessianField { matrices })
}

/// `(n1 - 1)^{-2/d} ratio^{2/d + 1} h1 - n2^{-2/d} h2`.
pub fn build_b_tilde(
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    ratio: f64,
    n1: usize,
    n2: usize,
    d: usize,
) -> Result<DMatrix<f64>> {
    if h1.shape() != (d, d) || h2.shape() != (d, d) {
        return Err(MisedError::invalid(format!("Hessians must be {d}x{d}")));
    }
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(MisedError::invalid(format!("density ratio must be finite and > 0, got {ratio}")));
    }
    if n1 < 2 || n2 < 1 {
        return Err(MisedError::invalid("need n1 >= 2 and n2 >= 1"));
    }
    if h1.iter().chain(h2.iter()).any(|v| !v.is_finite()) {
        return Err(MisedError::invalid("Hessian entries must be finite"));
    }
    let p = 2.0 / d as f64;
    let c1 = ((n1 - 1) as f64).powf(-p) * ratio.powf(p + 1.0);
    let c2 = (n2 as f64).powf(-p);
    Ok(h1 * c1 - h2 * c2)
}

/// The bias-minimizing metric `A ~ U diag(d+ L+, -d- L-) U'`, normalized to
/// `det(A) = 1`. Falls back to the identity when `b` is numerically zero or
/// has eigenvalues of only one sign.
pub fn local_metric_from_b(b: &DMatrix<f64>, anchor: &[f64]) -> Result<LocalMetric> {
    let d = anchor.len();
    if b.shape() != (d, d) {
        return Err(MisedError::invalid(format!("B must be {d}x{d}")));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Ok(LocalMetric::identity(anchor));
    }
    let sym = (b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if largest < METRIC_ZERO_NORM {
        return Ok(LocalMetric::identity(anchor));
    }
    let zero_tol = RELATIVE_EIGEN_FLOOR * largest;
    let d_pos = eig.eigenvalues.iter().filter(|&&v| v > zero_tol).count() as f64;
    let d_neg = eig.eigenvalues.iter().filter(|&&v| v < -zero_tol).count() as f64;
    if d_pos == 0.0 || d_neg == 0.0 {
        return Ok(LocalMetric::identity(anchor));
    }
    let mut values: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&v| {
            let w = if v > zero_tol {
                d_pos * v
            } else if v < -zero_tol {
                -d_neg * v
            } else {
                0.0
            };
            w.max(zero_tol)
        })
        .collect();
    let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / d as f64;
    let scale = (-mean_log).exp();
    for v in &mut values {
        *v *= scale;
    }
    let u = &eig.eigenvectors;
    let mut a = DMatrix::zeros(d, d);
    for (k, &w) in values.iter().enumerate() {
        let col = u.column(k);
        a += col * col.transpose() * w;
    }
    let a = (&a + a.transpose()) * 0.5;
    Ok(LocalMetric {
        matrix: a,
        anchor: anchor.to_vec(),
    })
}
