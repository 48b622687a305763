//! Gaussian maximum-likelihood baselines: the parametric KL between two
//! fitted Gaussians, and nearest-neighbor KL with metrics computed from the
//! fitted Gaussians' densities and Hessians.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::metric::{build_b_tilde, local_metric_from_b, LocalMetric};
use super::nn::{nn_kl_metric_detailed, nn_kl_pooled, NnKlReport};
use super::ratio::RATIO_FLOOR;
use crate::error::{MisedError, Result};
use crate::matrix::SampleMatrix;

/// Maximum-likelihood Gaussian with covariance normalized by `1/n`.
#[derive(Clone, Debug)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    precision: DMatrix<f64>,
    log_det: f64,
}

pub fn fit_gaussian(x: &SampleMatrix) -> Result<GaussianFit> {
    let n = x.nrows();
    let d = x.ncols();
    if n <= d {
        return Err(MisedError::invalid(format!(
            "Gaussian fit needs more samples than dimensions ({n} <= {d})"
        )));
    }
    let mut mean = DVector::zeros(d);
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for row in x.rows() {
        let c = DVector::from_iterator(d, row.iter().zip(mean.iter()).map(|(v, m)| v - m));
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
        MisedError::numerical("sample covariance is singular; regularize or add samples")
    })?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(MisedError::numerical("sample covariance is singular; regularize or add samples"));
    }
    let precision = chol.inverse();
    Ok(GaussianFit {
        mean,
        cov,
        chol,
        precision,
        log_det,
    })
}

impl GaussianFit {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn centered(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), x.iter().zip(self.mean.iter()).map(|(v, m)| v - m))
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let c = self.centered(x);
        let z = self.chol.solve(&c);
        -0.5 * (self.dim() as f64 * (2.0 * PI).ln() + self.log_det + c.dot(&z))
    }

    /// Hessian of the density divided by the density,
    /// `P (x - mu)(x - mu)' P - P` with `P` the precision matrix.
    pub fn scaled_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let v = &self.precision * self.centered(x);
        &v * v.transpose() - &self.precision
    }

    /// Hessian of the fitted density.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.scaled_hessian(x) * self.log_density(x).exp()
    }
}

/// Closed-form `KL(N1 || N2)` between maximum-likelihood fits to the two samples.
pub fn gaussian_parametric_kl(x1: &SampleMatrix, x2: &SampleMatrix) -> Result<f64> {
    if x1.ncols() != x2.ncols() {
        return Err(MisedError::invalid("sample dimensions differ"));
    }
    let g1 = fit_gaussian(x1)?;
    let g2 = fit_gaussian(x2)?;
    let d = g1.dim() as f64;
    let trace = (&g2.precision * &g1.cov).trace();
    let diff = &g2.mean - &g1.mean;
    let maha = diff.dot(&g2.chol.solve(&diff));
    Ok(0.5 * (trace + maha - d + g2.log_det - g1.log_det))
}

fn gaussian_metrics(x1: &SampleMatrix, g1: &GaussianFit, g2: &GaussianFit, n1: usize, n2: usize) -> Result<Vec<LocalMetric>> {
    let d = x1.ncols();
    x1.rows()
        .map(|x| {
            // B scaled by 1/p2 (a positive factor, so the metric is unchanged):
            // H1 / p2 = scaled_hessian1 / ratio.
            let log_ratio = (g2.log_density(x) - g1.log_density(x)).clamp(RATIO_FLOOR.ln(), 700.0);
            let ratio = log_ratio.exp();
            let h1 = g1.scaled_hessian(x) / ratio;
            let h2 = g2.scaled_hessian(x);
            let b = build_b_tilde(&h1, &h2, ratio, n1, n2, d)?;
            local_metric_from_b(&b, x)
        })
        .collect()
}

/// Nearest-neighbor KL with local metrics derived from Gaussian fits.
pub fn gaussian_metric_kl(x1: &SampleMatrix, x2: &SampleMatrix) -> Result<f64> {
    if x1.ncols() != x2.ncols() {
        return Err(MisedError::invalid("sample dimensions differ"));
    }
    let g1 = fit_gaussian(x1)?;
    let g2 = fit_gaussian(x2)?;
    let metrics = gaussian_metrics(x1, &g1, &g2, x1.nrows(), x2.nrows())?;
    Ok(nn_kl_metric_detailed(x1, x2, &metrics)?.value)
}

pub(crate) fn gaussian_metric_kl_pooled(x1: &SampleMatrix, rest: &SampleMatrix) -> Result<NnKlReport> {
    let pool = x1.vstack(rest)?;
    let g1 = fit_gaussian(x1)?;
    let g2 = fit_gaussian(&pool)?;
    let metrics = gaussian_metrics(x1, &g1, &g2, x1.nrows(), pool.nrows() - 1)?;
    nn_kl_pooled(x1, rest, Some(&metrics))
}
