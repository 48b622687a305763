//! Direct density-derivative estimation by minimizing the integrated squared
//! error to the true derivative.
//!
//! With the Gaussian model `g(x) = theta' psi(x)`, integration by parts turns
//! the unknown cross term into a sample average of the model's `k`-th
//! partial, and the regularized objective
//! `theta' G theta - 2 (-1)^k theta' h + lambda theta' theta`
//! is minimized by `theta = (-1)^k (G + lambda I)^{-1} h`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{fold_splits, select_best, CvEntry, CvGrid, CvOutcome};
use super::parity_sign;
use crate::error::{MisedError, Result};
use crate::kernel::{check_sigma, gram_matrix, h_vectors, CenterSelection, MultiIndex};
use crate::linalg::{certified_solve, shifted, SymmetricSolver};
use crate::matrix::{squared_distance, SampleMatrix};

/// Residual bound of the solution certificate `|(G + lambda I) theta - (-1)^k h| <= tol |h|`.
pub(crate) const SOLVE_TOLERANCE: f64 = 1e-8;

/// Unregularized systems whose pivot ratio falls below this are rejected.
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// A fitted derivative estimator: one coefficient vector per multi-index of
/// the model's order, all sharing centers, width and ridge.
#[derive(Clone, Debug, PartialEq)]
pub struct MisedModel {
    centers: SampleMatrix,
    sigma: f64,
    lambda: f64,
    order: u32,
    coeffs: Vec<(MultiIndex, DVector<f64>)>,
}

impl MisedModel {
    pub fn centers(&self) -> &SampleMatrix {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn indices(&self) -> impl Iterator<Item = &MultiIndex> {
        self.coeffs.iter().map(|(j, _)| j)
    }

    pub fn coefficients(&self, j: &MultiIndex) -> Result<&DVector<f64>> {
        self.coeffs
            .iter()
            .find(|(k, _)| k == j)
            .map(|(_, t)| t)
            .ok_or_else(|| {
                MisedError::invalid(format!("multi-index {j} is not part of an order-{} model", self.order))
            })
    }

    /// Builds a model from explicit coefficients.
    pub fn from_parts(
        centers: SampleMatrix,
        sigma: f64,
        lambda: f64,
        order: u32,
        coeffs: Vec<(MultiIndex, DVector<f64>)>,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        let m = centers.nrows();
        for (j, theta) in &coeffs {
            if j.order() != order || j.dim() != centers.ncols() {
                return Err(MisedError::invalid(format!(
                    "multi-index {j} does not match order {order} and dimension {}",
                    centers.ncols()
                )));
            }
            if theta.len() != m {
                return Err(MisedError::invalid(format!(
                    "coefficient vector for {j} has length {}, expected {m}",
                    theta.len()
                )));
            }
        }
        Ok(Self {
            centers,
            sigma,
            lambda,
            order,
            coeffs,
        })
    }

    /// `theta_j' psi(x)` at each query row.
    pub fn predict(&self, j: &MultiIndex, queries: &SampleMatrix) -> Result<Vec<f64>> {
        let theta = self.coefficients(j)?;
        self.check_queries(queries)?;
        let denom = 2.0 * self.sigma * self.sigma;
        Ok(queries
            .rows()
            .map(|x| {
                self.centers
                    .rows()
                    .zip(theta.iter())
                    .map(|(c, t)| t * (-squared_distance(x, c) / denom).exp())
                    .sum()
            })
            .collect())
    }

    /// Predictions for every multi-index of the model, in enumeration order.
    pub fn predict_all(&self, queries: &SampleMatrix) -> Result<Vec<Vec<f64>>> {
        self.check_queries(queries)?;
        let denom = 2.0 * self.sigma * self.sigma;
        let mut out = vec![vec![0.0; queries.nrows()]; self.coeffs.len()];
        let mut psi = vec![0.0; self.centers.nrows()];
        for (q, x) in queries.rows().enumerate() {
            for (p, c) in psi.iter_mut().zip(self.centers.rows()) {
                *p = (-squared_distance(x, c) / denom).exp();
            }
            for (slot, (_, theta)) in out.iter_mut().zip(&self.coeffs) {
                slot[q] = theta.iter().zip(&psi).map(|(t, p)| t * p).sum();
            }
        }
        Ok(out)
    }

    /// Held-out estimate of the integrated squared error up to the constant
    /// `int p_j^2`: `theta' G theta - 2 (-1)^k / n' sum_i d^j g(x_i)`.
    pub fn objective(&self, j: &MultiIndex, heldout: &SampleMatrix) -> Result<f64> {
        let theta = self.coefficients(j)?;
        self.check_queries(heldout)?;
        if heldout.is_empty() {
            return Err(MisedError::invalid("held-out set is empty"));
        }
        let g = gram_matrix(&self.centers, self.sigma)?;
        let h = h_vectors(&self.centers, heldout, self.sigma, std::slice::from_ref(j))?;
        Ok(quadratic_score(&g, theta, &h[0], self.order))
    }

    fn check_queries(&self, queries: &SampleMatrix) -> Result<()> {
        if queries.ncols() != self.dim() {
            return Err(MisedError::invalid(format!(
                "queries have dimension {}, model has {}",
                queries.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn to_document(&self) -> MisedModelDocument {
        MisedModelDocument {
            d: self.dim(),
            k: self.order,
            sigma: self.sigma,
            lambda: self.lambda,
            centers: self.centers.rows().map(<[f64]>::to_vec).collect(),
            coeffs: self
                .coeffs
                .iter()
                .map(|(j, t)| (j.key(), t.iter().copied().collect()))
                .collect(),
        }
    }

    pub fn from_document(doc: MisedModelDocument) -> Result<Self> {
        let centers = SampleMatrix::from_rows(&doc.centers)?;
        if centers.ncols() != doc.d {
            return Err(MisedError::invalid(format!(
                "centers have dimension {}, document says {}",
                centers.ncols(),
                doc.d
            )));
        }
        // Restore enumeration order rather than the map's key order.
        let mut coeffs = Vec::with_capacity(doc.coeffs.len());
        for j in MultiIndex::enumerate(doc.d, doc.k) {
            if let Some(v) = doc.coeffs.get(&j.key()) {
                coeffs.push((j, DVector::from_vec(v.clone())));
            }
        }
        if coeffs.len() != doc.coeffs.len() {
            return Err(MisedError::invalid("document contains coefficients for unknown multi-indices"));
        }
        Self::from_parts(centers, doc.sigma, doc.lambda, doc.k, coeffs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }
}

/// On-disk form of a [`MisedModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisedModelDocument {
    pub d: usize,
    pub k: u32,
    pub sigma: f64,
    pub lambda: f64,
    pub centers: Vec<Vec<f64>>,
    /// Keyed by `"j1,...,jd"`.
    pub coeffs: BTreeMap<String, Vec<f64>>,
}

fn quadratic_score(g: &DMatrix<f64>, theta: &DVector<f64>, h_heldout: &DVector<f64>, order: u32) -> f64 {
    let gt = g * theta;
    theta.dot(&gt) - 2.0 * parity_sign(order) * theta.dot(h_heldout)
}

fn check_fit_inputs(samples: &SampleMatrix, order: u32, lambda: f64) -> Result<()> {
    if samples.nrows() < 2 {
        return Err(MisedError::invalid("at least two samples are required"));
    }
    if order == 0 {
        return Err(MisedError::invalid("derivative order must be >= 1"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(MisedError::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !samples.all_finite() {
        return Err(MisedError::invalid("samples must be finite"));
    }
    Ok(())
}

/// Fits coefficient vectors for every multi-index of order `order`.
pub fn fit_mised(
    samples: &SampleMatrix,
    order: u32,
    sigma: f64,
    lambda: f64,
    centers: CenterSelection,
) -> Result<MisedModel> {
    check_fit_inputs(samples, order, lambda)?;
    check_sigma(sigma)?;
    let centers = centers.select(samples);
    let indices = MultiIndex::enumerate(samples.ncols(), order);
    let g = gram_matrix(&centers, sigma)?;
    let a = shifted(&g, lambda);
    let solver = SymmetricSolver::new(a.clone());
    if lambda == 0.0 && solver.pivot_ratio() < SINGULAR_PIVOT_RATIO {
        return Err(MisedError::numerical(
            "Gram matrix is singular (duplicate or near-duplicate centers); use lambda > 0",
        ));
    }
    let hs = h_vectors(&centers, samples, sigma, &indices)?;
    let sign = parity_sign(order);
    let mut coeffs = Vec::with_capacity(indices.len());
    for (j, h) in indices.into_iter().zip(hs) {
        let theta = certified_solve(&solver, &a, &(h * sign), SOLVE_TOLERANCE).map_err(|e| {
            if lambda == 0.0 {
                MisedError::numerical(format!("{e}; use lambda > 0 (duplicate centers make G singular)"))
            } else {
                e
            }
        })?;
        coeffs.push((j, theta));
    }
    MisedModel::from_parts(centers, sigma, lambda, order, coeffs)
}

/// Cross-validates with every sample as a kernel center.
pub fn cross_validate_mised(samples: &SampleMatrix, order: u32, grid: &CvGrid) -> Result<CvOutcome> {
    cross_validate_mised_with_centers(samples, order, grid, CenterSelection::default())
}

/// Chooses `(sigma, lambda)` minimizing the fold-averaged held-out score
/// summed over all multi-indices of `order`.
pub fn cross_validate_mised_with_centers(
    samples: &SampleMatrix,
    order: u32,
    grid: &CvGrid,
    centers: CenterSelection,
) -> Result<CvOutcome> {
    check_fit_inputs(samples, order, 0.0)?;
    grid.validate(samples.nrows())?;
    let indices = MultiIndex::enumerate(samples.ncols(), order);
    let splits = fold_splits(samples, grid.folds, grid.seed);
    let sign = parity_sign(order);

    let jobs: Vec<(usize, usize)> = (0..splits.len())
        .flat_map(|t| (0..grid.sigma_candidates.len()).map(move |s| (t, s)))
        .collect();
    // scores[job][lambda]
    let scores: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(t, s)| {
            let (train, held) = &splits[t];
            let sigma = grid.sigma_candidates[s];
            let c = centers.select(train);
            let g = match gram_matrix(&c, sigma) {
                Ok(g) => g,
                Err(_) => return vec![f64::NAN; grid.lambda_candidates.len()],
            };
            let (h_train, h_held) = match (
                h_vectors(&c, train, sigma, &indices),
                h_vectors(&c, held, sigma, &indices),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return vec![f64::NAN; grid.lambda_candidates.len()],
            };
            grid.lambda_candidates
                .iter()
                .map(|&lambda| {
                    let solver = SymmetricSolver::new(shifted(&g, lambda));
                    let mut total = 0.0;
                    for (ht, hh) in h_train.iter().zip(&h_held) {
                        match solver.solve(&(ht * sign)) {
                            Some(theta) => total += quadratic_score(&g, &theta, hh, order),
                            None => return f64::NAN,
                        }
                    }
                    total
                })
                .collect()
        })
        .collect();

    let folds = splits.len() as f64;
    let mut table = Vec::with_capacity(grid.sigma_candidates.len() * grid.lambda_candidates.len());
    for (s, &sigma) in grid.sigma_candidates.iter().enumerate() {
        for (l, &lambda) in grid.lambda_candidates.iter().enumerate() {
            let mut sum = 0.0;
            for (job, &(_, js)) in jobs.iter().enumerate() {
                if js == s {
                    sum += scores[job][l];
                }
            }
            table.push(CvEntry {
                sigma,
                lambda,
                score: sum / folds,
            });
        }
    }
    select_best(table)
}

/// Cross-validates, then refits on all samples with the chosen parameters.
pub fn fit_mised_cv(
    samples: &SampleMatrix,
    order: u32,
    grid: &CvGrid,
    centers: CenterSelection,
) -> Result<(MisedModel, CvOutcome)> {
    let cv = cross_validate_mised_with_centers(samples, order, grid, centers)?;
    let model = fit_mised(samples, order, cv.sigma, cv.lambda, centers)?;
    Ok((model, cv))
}
