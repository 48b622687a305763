//! Unconstrained least-squares importance fitting of `w(x) = p2(x) / p1(x)`.
//!
//! With `w(x) = alpha' psi(x)`, minimizing
//! `1/2 mean_{p1} w^2 - mean_{p2} w + lambda/2 |alpha|^2` gives
//! `alpha = (H + lambda I)^{-1} h`, `H` the second-moment matrix of the
//! kernel features over the `p1` sample and `h` their mean over the `p2` sample.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::derivative::{CvEntry, CvGrid, CvOutcome};
use crate::error::{MisedError, Result};
use crate::kernel::{check_sigma, CenterSelection};
use crate::linalg::{certified_solve, shifted, SymmetricSolver};
use crate::matrix::{squared_distance, SampleMatrix};

/// Lower clamp applied to predicted ratios.
pub const RATIO_FLOOR: f64 = 1e-6;

const SOLVE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct RatioModel {
    centers: SampleMatrix,
    alpha: DVector<f64>,
    sigma: f64,
    lambda: f64,
    floor: f64,
}

impl RatioModel {
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn centers(&self) -> &SampleMatrix {
        &self.centers
    }

    /// Unclamped `alpha' psi(x)`; may be zero or negative.
    pub fn predict_raw(&self, queries: &SampleMatrix) -> Result<Vec<f64>> {
        if queries.ncols() != self.centers.ncols() {
            return Err(MisedError::invalid("query dimension does not match the ratio model"));
        }
        let denom = 2.0 * self.sigma * self.sigma;
        Ok(queries
            .rows()
            .map(|x| {
                self.centers
                    .rows()
                    .zip(self.alpha.iter())
                    .map(|(c, a)| a * (-squared_distance(x, c) / denom).exp())
                    .sum()
            })
            .collect())
    }

    /// Ratio estimates clamped below at the model's floor.
    pub fn predict(&self, queries: &SampleMatrix) -> Result<Vec<f64>> {
        Ok(self
            .predict_raw(queries)?
            .into_iter()
            .map(|v| if v.is_nan() { self.floor } else { v.max(self.floor) })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UlsifConfig {
    pub grid: CvGrid,
    /// Kernel centers are drawn from the `p2` sample.
    pub centers: Option<usize>,
    pub floor: f64,
}

impl Default for UlsifConfig {
    fn default() -> Self {
        Self {
            grid: CvGrid {
                lambda_candidates: vec![1e-3, 1e-2, 1e-1, 1.0],
                ..CvGrid::default()
            },
            centers: Some(100),
            floor: RATIO_FLOOR,
        }
    }
}

/// Kernel features of every row against every center, as an `n x m` matrix.
fn design(x: &SampleMatrix, centers: &SampleMatrix, sigma: f64) -> DMatrix<f64> {
    let denom = 2.0 * sigma * sigma;
    DMatrix::from_fn(x.nrows(), centers.nrows(), |i, l| {
        (-squared_distance(x.row(i), centers.row(l)) / denom).exp()
    })
}

fn moments(den: &DMatrix<f64>, num: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let h_mat = den.tr_mul(den) / den.nrows() as f64;
    let h_vec = num.row_sum().transpose() / num.nrows() as f64;
    (h_mat, h_vec)
}

fn check_samples(den: &SampleMatrix, num: &SampleMatrix) -> Result<()> {
    if den.is_empty() || num.is_empty() {
        return Err(MisedError::invalid("both sample sets must be non-empty"));
    }
    if den.ncols() != num.ncols() {
        return Err(MisedError::invalid("sample sets have different dimensions"));
    }
    Ok(())
}

/// Fits with fixed hyper-parameters.
pub fn fit_ulsif_fixed(
    den: &SampleMatrix,
    num: &SampleMatrix,
    sigma: f64,
    lambda: f64,
    centers: CenterSelection,
    floor: f64,
) -> Result<RatioModel> {
    check_samples(den, num)?;
    check_sigma(sigma)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(MisedError::invalid(format!("lambda must be finite and > 0, got {lambda}")));
    }
    if !(floor.is_finite() && floor > 0.0) {
        return Err(MisedError::invalid("ratio floor must be finite and > 0"));
    }
    solve_with_centers(den, num, centers.select(num), sigma, lambda, floor)
}

fn solve_with_centers(
    den: &SampleMatrix,
    num: &SampleMatrix,
    centers: SampleMatrix,
    sigma: f64,
    lambda: f64,
    floor: f64,
) -> Result<RatioModel> {
    let (h_mat, h_vec) = moments(&design(den, &centers, sigma), &design(num, &centers, sigma));
    let a = shifted(&h_mat, lambda);
    let solver = SymmetricSolver::new(a.clone());
    let alpha = certified_solve(&solver, &a, &h_vec, SOLVE_TOLERANCE)?;
    Ok(RatioModel {
        centers,
        alpha,
        sigma,
        lambda,
        floor,
    })
}

/// Fits `p2 / p1` from `den ~ p1` and `num ~ p2` with the default settings.
pub fn fit_ulsif(den: &SampleMatrix, num: &SampleMatrix, grid: &CvGrid) -> Result<RatioModel> {
    let config = UlsifConfig {
        grid: grid.clone(),
        ..UlsifConfig::default()
    };
    Ok(fit_ulsif_with(den, num, &config)?.0)
}

/// Chooses `(sigma, lambda)` by the held-out criterion
/// `1/2 mean_{p1 test} w^2 - mean_{p2 test} w`, then refits on everything.
pub fn fit_ulsif_with(
    den: &SampleMatrix,
    num: &SampleMatrix,
    config: &UlsifConfig,
) -> Result<(RatioModel, CvOutcome)> {
    check_samples(den, num)?;
    let grid = &config.grid;
    grid.validate(den.nrows().min(num.nrows()))?;
    if grid.lambda_candidates.iter().any(|&l| l <= 0.0) {
        return Err(MisedError::invalid("ratio fitting needs lambda candidates > 0"));
    }
    let centers = CenterSelection {
        cap: config.centers,
        seed: grid.seed,
    };
    let den_splits = crate::derivative::cv_splits(den, grid.folds, grid.seed);
    let num_splits = crate::derivative::cv_splits(num, grid.folds, grid.seed.wrapping_add(1));

    let mut sums = vec![0.0; grid.sigma_candidates.len() * grid.lambda_candidates.len()];
    for ((den_tr, den_te), (num_tr, num_te)) in den_splits.iter().zip(&num_splits) {
        let c = centers.select(num_tr);
        for (s, &sigma) in grid.sigma_candidates.iter().enumerate() {
            let (h_mat, h_vec) = moments(&design(den_tr, &c, sigma), &design(num_tr, &c, sigma));
            let den_te_psi = design(den_te, &c, sigma);
            let num_te_psi = design(num_te, &c, sigma);
            for (l, &lambda) in grid.lambda_candidates.iter().enumerate() {
                let slot = &mut sums[s * grid.lambda_candidates.len() + l];
                let solver = SymmetricSolver::new(shifted(&h_mat, lambda));
                match solver.solve(&h_vec) {
                    Some(alpha) => {
                        let w_den = &den_te_psi * &alpha;
                        let w_num = &num_te_psi * &alpha;
                        *slot += 0.5 * w_den.norm_squared() / w_den.len() as f64 - w_num.mean();
                    }
                    None => *slot = f64::NAN,
                }
            }
        }
    }
    let folds = den_splits.len() as f64;
    let mut table = Vec::with_capacity(sums.len());
    for (s, &sigma) in grid.sigma_candidates.iter().enumerate() {
        for (l, &lambda) in grid.lambda_candidates.iter().enumerate() {
            table.push(CvEntry {
                sigma,
                lambda,
                score: sums[s * grid.lambda_candidates.len() + l] / folds,
            });
        }
    }
    let cv = crate::derivative::cv_select(table)?;
    let model = fit_ulsif_fixed(den, num, cv.sigma, cv.lambda, centers, config.floor)?;
    Ok((model, cv))
}
