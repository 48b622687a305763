use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MisedError, Result};
use crate::matrix::SampleMatrix;

/// Candidate hyper-parameters and fold layout for cross-validation.
///
/// For estimators without a ridge term (KDE) the lambda candidates are ignored
/// and the sigma candidates are used as bandwidths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvGrid {
    pub sigma_candidates: Vec<f64>,
    pub lambda_candidates: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvGrid {
    /// Nine log-spaced widths in `[10^-0.3, 10]`, nine log-spaced ridge
    /// values in `[0.1, 10]`, five folds.
    fn default() -> Self {
        Self {
            sigma_candidates: log_spaced(-0.3, 1.0, 9),
            lambda_candidates: log_spaced(-1.0, 1.0, 9),
            folds: 5,
            seed: 0,
        }
    }
}

impl CvGrid {
    pub fn single(sigma: f64, lambda: f64) -> Self {
        Self {
            sigma_candidates: vec![sigma],
            lambda_candidates: vec![lambda],
            folds: 2,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.sigma_candidates.is_empty() || self.lambda_candidates.is_empty() {
            return Err(MisedError::invalid("candidate lists must be non-empty"));
        }
        if let Some(s) = self.sigma_candidates.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(MisedError::invalid(format!("sigma candidate {s} must be finite and > 0")));
        }
        if let Some(l) = self.lambda_candidates.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(MisedError::invalid(format!("lambda candidate {l} must be finite and >= 0")));
        }
        if self.folds < 2 {
            return Err(MisedError::invalid("at least two folds are required"));
        }
        if self.folds > n {
            return Err(MisedError::invalid(format!(
                "{} folds requested for only {n} samples",
                self.folds
            )));
        }
        Ok(())
    }
}

/// `count` values `10^e` with exponents evenly spaced over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Splits sample indices into `folds` contiguous groups after a seeded
/// shuffle of the rows' sorted order, so the assignment depends only on the
/// multiset of rows and the seed.
pub fn fold_assignment(samples: &SampleMatrix, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order = samples.sorted_row_order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n = order.len();
    (0..folds)
        .map(|t| order[t * n / folds..(t + 1) * n / folds].to_vec())
        .collect()
}

/// Training and held-out rows for each fold.
pub(crate) fn fold_splits(
    samples: &SampleMatrix,
    folds: usize,
    seed: u64,
) -> Vec<(SampleMatrix, SampleMatrix)> {
    let groups = fold_assignment(samples, folds, seed);
    (0..groups.len())
        .map(|t| {
            let train: Vec<usize> = groups
                .iter()
                .enumerate()
                .filter(|(u, _)| *u != t)
                .flat_map(|(_, g)| g.iter().copied())
                .collect();
            (samples.select_rows(&train), samples.select_rows(&groups[t]))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub sigma: f64,
    pub lambda: f64,
    /// Mean held-out score over folds; NaN when any fold failed.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub sigma: f64,
    pub lambda: f64,
    pub table: Vec<CvEntry>,
}

/// Picks the lowest finite score; exact ties go to the larger lambda, then
/// the larger sigma.
pub(crate) fn select_best(table: Vec<CvEntry>) -> Result<CvOutcome> {
    let best = table
        .iter()
        .filter(|e| e.score.is_finite())
        .min_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(b.lambda.total_cmp(&a.lambda))
                .then(b.sigma.total_cmp(&a.sigma))
        })
        .ok_or_else(|| MisedError::numerical("no candidate produced a finite cross-validation score"))?;
    Ok(CvOutcome {
        sigma: best.sigma,
        lambda: best.lambda,
        table: table.clone(),
    })
}
