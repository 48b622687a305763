//! Nearest-neighbor KL estimation,
//! `KL(p1 || p2) ~ 1/n1 sum_i log[n2 dist2(x_i)^d / ((n1 - 1) dist1(x_i)^d)]`,
//! where `dist1` excludes `x_i` itself.

use log::warn;

use super::metric::LocalMetric;
use crate::error::{MisedError, Result};
use crate::matrix::{squared_distance, SampleMatrix};

/// Distances below this are replaced by it.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NnKlReport {
    pub value: f64,
    /// Number of nearest-neighbor distances that hit [`DISTANCE_FLOOR`].
    pub floored: usize,
}

/// What the second sample represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Reference {
    /// `x2` is an independent sample of `p2`.
    Separate,
    /// `p2` is represented by `x1` together with `x2`; each anchor is left
    /// out of its own reference sample.
    Pooled,
}

fn check_inputs(x1: &SampleMatrix, x2: &SampleMatrix, reference: Reference) -> Result<()> {
    if x1.nrows() < 2 {
        return Err(MisedError::invalid("nearest-neighbor KL needs at least two samples from p1"));
    }
    if reference == Reference::Separate && x2.nrows() < 1 {
        return Err(MisedError::invalid("nearest-neighbor KL needs at least one sample from p2"));
    }
    if x1.ncols() != x2.ncols() {
        return Err(MisedError::invalid(format!(
            "sample dimensions differ: {} vs {}",
            x1.ncols(),
            x2.ncols()
        )));
    }
    Ok(())
}

fn nn_core(
    x1: &SampleMatrix,
    x2: &SampleMatrix,
    reference: Reference,
    sq_dist: impl Fn(usize, &[f64], &[f64]) -> f64,
) -> NnKlReport {
    let n1 = x1.nrows();
    let n2 = match reference {
        Reference::Separate => x2.nrows(),
        Reference::Pooled => n1 - 1 + x2.nrows(),
    };
    let d = x1.ncols() as f64;
    let log_count_ratio = (n2 as f64 / (n1 - 1) as f64).ln();
    let floor_sq = DISTANCE_FLOOR * DISTANCE_FLOOR;
    let mut floored = 0;
    let mut total = 0.0;
    for (i, xi) in x1.rows().enumerate() {
        let mut s1 = f64::INFINITY;
        for (k, xk) in x1.rows().enumerate() {
            if k != i {
                s1 = s1.min(sq_dist(i, xi, xk));
            }
        }
        let mut s2 = f64::INFINITY;
        for xk in x2.rows() {
            s2 = s2.min(sq_dist(i, xi, xk));
        }
        if reference == Reference::Pooled {
            s2 = s2.min(s1);
        }
        if s1 < floor_sq {
            s1 = floor_sq;
            floored += 1;
        }
        if s2 < floor_sq {
            s2 = floor_sq;
            floored += 1;
        }
        total += log_count_ratio + 0.5 * d * (s2.ln() - s1.ln());
    }
    if floored > 0 {
        warn!("{floored} nearest-neighbor distances were below {DISTANCE_FLOOR:e} and were floored");
    }
    NnKlReport {
        value: total / n1 as f64,
        floored,
    }
}

/// Euclidean nearest-neighbor KL estimate of `KL(p1 || p2)`.
pub fn nn_kl(x1: &SampleMatrix, x2: &SampleMatrix) -> Result<f64> {
    Ok(nn_kl_detailed(x1, x2)?.value)
}

pub fn nn_kl_detailed(x1: &SampleMatrix, x2: &SampleMatrix) -> Result<NnKlReport> {
    nn_estimate(x1, x2, None, Reference::Separate)
}

/// Nearest-neighbor KL where the distances around anchor `x1[i]` use the
/// Mahalanobis metric `metrics[i]`.
pub fn nn_kl_metric(x1: &SampleMatrix, x2: &SampleMatrix, metrics: &[LocalMetric]) -> Result<f64> {
    Ok(nn_kl_metric_detailed(x1, x2, metrics)?.value)
}

pub fn nn_kl_metric_detailed(
    x1: &SampleMatrix,
    x2: &SampleMatrix,
    metrics: &[LocalMetric],
) -> Result<NnKlReport> {
    nn_estimate(x1, x2, Some(metrics), Reference::Separate)
}

/// `KL(p1 || p)` where `p` is represented by `x1` and `rest` together.
pub(crate) fn nn_kl_pooled(
    x1: &SampleMatrix,
    rest: &SampleMatrix,
    metrics: Option<&[LocalMetric]>,
) -> Result<NnKlReport> {
    nn_estimate(x1, rest, metrics, Reference::Pooled)
}

pub(crate) fn nn_estimate(
    x1: &SampleMatrix,
    x2: &SampleMatrix,
    metrics: Option<&[LocalMetric]>,
    reference: Reference,
) -> Result<NnKlReport> {
    check_inputs(x1, x2, reference)?;
    let Some(metrics) = metrics else {
        return Ok(nn_core(x1, x2, reference, |_, a, b| squared_distance(a, b)));
    };
    if metrics.len() != x1.nrows() {
        return Err(MisedError::invalid(format!(
            "{} metrics supplied for {} anchors",
            metrics.len(),
            x1.nrows()
        )));
    }
    let d = x1.ncols();
    if let Some(bad) = metrics.iter().position(|m| m.dim() != d) {
        return Err(MisedError::invalid(format!("metric {bad} does not have dimension {d}")));
    }
    if let Some(bad) = metrics.iter().zip(x1.rows()).position(|(m, x)| m.anchor() != x) {
        return Err(MisedError::invalid(format!("metric {bad} is anchored away from its sample")));
    }
    let mats: Vec<&[f64]> = metrics.iter().map(|m| m.matrix().as_slice()).collect();
    Ok(nn_core(x1, x2, reference, |i, a, b| quadratic_form(mats[i], a, b)))
}

/// `(a - b)' A (a - b)` for a column-major `A`, summed in the same order as
/// [`squared_distance`] so the identity metric reproduces it bit for bit.
#[inline]
fn quadratic_form(a_mat: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    let mut total = 0.0;
    for r in 0..d {
        let dr = a[r] - b[r];
        let mut inner = 0.0;
        for c in 0..d {
            // A is symmetric, so column r equals row r.
            inner += a_mat[r * d + c] * (a[c] - b[c]);
        }
        total += dr * inner;
    }
    total
}
