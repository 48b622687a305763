//! Gaussian kernel density estimation with analytic derivatives, used as the
//! two-step baseline.

use std::f64::consts::PI;

use super::cv::{fold_splits, select_best, CvEntry, CvGrid, CvOutcome};
use super::parity_sign;
use crate::error::{MisedError, Result};
use crate::kernel::{check_sigma, gram_prefactor, MultiIndex, PartialTable};
use crate::matrix::SampleMatrix;

/// Normalized Gaussian mixture `p(x) = 1/n sum_i N(x; x_i, h^2 I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeModel {
    samples: SampleMatrix,
    bandwidth: f64,
}

pub fn fit_kde(samples: &SampleMatrix, bandwidth: f64) -> Result<KdeModel> {
    check_sigma(bandwidth)?;
    if samples.is_empty() {
        return Err(MisedError::invalid("KDE needs at least one sample"));
    }
    Ok(KdeModel {
        samples: samples.clone(),
        bandwidth,
    })
}

impl KdeModel {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &SampleMatrix {
        &self.samples
    }

    fn dim(&self) -> usize {
        self.samples.ncols()
    }

    fn normalizer(&self) -> f64 {
        let d = self.dim() as f64;
        1.0 / (self.samples.nrows() as f64 * (2.0 * PI * self.bandwidth * self.bandwidth).powf(d / 2.0))
    }

    pub fn density(&self, queries: &SampleMatrix) -> Result<Vec<f64>> {
        self.derivative(&MultiIndex::zero(self.dim()), queries)
    }

    /// Partial derivative `j` of the mixture; the zero index gives the density.
    pub fn derivative(&self, j: &MultiIndex, queries: &SampleMatrix) -> Result<Vec<f64>> {
        let d = self.dim();
        if queries.ncols() != d || j.dim() != d {
            return Err(MisedError::invalid(format!(
                "expected dimension {d}, got queries {} and multi-index {}",
                queries.ncols(),
                j.dim()
            )));
        }
        Ok(mixture_partials(&self.samples, self.bandwidth, queries, std::slice::from_ref(j))
            .into_iter()
            .next()
            .expect("one index")
            .into_iter()
            .map(|s| s * self.normalizer())
            .collect())
    }

    /// `int (d^j p)^2 dx`, evaluated in closed form.
    pub fn derivative_sq_integral(&self, j: &MultiIndex) -> Result<f64> {
        if j.dim() != self.dim() {
            return Err(MisedError::invalid("multi-index dimension mismatch"));
        }
        Ok(sq_integrals(&self.samples, self.bandwidth, std::slice::from_ref(j))[0])
    }
}

/// Unnormalized sums `sum_i d^j K_h(x - x_i)` for each multi-index and query.
fn mixture_partials(
    samples: &SampleMatrix,
    h: f64,
    queries: &SampleMatrix,
    indices: &[MultiIndex],
) -> Vec<Vec<f64>> {
    let max_order = indices.iter().map(MultiIndex::order).max().unwrap_or(0);
    let mut table = PartialTable::new(samples.ncols(), max_order);
    let mut out = vec![vec![0.0; queries.nrows()]; indices.len()];
    for (q, x) in queries.rows().enumerate() {
        for c in samples.rows() {
            table.load(x, c, h);
            for (slot, j) in out.iter_mut().zip(indices) {
                slot[q] += table.value(j);
            }
        }
    }
    out
}

/// `int (d^j p)^2` for each multi-index.
///
/// With `psi_a(x) = exp(-|x - x_a|^2 / 2h^2)`,
/// `int d^j psi_a d^j psi_b = (-1)^k d^{2j} G(x_a - x_b)` where
/// `G(delta) = (pi h^2)^{d/2} exp(-|delta|^2 / 4h^2)` is itself a Gaussian
/// kernel of width `sqrt(2) h`.
fn sq_integrals(samples: &SampleMatrix, h: f64, indices: &[MultiIndex]) -> Vec<f64> {
    let d = samples.ncols();
    let n = samples.nrows();
    let doubled: Vec<MultiIndex> = indices
        .iter()
        .map(|j| j.combined(j).expect("same dimension"))
        .collect();
    let max_order = doubled.iter().map(MultiIndex::order).max().unwrap_or(0);
    let wide = std::f64::consts::SQRT_2 * h;
    let mut table = PartialTable::new(d, max_order);
    let zero = vec![0.0; d];
    let mut delta = vec![0.0; d];
    let mut sums = vec![0.0; indices.len()];
    for a in 0..n {
        let xa = samples.row(a);
        table.load(&zero, &zero, wide);
        for (s, j) in sums.iter_mut().zip(&doubled) {
            *s += table.value(j);
        }
        for b in 0..a {
            for ((dl, p), q) in delta.iter_mut().zip(xa).zip(samples.row(b)) {
                *dl = p - q;
            }
            table.load(&delta, &zero, wide);
            for (s, j) in sums.iter_mut().zip(&doubled) {
                *s += 2.0 * table.value(j);
            }
        }
    }
    let norm = 1.0 / (n as f64 * (2.0 * PI * h * h).powf(d as f64 / 2.0));
    let pre = gram_prefactor(h, d);
    sums.iter()
        .zip(indices)
        .map(|(s, j)| parity_sign(j.order()) * pre * s * norm * norm)
        .collect()
}

/// Chooses the bandwidth minimizing the held-out derivative score
/// `int g^2 - 2 (-1)^k / |X_t| sum_{x in X_t} d^j g(x)`, summed over every
/// multi-index of `order`. Only `grid.sigma_candidates` are used.
pub fn cross_validate_kde(samples: &SampleMatrix, order: u32, grid: &CvGrid) -> Result<CvOutcome> {
    if samples.nrows() < 2 {
        return Err(MisedError::invalid("at least two samples are required"));
    }
    let mut sigma_only = grid.clone();
    sigma_only.lambda_candidates = vec![0.0];
    sigma_only.validate(samples.nrows())?;
    let indices = MultiIndex::enumerate(samples.ncols(), order);
    let doubled: Vec<MultiIndex> = indices
        .iter()
        .map(|j| j.combined(j).expect("same dimension"))
        .collect();
    let splits = fold_splits(samples, grid.folds, grid.seed);
    let sign = parity_sign(order);
    let d = samples.ncols() as f64;

    let table = grid
        .sigma_candidates
        .iter()
        .map(|&h| {
            let mut total = 0.0;
            for (train, held) in &splits {
                let sq = sq_integrals(train, h, &indices);
                let norm =
                    1.0 / (train.nrows() as f64 * (2.0 * PI * h * h).powf(d / 2.0));
                let partials = mixture_partials(train, h, held, &doubled);
                for (s, p) in sq.iter().zip(&partials) {
                    let mean = p.iter().sum::<f64>() * norm / held.nrows() as f64;
                    total += s - 2.0 * sign * mean;
                }
            }
            CvEntry {
                sigma: h,
                lambda: 0.0,
                score: total / splits.len() as f64,
            }
        })
        .collect();
    select_best(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_density_at_origin() {
        let m = fit_kde(&SampleMatrix::from_column(&[0.0]).unwrap(), 1.0).unwrap();
        let v = m.density(&SampleMatrix::from_column(&[0.0]).unwrap()).unwrap();
        assert!((v[0] - 0.398_942_280_4).abs() < 1e-10);
    }

    #[test]
    fn first_derivative_vanishes_at_symmetry_point() {
        let m = fit_kde(&SampleMatrix::from_column(&[-1.0, 1.0, -2.5, 2.5]).unwrap(), 0.6).unwrap();
        let j = MultiIndex::new(vec![1]).unwrap();
        let v = m.derivative(&j, &SampleMatrix::from_column(&[0.0]).unwrap()).unwrap();
        assert!(v[0].abs() < 1e-16);
    }

    #[test]
    fn rejects_non_positive_bandwidth() {
        let x = SampleMatrix::from_column(&[0.0, 1.0]).unwrap();
        assert!(fit_kde(&x, 0.0).is_err());
        assert!(fit_kde(&x, -1.0).is_err());
    }

    #[test]
    fn single_candidate_is_returned() {
        let x = SampleMatrix::from_column(&[0.0, 1.0, 0.4, -0.3, 2.0]).unwrap();
        let mut grid = CvGrid::single(0.7, 0.0);
        grid.folds = 5;
        assert_eq!(cross_validate_kde(&x, 1, &grid).unwrap().sigma, 0.7);
    }
}
