//! Nearest-neighbor KL with local metrics learned non-parametrically: the
//! Hessians of both densities come from order-2 direct derivative fits and
//! the density ratio from least-squares importance fitting.

use serde::{Deserialize, Serialize};

use super::metric::{build_b_tilde, hessian_field, local_metric_from_b, LocalMetric};
use super::nn::{nn_estimate, NnKlReport, Reference};
use super::ratio::{fit_ulsif_fixed, fit_ulsif_with, UlsifConfig};
use crate::derivative::{fit_mised, fit_mised_cv, CvGrid, MisedModel};
use crate::error::{MisedError, Result};
use crate::kernel::CenterSelection;
use crate::matrix::SampleMatrix;

/// Pinned `(sigma, lambda)` pairs that skip cross-validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnedParameters {
    pub p1: (f64, f64),
    pub p2: (f64, f64),
    pub ratio: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MisedMetricConfig {
    pub derivative_grid: CvGrid,
    /// Cap on kernel centers for the Hessian fits; `None` uses every sample.
    pub derivative_centers: Option<usize>,
    pub ratio: UlsifConfig,
    pub pinned: Option<PinnedParameters>,
    pub seed: u64,
}

impl Default for MisedMetricConfig {
    fn default() -> Self {
        Self {
            derivative_grid: CvGrid::default(),
            derivative_centers: Some(200),
            ratio: UlsifConfig::default(),
            pinned: None,
            seed: 0,
        }
    }
}

impl MisedMetricConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn derivative_grid_for(&self, n: usize, stream: u64) -> CvGrid {
        let mut g = self.derivative_grid.clone();
        g.folds = g.folds.min(n);
        g.seed = self.seed.wrapping_mul(31).wrapping_add(stream);
        g
    }

    fn centers(&self, stream: u64) -> CenterSelection {
        CenterSelection {
            cap: self.derivative_centers,
            seed: self.seed.wrapping_mul(131).wrapping_add(stream),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MisedMetricReport {
    pub value: f64,
    pub floored: usize,
    /// `None` in one dimension, where every unit-determinant metric is the identity.
    pub parameters: Option<PinnedParameters>,
}

fn fit_hessian_model(
    x: &SampleMatrix,
    config: &MisedMetricConfig,
    pinned: Option<(f64, f64)>,
    stream: u64,
) -> Result<MisedModel> {
    let centers = config.centers(stream);
    match pinned {
        Some((sigma, lambda)) => fit_mised(x, 2, sigma, lambda, centers),
        None => Ok(fit_mised_cv(x, 2, &config.derivative_grid_for(x.nrows(), stream), centers)?.0),
    }
}

/// Builds one metric per row of `x1`. `reference` is the sample representing
/// `p2` and `n2` its effective size.
fn learn_metrics(
    x1: &SampleMatrix,
    reference: &SampleMatrix,
    n2: usize,
    config: &MisedMetricConfig,
) -> Result<(Vec<LocalMetric>, PinnedParameters)> {
    let d = x1.ncols();
    let pinned = config.pinned;
    let m1 = fit_hessian_model(x1, config, pinned.map(|p| p.p1), 1)?;
    let m2 = fit_hessian_model(reference, config, pinned.map(|p| p.p2), 2)?;
    let h1 = hessian_field(&m1, x1)?;
    let h2 = hessian_field(&m2, x1)?;

    let ratio_centers = CenterSelection {
        cap: config.ratio.centers,
        seed: config.seed.wrapping_mul(137).wrapping_add(3),
    };
    let ratio_model = match pinned {
        Some(p) => fit_ulsif_fixed(x1, reference, p.ratio.0, p.ratio.1, ratio_centers, config.ratio.floor)?,
        None => {
            let mut rc = config.ratio.clone();
            rc.grid.folds = rc.grid.folds.min(x1.nrows()).min(reference.nrows());
            rc.grid.seed = config.seed.wrapping_mul(31).wrapping_add(3);
            fit_ulsif_with(x1, reference, &rc)?.0
        }
    };
    let ratios = ratio_model.predict(x1)?;

    let metrics = x1
        .rows()
        .enumerate()
        .map(|(i, x)| {
            let b = build_b_tilde(&h1.matrices[i], &h2.matrices[i], ratios[i], x1.nrows(), n2, d)?;
            local_metric_from_b(&b, x)
        })
        .collect::<Result<Vec<_>>>()?;
    let params = PinnedParameters {
        p1: (m1.sigma(), m1.lambda()),
        p2: (m2.sigma(), m2.lambda()),
        ratio: (ratio_model.sigma(), ratio_model.lambda()),
    };
    Ok((metrics, params))
}

fn check(x1: &SampleMatrix, x2: &SampleMatrix) -> Result<()> {
    if x1.nrows() < 2 || x2.nrows() < 2 {
        return Err(MisedError::invalid("each sample needs at least two points"));
    }
    if x1.ncols() != x2.ncols() {
        return Err(MisedError::invalid("sample dimensions differ"));
    }
    if !(x1.all_finite() && x2.all_finite()) {
        return Err(MisedError::invalid("samples must be finite"));
    }
    Ok(())
}

/// `KL(p1 || p2)` by nearest neighbors under MISED-learned local metrics.
pub fn mised_metric_kl(x1: &SampleMatrix, x2: &SampleMatrix, config: &MisedMetricConfig) -> Result<f64> {
    Ok(mised_metric_kl_detailed(x1, x2, config)?.value)
}

pub fn mised_metric_kl_detailed(
    x1: &SampleMatrix,
    x2: &SampleMatrix,
    config: &MisedMetricConfig,
) -> Result<MisedMetricReport> {
    check(x1, x2)?;
    if x1.ncols() == 1 {
        let r = nn_estimate(x1, x2, None, Reference::Separate)?;
        return Ok(report(r, None));
    }
    let (metrics, params) = learn_metrics(x1, x2, x2.nrows(), config)?;
    let r = nn_estimate(x1, x2, Some(&metrics), Reference::Separate)?;
    Ok(report(r, Some(params)))
}

/// `KL(p1 || p)` where `p` is represented by `x1` together with `rest`.
pub(crate) fn mised_metric_kl_pooled(
    x1: &SampleMatrix,
    rest: &SampleMatrix,
    config: &MisedMetricConfig,
) -> Result<MisedMetricReport> {
    check(x1, x1)?;
    if x1.ncols() != rest.ncols() {
        return Err(MisedError::invalid("sample dimensions differ"));
    }
    if x1.ncols() == 1 {
        let r = nn_estimate(x1, rest, None, Reference::Pooled)?;
        return Ok(report(r, None));
    }
    let pool = x1.vstack(rest)?;
    let (metrics, params) = learn_metrics(x1, &pool, pool.nrows() - 1, config)?;
    let r = nn_estimate(x1, rest, Some(&metrics), Reference::Pooled)?;
    Ok(report(r, Some(params)))
}

fn report(r: NnKlReport, parameters: Option<PinnedParameters>) -> MisedMetricReport {
    MisedMetricReport {
        value: r.value,
        floored: r.floored,
        parameters,
    }
}
