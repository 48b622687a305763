//! Seeded experiment drivers shared by the command-line front end and the
//! integration tests. Seeds run in parallel; results keep seed order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::applications::{change_scores, forward_select, normalized_mse, roc_auc, ChangeScoreSeries, Selection, WindowConfig};
use crate::derivative::{cross_validate_kde, fit_kde, fit_mised_cv, CvGrid};
use crate::divergence::KlMethod;
use crate::error::{MisedError, Result};
use crate::io::{mean_std, AucReport};
use crate::kernel::{CenterSelection, MultiIndex};
use crate::matrix::SampleMatrix;
use crate::synthetic::{
    generate_change_series, make_shifted_densities, normal_derivative_truth, sample_normal, ChangeSeriesSpec,
};

/// Derives an independent seed for a sub-stream of one experiment seed.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(stream)
}

/// One seed of the MISED versus KDE comparison on a standard normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeComparison {
    pub seed: u64,
    pub d: usize,
    pub k: u32,
    pub mised_nmse: f64,
    pub kde_nmse: f64,
    pub mised_sigma: f64,
    pub mised_lambda: f64,
    pub kde_bandwidth: f64,
}

/// Fits both estimators by cross-validation on `n` standard-normal draws and
/// scores every order-`k` partial at the samples.
pub fn compare_derivatives(
    n: usize,
    d: usize,
    k: u32,
    seed: u64,
    grid: &CvGrid,
    centers: Option<usize>,
) -> Result<DerivativeComparison> {
    let x = sample_normal(n, d, seed)?;
    let grid = grid.clone().with_seed(stream_seed(seed, 1));
    let selection = CenterSelection {
        cap: centers,
        seed: stream_seed(seed, 2),
    };
    let (model, cv) = fit_mised_cv(&x, k, &grid, selection)?;
    let kde_cv = cross_validate_kde(&x, k, &grid)?;
    let kde = fit_kde(&x, kde_cv.sigma)?;

    let indices = MultiIndex::enumerate(d, k);
    let truth: Vec<Vec<f64>> = indices
        .iter()
        .map(|j| normal_derivative_truth(&x, j))
        .collect::<Result<_>>()?;
    let mised: Vec<Vec<f64>> = indices.iter().map(|j| model.predict(j, &x)).collect::<Result<_>>()?;
    let kde_est: Vec<Vec<f64>> = indices.iter().map(|j| kde.derivative(j, &x)).collect::<Result<_>>()?;
    Ok(DerivativeComparison {
        seed,
        d,
        k,
        mised_nmse: normalized_mse(&mised, &truth)?,
        kde_nmse: normalized_mse(&kde_est, &truth)?,
        mised_sigma: cv.sigma,
        mised_lambda: cv.lambda,
        kde_bandwidth: kde_cv.sigma,
    })
}

pub fn compare_over_seeds(
    n: usize,
    d: usize,
    k: u32,
    seeds: &[u64],
    grid: &CvGrid,
    centers: Option<usize>,
) -> Result<Vec<DerivativeComparison>> {
    seeds
        .par_iter()
        .map(|&s| compare_derivatives(n, d, k, s, grid, centers))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimSweepRow {
    pub d: usize,
    pub method: String,
    pub mean: f64,
    pub std: f64,
}

/// Mean and spread of the normalized MSE of both estimators per dimension.
/// Returns the summary rows and the per-seed comparisons behind them.
pub fn dim_sweep(
    dims: &[usize],
    n: usize,
    k: u32,
    seeds: &[u64],
    grid: &CvGrid,
    centers: Option<usize>,
) -> Result<(Vec<DimSweepRow>, Vec<DerivativeComparison>)> {
    if seeds.is_empty() {
        return Err(MisedError::invalid("at least one seed is required"));
    }
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    for &d in dims {
        let runs = compare_over_seeds(n, d, k, seeds, grid, centers)?;
        let m: Vec<f64> = runs.iter().map(|r| r.mised_nmse).collect();
        let kd: Vec<f64> = runs.iter().map(|r| r.kde_nmse).collect();
        for (method, values) in [("mised", m), ("kde", kd)] {
            let (mean, std) = mean_std(&values);
            rows.push(DimSweepRow {
                d,
                method: method.to_owned(),
                mean,
                std,
            });
        }
        raw.extend(runs);
    }
    Ok((rows, raw))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    pub rho: f64,
    pub n: usize,
    pub method: String,
    pub mean: f64,
    pub std: f64,
    pub true_kl: f64,
}

/// One estimate of `KL(p1 || p2)` for the generalized-Gaussian pair.
pub fn kl_trial(rho: f64, d: usize, n: usize, method: &KlMethod, seed: u64) -> Result<f64> {
    let dens = make_shifted_densities(rho, d, 2.0)?;
    let x1 = dens.sample_p1(n, stream_seed(seed, 1));
    let x2 = dens.sample_p2(n, stream_seed(seed, 2));
    method.reseeded(stream_seed(seed, 3)).estimate(&x1, &x2)
}

/// Every `(rho, n, method)` cell averaged over seeds.
pub fn kl_experiment(
    rhos: &[f64],
    ns: &[usize],
    d: usize,
    methods: &[KlMethod],
    seeds: &[u64],
) -> Result<Vec<KlRow>> {
    if seeds.is_empty() {
        return Err(MisedError::invalid("at least one seed is required"));
    }
    let mut rows = Vec::new();
    for &rho in rhos {
        let true_kl = make_shifted_densities(rho, d, 2.0)?.true_kl;
        for &n in ns {
            for method in methods {
                let values: Vec<f64> = seeds
                    .par_iter()
                    .map(|&s| kl_trial(rho, d, n, method, s))
                    .collect::<Result<_>>()?;
                let (mean, std) = mean_std(&values);
                rows.push(KlRow {
                    rho,
                    n,
                    method: method.name().to_owned(),
                    mean,
                    std,
                    true_kl,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeDetectionConfig {
    pub duration: usize,
    /// Mean shift between regimes, in standard deviations.
    pub shift: f64,
    pub window: WindowConfig,
}

impl Default for ChangeDetectionConfig {
    fn default() -> Self {
        Self {
            duration: 300,
            shift: 5.0,
            window: WindowConfig {
                r: 3,
                m: 100,
                tolerance: None,
            },
        }
    }
}

/// Scores one synthetic three-regime series.
pub fn change_detection_trial(
    cfg: &ChangeDetectionConfig,
    method: &KlMethod,
    seed: u64,
) -> Result<(ChangeScoreSeries, f64)> {
    let spec = ChangeSeriesSpec::three_regime(cfg.duration, cfg.shift, stream_seed(seed, 1));
    let series = generate_change_series(&spec)?;
    let scores = change_scores(
        &series.values,
        &series.change_points,
        &cfg.window,
        &method.reseeded(stream_seed(seed, 2)),
    )?;
    let auc = roc_auc(&scores)?;
    Ok((scores, auc))
}

/// AUC per seed and its summary; also returns the score series of the first seed.
pub fn change_detection_auc(
    cfg: &ChangeDetectionConfig,
    method: &KlMethod,
    seeds: &[u64],
) -> Result<(AucReport, ChangeScoreSeries)> {
    if seeds.is_empty() {
        return Err(MisedError::invalid("at least one seed is required"));
    }
    let runs: Vec<(ChangeScoreSeries, f64)> = seeds
        .par_iter()
        .map(|&s| change_detection_trial(cfg, method, s))
        .collect::<Result<_>>()?;
    let auc = runs.iter().map(|r| r.1).collect();
    let first = runs.into_iter().next().expect("non-empty").0;
    Ok((AucReport::new(method.name(), seeds.to_vec(), auc), first))
}

/// Two balanced classes of standard-normal features where class 2 is
/// shifted by `shift` along each informative column.
pub fn planted_features(
    n: usize,
    d: usize,
    informative: &[usize],
    shift: f64,
    seed: u64,
) -> Result<(SampleMatrix, Vec<u8>)> {
    if let Some(&bad) = informative.iter().find(|&&c| c >= d) {
        return Err(MisedError::invalid(format!("informative column {bad} out of range for d = {d}")));
    }
    let base = sample_normal(n, d, seed)?;
    let labels: Vec<u8> = (0..n).map(|i| if i < n / 2 { 1 } else { 2 }).collect();
    let x = SampleMatrix::new(
        n,
        d,
        base.rows()
            .zip(&labels)
            .flat_map(|(row, &l)| {
                row.iter()
                    .enumerate()
                    .map(move |(c, v)| if l == 2 && informative.contains(&c) { v + shift } else { *v })
            })
            .collect(),
    )?;
    Ok((x, labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectionConfig {
    pub n: usize,
    pub d: usize,
    pub informative: Vec<usize>,
    pub shift: f64,
    pub num_features: usize,
    pub reuse_parameters: bool,
}

impl Default for FeatureSelectionConfig {
    fn default() -> Self {
        Self {
            n: 400,
            d: 6,
            informative: vec![0],
            shift: 2.0,
            num_features: 1,
            reuse_parameters: true,
        }
    }
}

pub fn feature_selection_trial(cfg: &FeatureSelectionConfig, method: &KlMethod, seed: u64) -> Result<Selection> {
    let (x, labels) = planted_features(cfg.n, cfg.d, &cfg.informative, cfg.shift, stream_seed(seed, 1))?;
    forward_select(
        &x,
        &labels,
        cfg.num_features,
        &method.reseeded(stream_seed(seed, 2)),
        cfg.reuse_parameters,
    )
}

pub fn feature_selection_runs(
    cfg: &FeatureSelectionConfig,
    method: &KlMethod,
    seeds: &[u64],
) -> Result<Vec<Selection>> {
    seeds
        .par_iter()
        .map(|&s| feature_selection_trial(cfg, method, s))
        .collect()
}
