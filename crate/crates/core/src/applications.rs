//! Downstream tasks: sliding-window change scoring with ROC evaluation,
//! Jensen-Shannon divergence, forward feature selection, and the
//! normalized MSE used to compare derivative estimators.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::pipeline::mised_metric_kl_pooled;
use crate::divergence::{KlMethod, MisedMetricConfig, PinnedParameters};
use crate::error::{MisedError, Result};
use crate::matrix::SampleMatrix;

/// Sliding-window embedding: `y(t) = (x_t, ..., x_{t+m-1})` and
/// `Y(t) = {y(t), ..., y(t+r-1)}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub r: usize,
    pub m: usize,
    /// Ground-truth matching tolerance in timesteps; defaults to `r + m`.
    #[serde(default)]
    pub tolerance: Option<usize>,
}

impl WindowConfig {
    pub fn new(r: usize, m: usize) -> Result<Self> {
        let cfg = Self { r, m, tolerance: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tolerance(mut self, w: usize) -> Self {
        self.tolerance = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.m == 0 {
            return Err(MisedError::invalid("window parameters r and m must be >= 1"));
        }
        Ok(())
    }

    /// Offset between the two compared windows.
    pub fn lag(&self) -> usize {
        self.r + self.m
    }

    pub fn tolerance(&self) -> usize {
        self.tolerance.unwrap_or(self.r + self.m)
    }

    /// Number of valid window pairs for a series of length `len`.
    pub fn pair_count(&self, len: usize) -> usize {
        (len + 1).saturating_sub(2 * self.lag())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    pub t: usize,
    pub before: SampleMatrix,
    pub after: SampleMatrix,
}

fn window_at(series: &[f64], t: usize, cfg: &WindowConfig) -> SampleMatrix {
    let mut data = Vec::with_capacity(cfg.r * cfg.m);
    for i in 0..cfg.r {
        data.extend_from_slice(&series[t + i..t + i + cfg.m]);
    }
    SampleMatrix::new(cfg.r, cfg.m, data).expect("window shape")
}

/// All pairs `(Y(t), Y(t + r + m))` with `t + 2(r + m) <= T`.
pub fn embed_windows(series: &[f64], cfg: &WindowConfig) -> Result<Vec<WindowPair>> {
    cfg.validate()?;
    if series.len() < 2 * cfg.lag() {
        return Err(MisedError::invalid(format!(
            "series of length {} is shorter than 2(r+m) = {}",
            series.len(),
            2 * cfg.lag()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(MisedError::invalid("series contains non-finite values"));
    }
    Ok((0..cfg.pair_count(series.len()))
        .map(|t| WindowPair {
            t,
            before: window_at(series, t, cfg),
            after: window_at(series, t + cfg.lag(), cfg),
        })
        .collect())
}

/// Change scores aligned to detection times `t + r + m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeScoreSeries {
    pub times: Vec<usize>,
    /// `None` where the estimator failed for that window pair.
    pub scores: Vec<Option<f64>>,
    pub change_points: Vec<usize>,
    pub tolerance: usize,
}

impl ChangeScoreSeries {
    /// Whether each detection time lies within the tolerance of a true change.
    pub fn labels(&self) -> Vec<bool> {
        self.times
            .iter()
            .map(|&t| self.change_points.iter().any(|&c| t.abs_diff(c) <= self.tolerance))
            .collect()
    }

    pub fn missing(&self) -> usize {
        self.scores.iter().filter(|s| s.is_none()).count()
    }
}

/// Scores `KL(Y(t) || Y(t + r + m))` for every valid `t`. Estimator failures
/// become missing scores.
pub fn change_scores(
    series: &[f64],
    change_points: &[usize],
    cfg: &WindowConfig,
    method: &KlMethod,
) -> Result<ChangeScoreSeries> {
    let pairs = embed_windows(series, cfg)?;
    let scores: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|p| {
            let est = method.reseeded(p.t as u64).estimate(&p.before, &p.after);
            match est {
                Ok(v) if v.is_finite() => Some(v),
                Ok(v) => {
                    warn!("non-finite score {v} at t = {}", p.t);
                    None
                }
                Err(e) => {
                    warn!("score at t = {} failed: {e}", p.t);
                    None
                }
            }
        })
        .collect();
    Ok(ChangeScoreSeries {
        times: pairs.iter().map(|p| p.t + cfg.lag()).collect(),
        scores,
        change_points: change_points.to_vec(),
        tolerance: cfg.tolerance(),
    })
}

/// Area under the ROC curve of `scores` against binary `labels`, by
/// trapezoidal integration over every distinct threshold.
pub fn roc_auc_labels(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MisedError::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MisedError::invalid("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(MisedError::invalid(
            "ROC needs at least one positive and one negative timestep",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // Twice the area in units of one (tp, fp) cell; ties form one diagonal step.
    let mut twice_area: u128 = 0;
    let mut tp: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut dtp, mut dfp) = (0u128, 0u128);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            i += 1;
        }
        twice_area += dfp * (2 * tp + dtp);
        tp += dtp;
    }
    Ok(twice_area as f64 / (2 * pos * neg) as f64)
}

/// AUC over the timesteps with a score present.
pub fn roc_auc(series: &ChangeScoreSeries) -> Result<f64> {
    let labels = series.labels();
    let (scores, labels): (Vec<f64>, Vec<bool>) = series
        .scores
        .iter()
        .zip(labels)
        .filter_map(|(s, l)| s.map(|s| (s, l)))
        .unzip();
    roc_auc_labels(&scores, &labels)
}

/// Mean squared error over all entries divided by the geometric mean of
/// the mean squared estimate and mean squared truth.
pub fn normalized_mse(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truths.len()
        || estimates.iter().zip(truths).any(|(e, t)| e.len() != t.len())
    {
        return Err(MisedError::invalid("estimates and truths differ in shape"));
    }
    let count: usize = truths.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(MisedError::invalid("normalized MSE of empty input"));
    }
    let (mut err, mut ee, mut tt) = (0.0, 0.0, 0.0);
    for (e, t) in estimates.iter().flatten().zip(truths.iter().flatten()) {
        err += (e - t) * (e - t);
        ee += e * e;
        tt += t * t;
    }
    let n = count as f64;
    let denom = ((ee / n) * (tt / n)).sqrt();
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(MisedError::invalid(
            "normalized MSE undefined: estimate or truth energy is zero",
        ));
    }
    Ok((err / n) / denom)
}

fn split_classes(x: &SampleMatrix, labels: &[u8]) -> Result<[SampleMatrix; 2]> {
    if labels.len() != x.nrows() {
        return Err(MisedError::invalid("one label per row is required"));
    }
    let mut idx = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        match l {
            1 | 2 => idx[usize::from(l - 1)].push(i),
            _ => return Err(MisedError::invalid(format!("labels must be 1 or 2, found {l}"))),
        }
    }
    if idx.iter().any(|c| c.len() < 2) {
        return Err(MisedError::invalid("each class needs at least two points"));
    }
    Ok([x.select_rows(&idx[0]), x.select_rows(&idx[1])])
}

fn js_from_terms(classes: &[SampleMatrix; 2], mut term: impl FnMut(usize) -> Result<f64>) -> Result<f64> {
    let n = (classes[0].nrows() + classes[1].nrows()) as f64;
    let mut total = 0.0;
    for c in 0..2 {
        total += classes[c].nrows() as f64 / n * term(c)?;
    }
    Ok(total)
}

/// `JS = sum_c p(y=c) KL(p(x|y=c) || p(x))` with `p(x)` represented by the
/// pooled sample and priors by class frequencies.
pub fn js_divergence(x: &SampleMatrix, labels: &[u8], method: &KlMethod) -> Result<f64> {
    let classes = split_classes(x, labels)?;
    js_from_terms(&classes, |c| method.estimate_to_pool(&classes[c], &classes[1 - c]))
}

fn js_with_configs(x: &SampleMatrix, labels: &[u8], configs: &[MisedMetricConfig; 2]) -> Result<f64> {
    let classes = split_classes(x, labels)?;
    js_from_terms(&classes, |c| {
        Ok(mised_metric_kl_pooled(&classes[c], &classes[1 - c], &configs[c])?.value)
    })
}

/// Full cross-validated JS evaluation that also returns per-class configs
/// pinned to the selected hyper-parameters, when there are any.
fn pinned_evaluation(
    x: &SampleMatrix,
    labels: &[u8],
    cfg: &MisedMetricConfig,
) -> (Result<f64>, Option<[MisedMetricConfig; 2]>) {
    let classes = match split_classes(x, labels) {
        Ok(c) => c,
        Err(e) => return (Err(e), None),
    };
    let mut found: [Option<PinnedParameters>; 2] = [None, None];
    let value = js_from_terms(&classes, |c| {
        let report = mised_metric_kl_pooled(&classes[c], &classes[1 - c], cfg)?;
        found[c] = report.parameters;
        Ok(report.value)
    });
    let configs = match (value.is_ok(), found) {
        (true, [Some(a), Some(b)]) => Some([a, b].map(|p| MisedMetricConfig {
            pinned: Some(p),
            ..cfg.clone()
        })),
        _ => None,
    };
    (value, configs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub features: Vec<usize>,
    /// Criterion value after adding each feature.
    pub scores: Vec<f64>,
    /// Candidate evaluations that failed and were skipped.
    pub skipped: usize,
}

/// Greedy forward selection of `num_features` columns maximizing the JS
/// divergence of the selected subset. With `reuse_parameters`, the MISED
/// estimator cross-validates once per step, on the lowest-index candidate,
/// and pins the result for the remaining candidates of that step.
pub fn forward_select(
    x: &SampleMatrix,
    labels: &[u8],
    num_features: usize,
    method: &KlMethod,
    reuse_parameters: bool,
) -> Result<Selection> {
    let d = x.ncols();
    if num_features == 0 || num_features > d {
        return Err(MisedError::invalid(format!(
            "number of features must be in 1..={d}, got {num_features}"
        )));
    }
    split_classes(x, labels)?;
    let mut selected: Vec<usize> = Vec::new();
    let mut scores = Vec::new();
    let mut skipped = 0;
    while selected.len() < num_features {
        let candidates: Vec<usize> = (0..d).filter(|c| !selected.contains(c)).collect();
        let subset = |c: usize| {
            let mut cols = selected.clone();
            cols.push(c);
            x.select_columns(&cols)
        };
        let mut first = None;
        let mut pinned = None;
        if let (true, KlMethod::Mised(cfg)) = (reuse_parameters, method) {
            let (value, configs) = match subset(candidates[0]) {
                Ok(xs) => pinned_evaluation(&xs, labels, cfg),
                Err(e) => (Err(e), None),
            };
            first = Some(value);
            pinned = configs;
        }
        let mut first = first.map(|v| vec![v]).unwrap_or_default();
        let rest = &candidates[first.len()..];
        let mut results: Vec<Result<f64>> = rest
            .par_iter()
            .map(|&c| {
                let xs = subset(c)?;
                match &pinned {
                    Some(cfgs) => js_with_configs(&xs, labels, cfgs),
                    None => js_divergence(&xs, labels, method),
                }
            })
            .collect();
        first.append(&mut results);
        let results = first;
        let mut best: Option<(usize, f64)> = None;
        for (&c, r) in candidates.iter().zip(results) {
            match r {
                Ok(v) if v.is_finite() => {
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((c, v));
                    }
                }
                Ok(v) => {
                    warn!("candidate feature {c} gave non-finite criterion {v}");
                    skipped += 1;
                }
                Err(e) => {
                    warn!("candidate feature {c} failed: {e}");
                    skipped += 1;
                }
            }
        }
        let (c, v) = best.ok_or_else(|| {
            MisedError::numerical(format!(
                "every candidate failed at selection step {}",
                selected.len() + 1
            ))
        })?;
        selected.push(c);
        scores.push(v);
    }
    Ok(Selection {
        features: selected,
        scores,
        skipped,
    })
}
