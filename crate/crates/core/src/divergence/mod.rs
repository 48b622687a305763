//! KL-divergence estimation: nearest-neighbor estimators with and without
//! learned local metrics, density-ratio fitting, and Gaussian baselines.

mod gaussian;
mod method;
mod metric;
mod nn;
pub(crate) mod pipeline;
mod ratio;

pub use gaussian::{fit_gaussian, gaussian_metric_kl, gaussian_parametric_kl, GaussianFit};
pub use method::KlMethod;
pub use metric::{
    build_b_tilde, hessian_field, local_metric_from_b, HessianField, LocalMetric, METRIC_ZERO_NORM,
};
pub use nn::{nn_kl, nn_kl_detailed, nn_kl_metric, nn_kl_metric_detailed, NnKlReport, DISTANCE_FLOOR};
pub use pipeline::{
    mised_metric_kl, mised_metric_kl_detailed, MisedMetricConfig, MisedMetricReport, PinnedParameters,
};
pub use ratio::{fit_ulsif, fit_ulsif_fixed, fit_ulsif_with, RatioModel, UlsifConfig, RATIO_FLOOR};
