//! Density-derivative estimators: the direct MISE-minimizing kernel model,
//! the Gaussian KDE baseline, and their cross-validation.

mod cv;
mod kde;
mod mised;

pub use cv::{fold_assignment, log_spaced, CvEntry, CvGrid, CvOutcome};
pub(crate) use cv::{fold_splits as cv_splits, select_best as cv_select};
pub use kde::{cross_validate_kde, fit_kde, KdeModel};
pub use mised::{
    cross_validate_mised, cross_validate_mised_with_centers, fit_mised, fit_mised_cv,
    MisedModel, MisedModelDocument,
};

/// `(-1)^k`.
pub(crate) fn parity_sign(order: u32) -> f64 {
    if order.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
