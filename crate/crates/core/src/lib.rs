//! Direct non-parametric estimation of multi-dimensional, higher-order
//! density derivatives, and the divergence, change-detection and
//! feature-selection tools built on top of it.

pub mod applications;
pub mod derivative;
pub mod divergence;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kernel;
mod linalg;
pub mod matrix;
pub mod synthetic;

pub use error::{MisedError, Result};
pub use kernel::{CenterSelection, MultiIndex};
pub use matrix::SampleMatrix;
