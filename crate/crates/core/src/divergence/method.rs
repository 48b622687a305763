use std::fmt;
use std::str::FromStr;

use super::gaussian::{gaussian_metric_kl, gaussian_metric_kl_pooled, gaussian_parametric_kl};
use super::nn::{nn_kl, nn_kl_pooled};
use super::pipeline::{mised_metric_kl, mised_metric_kl_pooled, MisedMetricConfig};
use crate::error::{MisedError, Result};
use crate::matrix::SampleMatrix;

/// A KL-divergence estimator selectable by name.
#[derive(Clone, Debug, PartialEq)]
pub enum KlMethod {
    /// Nearest neighbors under MISED-learned local metrics.
    Mised(MisedMetricConfig),
    /// Plain Euclidean nearest neighbors.
    Nn,
    /// Nearest neighbors under metrics from Gaussian fits.
    Nng,
    /// Closed-form KL between Gaussian fits.
    Gp,
}

impl KlMethod {
    pub const NAMES: [&'static str; 4] = ["mised", "nn", "nng", "gp"];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mised(_) => "mised",
            Self::Nn => "nn",
            Self::Nng => "nng",
            Self::Gp => "gp",
        }
    }

    /// Same method with its random streams re-seeded.
    pub fn reseeded(&self, seed: u64) -> Self {
        match self {
            Self::Mised(c) => Self::Mised(c.clone().with_seed(seed)),
            other => other.clone(),
        }
    }

    /// `KL(p1 || p2)` from `x1 ~ p1` and `x2 ~ p2`.
    pub fn estimate(&self, x1: &SampleMatrix, x2: &SampleMatrix) -> Result<f64> {
        match self {
            Self::Mised(c) => mised_metric_kl(x1, x2, c),
            Self::Nn => nn_kl(x1, x2),
            Self::Nng => gaussian_metric_kl(x1, x2),
            Self::Gp => gaussian_parametric_kl(x1, x2),
        }
    }

    /// `KL(p1 || p)` where the sample of `p` is `x1` and `rest` pooled. For
    /// nearest-neighbor methods each anchor is left out of the pool.
    pub fn estimate_to_pool(&self, x1: &SampleMatrix, rest: &SampleMatrix) -> Result<f64> {
        match self {
            Self::Mised(c) => Ok(mised_metric_kl_pooled(x1, rest, c)?.value),
            Self::Nn => Ok(nn_kl_pooled(x1, rest, None)?.value),
            Self::Nng => Ok(gaussian_metric_kl_pooled(x1, rest)?.value),
            Self::Gp => gaussian_parametric_kl(x1, &x1.vstack(rest)?),
        }
    }
}

impl fmt::Display for KlMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KlMethod {
    type Err = MisedError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mised" => Ok(Self::Mised(MisedMetricConfig::default())),
            "nn" => Ok(Self::Nn),
            "nng" => Ok(Self::Nng),
            "gp" => Ok(Self::Gp),
            _ => Err(MisedError::invalid(format!(
                "unknown method {s:?}; valid methods: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}
