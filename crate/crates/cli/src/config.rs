//! Subcommand configurations. Each one can be loaded from a JSON file; any
//! flag given on the command line replaces the file's value.

use std::path::PathBuf;

use mised::divergence::{KlMethod, MisedMetricConfig};
use mised::{MisedError, Result};
use serde::{Deserialize, Serialize};

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// Parses a method name, attaching the MISED settings when it names MISED.
pub fn method_from_name(name: &str, mised: &MisedMetricConfig) -> Result<KlMethod> {
    Ok(match name.parse::<KlMethod>()? {
        KlMethod::Mised(_) => KlMethod::Mised(mised.clone()),
        other => other,
    })
}

pub fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(MisedError::InvalidArgument(msg.to_owned()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub input: Option<PathBuf>,
    pub generator: String,
    pub n: usize,
    pub d: usize,
    pub k: u32,
    pub seed: u64,
    /// `paper-grid` cross-validates; `fixed` uses `sigma` and `lambda`.
    pub cv: String,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub folds: usize,
    pub centers: Option<usize>,
    pub model_out: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            input: None,
            generator: "normal".into(),
            n: 500,
            d: 1,
            k: 1,
            seed: 0,
            cv: "paper-grid".into(),
            sigma: None,
            lambda: None,
            folds: 5,
            centers: None,
            model_out: None,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimSweepConfig {
    pub dims: Vec<usize>,
    pub n: usize,
    pub k: u32,
    pub seeds: Vec<u64>,
    pub folds: usize,
    pub centers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for DimSweepConfig {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3, 4, 5],
            n: 500,
            k: 1,
            seeds: default_seeds(),
            folds: 5,
            centers: None,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlConfig {
    pub rhos: Vec<f64>,
    pub ns: Vec<usize>,
    pub d: usize,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub mised: MisedMetricConfig,
    pub out: Option<PathBuf>,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self {
            rhos: vec![1.0, 2.0, 3.0],
            ns: vec![500, 1000],
            d: 5,
            methods: KlMethod::NAMES.iter().map(|s| s.to_string()).collect(),
            seeds: default_seeds(),
            mised: MisedMetricConfig::default(),
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChangeConfig {
    pub method: String,
    pub duration: usize,
    pub shift: f64,
    pub r: usize,
    pub m: usize,
    pub tolerance: Option<usize>,
    pub seeds: Vec<u64>,
    pub mised: MisedMetricConfig,
    pub scores_out: Option<PathBuf>,
    pub auc_out: Option<PathBuf>,
}

impl Default for ChangeConfig {
    fn default() -> Self {
        Self {
            method: "mised".into(),
            duration: 300,
            shift: 5.0,
            r: 3,
            m: 100,
            tolerance: None,
            seeds: default_seeds(),
            mised: MisedMetricConfig::default(),
            scores_out: None,
            auc_out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub method: String,
    /// Headed CSV of features plus a label column holding 1 or 2.
    pub input: Option<PathBuf>,
    pub label_column: String,
    pub n: usize,
    pub d: usize,
    pub informative: Vec<usize>,
    pub shift: f64,
    pub num_features: usize,
    pub reuse_parameters: bool,
    pub seed: u64,
    pub mised: MisedMetricConfig,
    pub out: Option<PathBuf>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            method: "mised".into(),
            input: None,
            label_column: "y".into(),
            n: 400,
            d: 6,
            informative: vec![0],
            shift: 2.0,
            num_features: 1,
            reuse_parameters: true,
            seed: 0,
            mised: MisedMetricConfig::default(),
            out: None,
        }
    }
}
