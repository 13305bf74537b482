use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuous::KernelFamily;
use crate::error::{Error, Result};
use crate::model::{BiomarkerKind, ContrastKind, EstimatorMode};
use crate::nuisance::NuisanceConfig;
use crate::sim::{SamplingDesign, SimConfig};

/// Input column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub a: String,
    pub y: String,
    pub s: String,
    pub s_c: String,
    pub delta: String,
    pub pi: String,
    /// Covariate columns; all non-reserved columns when absent.
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            a: "a".into(),
            y: "y".into(),
            s: "s".into(),
            s_c: "s_c".into(),
            delta: "delta".into(),
            pi: "pi".into(),
            covariates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub biomarker: BiomarkerKind,
    pub columns: ColumnMap,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            path: None,
            biomarker: BiomarkerKind::Discrete,
            columns: ColumnMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    pub s1_star: f64,
    pub contrast: ContrastKind,
    pub kernel: KernelFamily,
    /// Fixed bandwidth; least-squares cross-validation when absent.
    pub bandwidth: Option<f64>,
    pub folds: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            mode: EstimatorMode::Tmle,
            s1_star: 1.0,
            contrast: ContrastKind::LogRelativeRisk,
            kernel: KernelFamily::Gaussian,
            bandwidth: None,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Threshold for a binary biomarker `1{S > threshold}`.
    pub discretize: Option<f64>,
    pub design: Option<SamplingDesign>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageConfig {
    pub s1_grid: Vec<f64>,
    pub bandwidths: Vec<f64>,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            s1_grid: vec![0.0, 0.3, 0.6],
            bandwidths: vec![0.2],
        }
    }
}

/// Everything a command needs, mirrored from a TOML file. Unknown keys are
/// rejected. The top-level `seed` is the only source of randomness: it
/// replaces the seeds in `[nuisance]` and `[simulation]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for replications; all available cores when absent.
    pub workers: Option<usize>,
    pub output: PathBuf,
    pub input: InputConfig,
    pub estimator: EstimatorConfig,
    pub nuisance: NuisanceConfig,
    pub simulation: SimConfig,
    pub simulate: SimulateConfig,
    pub coverage: CoverageConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let simulation = SimConfig::default();
        Self {
            seed: simulation.seed,
            workers: None,
            output: PathBuf::from("out"),
            input: InputConfig::default(),
            estimator: EstimatorConfig::default(),
            nuisance: NuisanceConfig::default(),
            simulation,
            simulate: SimulateConfig::default(),
            coverage: CoverageConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copy with the top-level seed pushed into every seeded section.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.nuisance.seed = c.seed;
        c.simulation.seed = c.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimator.folds == 0 {
            return Err(Error::Config("folds must be positive".into()));
        }
        if let Some(h) = self.estimator.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidBandwidth(h));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        self.simulation.validate()?;
        if let Some(d) = &self.simulate.design {
            d.validate()?;
        }
        Ok(())
    }
}
