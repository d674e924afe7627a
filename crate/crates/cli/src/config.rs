//! The JSON run configuration read by `--config`.
//!
//! Every block is optional and unknown keys are rejected at every level.
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigrf::equivalence::RuleChoice;
use sigrf::quadrature::QuadratureConfig;
use sigrf::simulate::{Method, SynthesisConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Replaces the default quadrature settings; omitted fields keep their defaults.
    pub quadrature: Option<QuadratureConfig>,
    pub check: Option<CheckSection>,
    pub variogram: Option<PointsSection>,
    pub covariance: Option<PointsSection>,
    pub simulate: Option<SimulateSection>,
    pub kernel: Option<KernelSection>,
    pub llr: Option<LlrSection>,
    pub normratio: Option<NormRatioSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub model0: Option<PathBuf>,
    pub model1: Option<PathBuf>,
    pub rule: Option<RuleChoice>,
    pub k: Option<f64>,
    pub margin: Option<f64>,
    pub shells: Option<usize>,
    pub n_cut: Option<usize>,
}

/// Shared by `variogram` and `covariance`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSection {
    pub model: Option<PathBuf>,
    /// Point-list file.
    pub points_file: Option<PathBuf>,
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    Csv,
    Binary,
    Both,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub model: Option<PathBuf>,
    pub t_half: Option<f64>,
    pub points_per_axis: Option<usize>,
    pub method: Option<Method>,
    pub samples: Option<usize>,
    pub format: Option<FieldFormat>,
    pub synthesis: Option<SynthesisConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub model: Option<PathBuf>,
    pub t_half: Option<f64>,
    pub refinements: Option<Vec<usize>>,
    pub small: Option<Vec<Vec<f64>>>,
    pub large: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlrSection {
    pub model0: Option<PathBuf>,
    pub model1: Option<PathBuf>,
    pub t_half: Option<f64>,
    /// Points per axis of each nested grid.
    pub grids: Option<Vec<usize>>,
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormRatioSection {
    pub h0: Option<Vec<f64>>,
    pub h1: Option<Vec<f64>>,
    /// 0-based.
    pub axis: Option<usize>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub count: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads `path` and rebases every relative path in it onto the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = crate::read_text(path)?;
        let mut cfg = Self::from_json(&text).map_err(|e| CliError::json(path, &e))?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = dir.join(&*x);
                }
            }
        };
        fix(&mut self.output_dir);
        if let Some(c) = &mut self.check {
            fix(&mut c.model0);
            fix(&mut c.model1);
        }
        for s in [&mut self.variogram, &mut self.covariance].into_iter().flatten() {
            fix(&mut s.model);
            fix(&mut s.points_file);
        }
        if let Some(s) = &mut self.simulate {
            fix(&mut s.model);
        }
        if let Some(s) = &mut self.kernel {
            fix(&mut s.model);
        }
        if let Some(s) = &mut self.llr {
            fix(&mut s.model0);
            fix(&mut s.model1);
        }
    }
}
