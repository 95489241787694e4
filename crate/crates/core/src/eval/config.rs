use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signature::{PdeGrid, Scheme};
use crate::tree_kernel::Estimator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub inner_folds: usize,
    pub sigma_grid: Vec<f64>,
    /// Multipliers of the median-heuristic bandwidth.
    pub bandwidth_scales: Vec<f64>,
    /// Absolute bandwidths; replaces the scaled median when set.
    pub bandwidth_grid: Option<Vec<f64>>,
    #[serde(rename = "C_grid", alias = "c_grid")]
    pub c_grid: Vec<f64>,
    pub seed: u64,
    pub estimator: Estimator,
    pub clamp_negative: bool,
    pub refinement: u32,
    pub scheme: Scheme,
    pub svm_tol: f64,
    pub dataset: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            inner_folds: 3,
            sigma_grid: vec![0.01, 0.1, 1.0, 10.0],
            bandwidth_scales: vec![0.25, 1.0, 4.0],
            bandwidth_grid: None,
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            seed: 0,
            estimator: Estimator::default(),
            clamp_negative: true,
            refinement: PdeGrid::default().refinement(),
            scheme: Scheme::default(),
            svm_tol: 1e-3,
            dataset: None,
            cache_dir: None,
            report: None,
        }
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} is empty")));
    }
    if let Some(bad) = grid.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidParameter(format!("{name} has non-positive entry {bad}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.inner_folds < 2 {
            return Err(Error::InvalidParameter(format!("inner_folds must be at least 2, got {}", self.inner_folds)));
        }
        check_grid("sigma_grid", &self.sigma_grid)?;
        check_grid("C_grid", &self.c_grid)?;
        match &self.bandwidth_grid {
            Some(g) => check_grid("bandwidth_grid", g)?,
            None => check_grid("bandwidth_scales", &self.bandwidth_scales)?,
        }
        if !(self.svm_tol.is_finite() && self.svm_tol > 0.0) {
            return Err(Error::InvalidParameter("svm_tol must be positive".into()));
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<PdeGrid> {
        PdeGrid::with_scheme(self.refinement, self.scheme)
    }

    /// sha256 over everything that affects results; file locations excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.dataset = None;
        canonical.cache_dir = None;
        canonical.report = None;
        let json = serde_json::to_vec(&canonical).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }
}
