use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signature::{sig_kernel_pde, BaseKernel, PdeGrid};
use crate::tree_model::{PiecewiseLinearPath, StreamingTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Within-tree sums exclude the diagonal and divide by `m(m-1)`.
    #[default]
    Unbiased,
    /// Diagonals included, divided by `m²`.
    Biased,
    /// Diagonals included but divided by `m(m-1)`, as in the published
    /// Gram-matrix pseudocode. Kept for reproduction only.
    Algorithm1Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub estimator: Estimator,
    pub clamp_negative: bool,
    pub base: BaseKernel,
    pub grid: PdeGrid,
}

impl MmdConfig {
    pub fn new(base: BaseKernel) -> Self {
        Self {
            estimator: Estimator::Unbiased,
            clamp_negative: true,
            base,
            grid: PdeGrid::default(),
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_clamp(mut self, clamp_negative: bool) -> Self {
        self.clamp_negative = clamp_negative;
        self
    }

    pub fn with_grid(mut self, grid: PdeGrid) -> Self {
        self.grid = grid;
        self
    }

    /// Hash of everything the branch-kernel blocks depend on (base kernel
    /// and grid; not the estimator).
    pub fn block_hash(&self) -> String {
        let json = serde_json::to_vec(&(&self.base, &self.grid)).expect("serializable");
        hex::encode(Sha256::digest(&json))
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("serializable");
        hex::encode(Sha256::digest(&json))
    }
}

/// The interpolated branches of one tree, ready for kernel evaluation.
#[derive(Debug, Clone)]
pub struct TreePaths {
    pub paths: Vec<PiecewiseLinearPath>,
}

impl TreePaths {
    pub fn new(tree: &StreamingTree) -> Self {
        Self {
            paths: tree.enumerate_branches().iter().map(|b| b.interpolate()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

pub(crate) fn block(a: &TreePaths, b: &TreePaths, config: &MmdConfig, symmetric: bool) -> Result<DMatrix<f64>> {
    let (m, n) = (a.len(), b.len());
    let mut out = DMatrix::zeros(m, n);
    for p in 0..m {
        let start = if symmetric { p } else { 0 };
        for q in start..n {
            let k = sig_kernel_pde(&a.paths[p], &b.paths[q], &config.base, &config.grid)?;
            out[(p, q)] = k;
            if symmetric {
                out[(q, p)] = k;
            }
        }
    }
    Ok(out)
}

/// Signature kernels between every branch of `t1` and every branch of `t2`.
pub fn branch_kernel_block(t1: &StreamingTree, t2: &StreamingTree, config: &MmdConfig) -> Result<DMatrix<f64>> {
    let a = TreePaths::new(t1);
    if t1 == t2 {
        return block(&a, &a, config, true);
    }
    block(&a, &TreePaths::new(t2), config, false)
}

fn within_term(k: &DMatrix<f64>, estimator: Estimator) -> f64 {
    let m = k.nrows();
    let sum = k.sum();
    if m < 2 {
        if estimator != Estimator::Biased {
            debug!("single-branch tree: falling back to the biased within-tree term");
        }
        return sum;
    }
    let mf = m as f64;
    match estimator {
        Estimator::Biased => sum / (mf * mf),
        Estimator::Unbiased => (sum - k.trace()) / (mf * (mf - 1.0)),
        Estimator::Algorithm1Literal => sum / (mf * (mf - 1.0)),
    }
}

/// Squared MMD from the two within-tree blocks and the cross block.
pub fn mmd_from_blocks(k11: &DMatrix<f64>, k22: &DMatrix<f64>, k12: &DMatrix<f64>, config: &MmdConfig) -> Result<f64> {
    let (m, n) = (k11.nrows(), k22.nrows());
    if m == 0 || n == 0 || k11.ncols() != m || k22.ncols() != n || k12.shape() != (m, n) {
        return Err(Error::InvalidParameter("inconsistent kernel block shapes".into()));
    }
    let cross = 2.0 * k12.sum() / (m as f64 * n as f64);
    let d2 = within_term(k11, config.estimator) + within_term(k22, config.estimator) - cross;
    Ok(if config.clamp_negative { d2.max(0.0) } else { d2 })
}

pub fn mmd_squared(t1: &StreamingTree, t2: &StreamingTree, config: &MmdConfig) -> Result<f64> {
    let a = TreePaths::new(t1);
    let k11 = block(&a, &a, config, true)?;
    if t1 == t2 {
        return mmd_from_blocks(&k11, &k11, &k11, config);
    }
    let b = TreePaths::new(t2);
    let k22 = block(&b, &b, config, true)?;
    let k12 = block(&a, &b, config, false)?;
    mmd_from_blocks(&k11, &k22, &k12, config)
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")))
    }
}

/// `exp(-σ² d²_MMD(T1, T2))`
pub fn tree_kernel_sigma(t1: &StreamingTree, t2: &StreamingTree, sigma: f64, config: &MmdConfig) -> Result<f64> {
    check_sigma(sigma)?;
    Ok((-sigma * sigma * mmd_squared(t1, t2, config)?).exp())
}
