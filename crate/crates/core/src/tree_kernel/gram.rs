use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::BlockCache;
use super::mmd::{block, check_sigma, mmd_from_blocks, MmdConfig, TreePaths};
use super::content_id;
use crate::error::{Error, Result};
use crate::tree_model::StreamingTree;

/// Pairwise squared MMD over a dataset. Independent of σ, so one matrix
/// serves every σ in a grid search.
#[derive(Debug, Clone)]
pub struct MmdMatrix {
    pub values: DMatrix<f64>,
    pub config: MmdConfig,
    pub tree_ids: Vec<String>,
}

fn cached_block(
    paths: &[TreePaths],
    ids: &[String],
    i: usize,
    j: usize,
    config: &MmdConfig,
    cache: Option<&BlockCache>,
) -> Result<DMatrix<f64>> {
    let hash = config.block_hash();
    if let Some(hit) = cache.and_then(|c| c.get(&ids[i], &ids[j], &hash)) {
        if hit.shape() == (paths[i].len(), paths[j].len()) {
            return Ok(hit);
        }
    }
    let b = block(&paths[i], &paths[j], config, i == j)?;
    if let Some(c) = cache {
        c.put(&ids[i], &ids[j], &hash, &b)?;
    }
    Ok(b)
}

/// Evaluates every within-tree block once and every cross block once per
/// unordered pair, optionally through a disk cache.
pub fn mmd_matrix(trees: &[StreamingTree], config: &MmdConfig, cache: Option<&BlockCache>) -> Result<MmdMatrix> {
    let ids: Vec<String> = trees.iter().map(content_id).collect();
    let paths: Vec<TreePaths> = trees.iter().map(TreePaths::new).collect();
    if let Some(i) = paths.iter().position(TreePaths::is_empty) {
        return Err(Error::InvalidTree(format!("tree {i} has no branches")));
    }
    let m = trees.len();
    let own: Vec<DMatrix<f64>> = (0..m)
        .into_par_iter()
        .map(|i| cached_block(&paths, &ids, i, i, config, cache))
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    info!("evaluating {} tree pairs", pairs.len());
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                mmd_from_blocks(&own[i], &own[i], &own[i], config)
            } else {
                let cross = cached_block(&paths, &ids, i, j, config, cache)?;
                mmd_from_blocks(&own[i], &own[j], &cross, config)
            }
        })
        .collect::<Result<_>>()?;

    let mut values = DMatrix::zeros(m, m);
    for (&(i, j), &d2) in pairs.iter().zip(&entries) {
        values[(i, j)] = d2;
        values[(j, i)] = d2;
    }
    Ok(MmdMatrix {
        values,
        config: *config,
        tree_ids: ids,
    })
}

/// Matrix of tree-kernel values `exp(-σ² d²)`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub sigma: f64,
    pub config: MmdConfig,
    /// Diagonal shift applied to make the matrix positive semidefinite.
    pub psd_shift: f64,
    pub tree_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    sigma: f64,
    config: MmdConfig,
    config_hash: String,
    psd_shift: f64,
    tree_ids: Vec<String>,
}

impl GramMatrix {
    pub fn from_mmd(mmd: &MmdMatrix, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        let s2 = sigma * sigma;
        Ok(Self {
            values: mmd.values.map(|d2| (-s2 * d2).exp()),
            sigma,
            config: mmd.config,
            psd_shift: 0.0,
            tree_ids: mmd.tree_ids.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.values)
    }

    /// Adds `max(0, 1e-10 - λ_min)` to the diagonal.
    pub fn psd_repaired(&self) -> Self {
        let shift = psd_shift_for(&self.values);
        let mut out = self.clone();
        for i in 0..out.len() {
            out.values[(i, i)] += shift;
        }
        out.psd_shift += shift;
        out
    }

    fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes the matrix as CSV and a JSON sidecar next to it.
    pub fn save(&self, csv: impl AsRef<Path>) -> Result<()> {
        let csv = csv.as_ref();
        let mut text = String::new();
        for row in self.values.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        fs::write(csv, text)?;
        let sidecar = Sidecar {
            sigma: self.sigma,
            config: self.config,
            config_hash: self.config.hash(),
            psd_shift: self.psd_shift,
            tree_ids: self.tree_ids.clone(),
        };
        fs::write(Self::sidecar_path(csv), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(csv: impl AsRef<Path>) -> Result<Self> {
        let csv = csv.as_ref();
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(Self::sidecar_path(csv))?)?;
        let text = fs::read_to_string(csv)?;
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad gram cell {c:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if n != sidecar.tree_ids.len() || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Format(format!("gram matrix is not {0}x{0}", sidecar.tree_ids.len())));
        }
        Ok(Self {
            values: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
            sigma: sidecar.sigma,
            config: sidecar.config,
            psd_shift: sidecar.psd_shift,
            tree_ids: sidecar.tree_ids,
        })
    }
}

/// Gram matrix of `k_σ` over `trees`, no caching.
pub fn gram(trees: &[StreamingTree], sigma: f64, config: &MmdConfig) -> Result<GramMatrix> {
    check_sigma(sigma)?;
    GramMatrix::from_mmd(&mmd_matrix(trees, config, None)?, sigma)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn psd_shift_for(m: &DMatrix<f64>) -> f64 {
    (1e-10 - min_eigenvalue(m)).max(0.0)
}
