use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::auroc::{auroc, roc_curve, RocPoint};
use super::config::ExperimentConfig;
use super::folds::{derive_seed, stratified_folds};
use crate::error::{Error, Result};
use crate::ingest::LabeledDataset;
use crate::signature::{median_heuristic, BaseKernel};
use crate::svm::{train_kernel, TrainOptions};
use crate::tree_kernel::{mmd_matrix, BlockCache, MmdConfig};
use crate::tree_model::{PiecewiseLinearPath, StreamingTree};

const MEDIAN_SAMPLE: usize = 600;
const DIAGONAL_FLOOR: f64 = 1e-10;

/// Median pairwise distance between knots of the dataset's branch paths,
/// on an evenly strided sample of at most 600 knots.
pub fn dataset_median_bandwidth(trees: &[StreamingTree]) -> f64 {
    let paths: Vec<PiecewiseLinearPath> = trees.iter().flat_map(|t| t.enumerate_branches()).map(|b| b.interpolate()).collect();
    let all: Vec<&[f64]> = paths.iter().flat_map(|p| (0..p.num_knots()).map(move |i| p.knot(i))).collect();
    let stride = all.len().div_ceil(MEDIAN_SAMPLE).max(1);
    let sample: Vec<&[f64]> = all.into_iter().step_by(stride).collect();
    median_heuristic(&sample)
}

/// Records which dataset rows are read from a Gram matrix.
struct AuditedKernel<'a> {
    values: &'a DMatrix<f64>,
    touched: &'a Mutex<BTreeSet<usize>>,
}

impl AuditedKernel<'_> {
    fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let mut touched = self.touched.lock().expect("audit lock");
        touched.extend(rows.iter().copied());
        touched.extend(cols.iter().copied());
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.values[(rows[r], cols[c])])
    }
}

fn repair(mut k: DMatrix<f64>) -> DMatrix<f64> {
    let shift = (DIAGONAL_FLOOR - crate::tree_kernel::min_eigenvalue(&k)).max(0.0);
    for i in 0..k.nrows() {
        k[(i, i)] += shift;
    }
    k
}

fn gram_from_mmd(mmd: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    mmd.map(|d| (-sigma * sigma * d).exp())
}

fn pick(labels: &[u8], idx: &[usize]) -> Vec<u8> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn scores(k_test_train: &DMatrix<f64>, model: &crate::svm::SvmModel) -> Result<Vec<f64>> {
    k_test_train
        .row_iter()
        .map(|row| model.decision(row.iter().copied().collect::<Vec<_>>().as_slice()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChosenParams {
    pub sigma: f64,
    pub bandwidth: f64,
    pub c: f64,
    pub inner_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub test_positives: usize,
    pub inner_folds: usize,
    pub chosen: ChosenParams,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub fold: usize,
    /// Distinct rows read from any Gram matrix while choosing hyperparameters.
    pub selection_rows: usize,
    /// How many of those were test rows of this fold.
    pub selection_test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub count: usize,
    pub mean_branches: f64,
    pub mean_knots: f64,
    pub mean_events: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub trees: usize,
    pub dim: usize,
    pub classes: [ClassSummary; 2],
}

impl DatasetSummary {
    pub fn of(dataset: &LabeledDataset) -> Self {
        let class = |label: u8| {
            let idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == label).collect();
            let n = idx.len().max(1) as f64;
            ClassSummary {
                count: idx.len(),
                mean_branches: idx.iter().map(|&i| dataset.trees[i].branch_count() as f64).sum::<f64>() / n,
                mean_knots: idx.iter().map(|&i| dataset.trees[i].event_count() as f64).sum::<f64>() / n,
                mean_events: idx.iter().map(|&i| dataset.meta[i].n_events as f64).sum::<f64>() / n,
            }
        };
        Self {
            trees: dataset.len(),
            dim: dataset.trees.first().map_or(0, StreamingTree::dim),
            classes: [class(0), class(1)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Pairwise MMD matrix per bandwidth.
    pub mmd_seconds: Vec<f64>,
    pub selection_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold_auroc: Vec<f64>,
    pub mean_auroc: f64,
    /// Sample standard deviation over folds.
    pub std_auroc: f64,
    pub folds: Vec<FoldResult>,
    pub audit: Vec<FoldAudit>,
    pub fold_assignment: Vec<usize>,
    pub stratified: bool,
    pub median_bandwidth: f64,
    pub bandwidths: Vec<f64>,
    /// Test scores of every fold, pooled.
    pub roc: Vec<RocPoint>,
    pub dataset: DatasetSummary,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub timings: Timings,
}

impl EvalReport {
    /// JSON with wall-clock timings zeroed; equal for equal inputs and seed.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.timings = Timings {
            mmd_seconds: vec![0.0; r.timings.mmd_seconds.len()],
            ..Timings::default()
        };
        serde_json::to_string_pretty(&r).expect("report serialises")
    }
}

struct Cell {
    b: usize,
    s: usize,
    c: usize,
    score: f64,
}

/// Outer stratified k-fold evaluation with an inner grid search over
/// (σ, bandwidth, C) on each training split.
///
/// Pairwise MMD matrices are computed once per bandwidth over the whole
/// dataset; this step is label-free. All label-dependent work reads Gram
/// entries through an audit that must show no test rows before the refit.
pub fn cross_validate(dataset: &LabeledDataset, config: &ExperimentConfig, cache: Option<&BlockCache>) -> Result<EvalReport> {
    let started = Instant::now();
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    let [neg, pos] = dataset.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::SingleClass(format!("{pos} positive and {neg} negative trees")));
    }
    let labels = &dataset.labels;
    let n = dataset.len();
    let assignment = stratified_folds(labels, config.folds, config.seed)?;

    let median = dataset_median_bandwidth(&dataset.trees);
    let bandwidths: Vec<f64> = match &config.bandwidth_grid {
        Some(g) => g.clone(),
        None => config.bandwidth_scales.iter().map(|s| s * median).collect(),
    };
    let grid = config.grid()?;
    let mut mmd_seconds = Vec::new();
    let mut mmds = Vec::new();
    for &bw in &bandwidths {
        let t = Instant::now();
        let mmd_config = MmdConfig::new(BaseKernel::rbf(bw)?)
            .with_estimator(config.estimator)
            .with_clamp(config.clamp_negative)
            .with_grid(grid);
        mmds.push(mmd_matrix(&dataset.trees, &mmd_config, cache)?.values);
        mmd_seconds.push(t.elapsed().as_secs_f64());
        info!("bandwidth {bw:.4}: MMD matrix in {:.1}s", mmd_seconds.last().unwrap());
    }
    let grams: Vec<Vec<DMatrix<f64>>> = mmds
        .iter()
        .map(|d| config.sigma_grid.iter().map(|&s| gram_from_mmd(d, s)).collect())
        .collect();

    let select_started = Instant::now();
    let mut folds = Vec::new();
    let mut audit = Vec::new();
    let mut pooled_scores = vec![0.0; n];
    for fold in 0..config.folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
        let train_labels = pick(labels, &train);
        let [tn, tp] = [
            train_labels.iter().filter(|&&l| l == 0).count(),
            train_labels.iter().filter(|&&l| l == 1).count(),
        ];
        let inner_k = config.inner_folds.min(tn).min(tp);
        if inner_k < 2 {
            return Err(Error::Stratification(format!(
                "fold {fold}: training split has {tp} positive and {tn} negative trees, too few for inner folds"
            )));
        }
        let inner_assignment = stratified_folds(&train_labels, inner_k, derive_seed(config.seed, 1000 + fold as u64))?;

        let touched = Mutex::new(BTreeSet::new());
        let cells: Vec<(usize, usize)> = (0..bandwidths.len()).flat_map(|b| (0..config.sigma_grid.len()).map(move |s| (b, s))).collect();
        let scored: Vec<Vec<Cell>> = cells
            .par_iter()
            .map(|&(b, s)| {
                let kernel = AuditedKernel {
                    values: &grams[b][s],
                    touched: &touched,
                };
                let mut per_c = vec![0.0; config.c_grid.len()];
                for inner in 0..inner_k {
                    let fit: Vec<usize> = (0..train.len()).filter(|&i| inner_assignment[i] != inner).map(|i| train[i]).collect();
                    let val: Vec<usize> = (0..train.len()).filter(|&i| inner_assignment[i] == inner).map(|i| train[i]).collect();
                    let k_fit = repair(kernel.block(&fit, &fit));
                    let k_val = kernel.block(&val, &fit);
                    let fit_labels = pick(labels, &fit);
                    let val_labels = pick(labels, &val);
                    for (ci, &c) in config.c_grid.iter().enumerate() {
                        let opts = TrainOptions {
                            c,
                            tol: config.svm_tol,
                            ..TrainOptions::default()
                        };
                        let model = train_kernel(&k_fit, &fit_labels, &opts)?;
                        per_c[ci] += auroc(&scores(&k_val, &model)?, &val_labels)? / inner_k as f64;
                    }
                }
                Ok(per_c
                    .into_iter()
                    .enumerate()
                    .map(|(c, score)| Cell { b, s, c, score })
                    .collect())
            })
            .collect::<Result<_>>()?;
        let mut best: Option<&Cell> = None;
        for cell in scored.iter().flatten() {
            if best.is_none_or(|b| cell.score > b.score) {
                best = Some(cell);
            }
        }
        let best = best.expect("grids are nonempty");

        let touched = touched.into_inner().expect("audit lock");
        let test_set: BTreeSet<usize> = test.iter().copied().collect();
        audit.push(FoldAudit {
            fold,
            selection_rows: touched.len(),
            selection_test_rows: touched.intersection(&test_set).count(),
        });

        let k = &grams[best.b][best.s];
        let block = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| k[(rows[r], cols[c])]);
        let opts = TrainOptions {
            c: config.c_grid[best.c],
            tol: config.svm_tol,
            ..TrainOptions::default()
        };
        let model = train_kernel(&repair(block(&train, &train)), &train_labels, &opts)?;
        let test_scores = scores(&block(&test, &train), &model)?;
        let test_labels = pick(labels, &test);
        let fold_auroc = auroc(&test_scores, &test_labels)?;
        for (&i, &s) in test.iter().zip(&test_scores) {
            pooled_scores[i] = s;
        }
        let chosen = ChosenParams {
            sigma: config.sigma_grid[best.s],
            bandwidth: bandwidths[best.b],
            c: config.c_grid[best.c],
            inner_auroc: best.score,
        };
        info!("fold {fold}: AUROC {fold_auroc:.4} with {chosen:?}");
        folds.push(FoldResult {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            test_positives: test_labels.iter().filter(|&&l| l == 1).count(),
            inner_folds: inner_k,
            chosen,
            auroc: fold_auroc,
        });
    }

    let fold_auroc: Vec<f64> = folds.iter().map(|f| f.auroc).collect();
    let k = fold_auroc.len() as f64;
    let mean_auroc = fold_auroc.iter().sum::<f64>() / k;
    let std_auroc = (fold_auroc.iter().map(|a| (a - mean_auroc).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    Ok(EvalReport {
        fold_auroc,
        mean_auroc,
        std_auroc,
        folds,
        audit,
        fold_assignment: assignment,
        stratified: true,
        median_bandwidth: median,
        bandwidths,
        roc: roc_curve(&pooled_scores, labels)?,
        dataset: DatasetSummary::of(dataset),
        config: config.clone(),
        config_hash: config.hash(),
        timings: Timings {
            mmd_seconds,
            selection_seconds: select_started.elapsed().as_secs_f64(),
            total_seconds: started.elapsed().as_secs_f64(),
        },
    })
}
