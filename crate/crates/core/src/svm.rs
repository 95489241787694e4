//! Soft-margin binary SVM over a precomputed kernel matrix.
//!
//! Training solves the dual
//!
//! ```text
//! min ½ αᵀQα − Σα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,   Q_ij = y_i y_j K_ij
//! ```
//!
//! with SMO: each step picks the maximal-violating `i` and the `j` that
//! maximises the second-order gain, then solves the two-variable
//! subproblem in closed form. Labels are `{0, 1}` at the API and `∓1`
//! internally.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree_kernel::{min_eigenvalue, GramMatrix};

const TAU: f64 = 1e-12;
/// Gram matrices with eigenvalues below this are rejected.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub support_indices: Vec<usize>,
    /// Training labels as ±1.
    pub labels: Vec<i8>,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub tree_ids: Vec<String>,
    #[serde(default)]
    pub iterations: usize,
}

/// Maps `{0, 1}` to `{-1, +1}`.
pub fn signed_labels(labels: &[u8]) -> Result<Vec<i8>> {
    labels
        .iter()
        .map(|&l| match l {
            0 => Ok(-1),
            1 => Ok(1),
            other => Err(Error::InvalidParameter(format!("labels must be 0 or 1, got {other}"))),
        })
        .collect()
}

/// Trains on a tree-kernel Gram matrix.
pub fn train(gram: &GramMatrix, labels: &[u8], c: f64, tol: f64) -> Result<SvmModel> {
    let opts = TrainOptions {
        c,
        tol,
        ..TrainOptions::default()
    };
    let mut model = train_kernel(&gram.values, labels, &opts)?;
    model.config_hash = Some(gram.config.hash());
    model.tree_ids = gram.tree_ids.clone();
    Ok(model)
}

/// Trains on any symmetric PSD kernel matrix.
pub fn train_kernel(k: &DMatrix<f64>, labels: &[u8], opts: &TrainOptions) -> Result<SvmModel> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::InvalidParameter("kernel matrix must be square".into()));
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(opts.c.is_finite() && opts.c > 0.0) || !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("C and tol must be positive (C={}, tol={})", opts.c, opts.tol)));
    }
    let y = signed_labels(labels)?;
    let lambda_min = min_eigenvalue(k);
    if lambda_min < -PSD_TOLERANCE {
        return Err(Error::NotPsd { min_eigenvalue: lambda_min });
    }

    let base = SvmModel {
        alphas: vec![0.0; n],
        bias: 0.0,
        support_indices: Vec::new(),
        labels: y.clone(),
        c: opts.c,
        config_hash: None,
        tree_ids: Vec::new(),
        iterations: 0,
    };
    if y.iter().all(|&v| v == y[0]) {
        // yᵀα = 0 pins every α to zero; the decision is the class itself.
        return Ok(SvmModel {
            bias: f64::from(y[0]),
            ..base
        });
    }

    let mut solver = Smo::new(k, &y, opts.c);
    let iterations = solver.solve(opts.tol, opts.max_iter)?;
    let bias = -solver.rho();
    let support_indices = (0..n).filter(|&i| solver.alpha[i] > 0.0).collect();
    Ok(SvmModel {
        alphas: solver.alpha,
        bias,
        support_indices,
        iterations,
        ..base
    })
}

struct Smo<'a> {
    k: &'a DMatrix<f64>,
    y: Vec<f64>,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(k: &'a DMatrix<f64>, y: &[i8], c: f64) -> Self {
        let n = y.len();
        Self {
            k,
            y: y.iter().map(|&v| f64::from(v)).collect(),
            c,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
        }
    }

    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.k[(i, j)]
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] > 0.0) || (self.y[t] < 0.0 && self.alpha[t] < self.c)
    }

    /// Returns the working pair, or `None` once the maximal violation is
    /// below `tol`.
    fn select(&self, tol: f64) -> Option<(usize, usize)> {
        let n = self.y.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if self.in_up(t) {
                let v = -self.y[t] * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            return None;
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut best = f64::INFINITY;
        let mut j = usize::MAX;
        for t in 0..n {
            if !self.in_low(t) {
                continue;
            }
            let yg = self.y[t] * self.grad[t];
            gmax2 = gmax2.max(yg);
            let b = gmax + yg;
            if b > 0.0 {
                let mut a = self.k[(i, i)] + self.k[(t, t)] - 2.0 * self.k[(i, t)];
                if a <= 0.0 {
                    a = TAU;
                }
                let gain = -(b * b) / a;
                if gain < best {
                    best = gain;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            None
        } else {
            Some((i, j))
        }
    }

    fn solve(&mut self, tol: f64, max_iter: usize) -> Result<usize> {
        for iter in 0..max_iter {
            let Some((i, j)) = self.select(tol) else {
                return Ok(iter);
            };
            let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
            let (qii, qjj, qij) = (self.q(i, i), self.q(j, j), self.q(i, j));
            let c = self.c;
            let (mut ai, mut aj) = (old_i, old_j);
            if self.y[i] != self.y[j] {
                let mut quad = qii + qjj + 2.0 * qij;
                if quad <= 0.0 {
                    quad = TAU;
                }
                let delta = (-self.grad[i] - self.grad[j]) / quad;
                let diff = ai - aj;
                ai += delta;
                aj += delta;
                if diff > 0.0 {
                    if aj < 0.0 {
                        aj = 0.0;
                        ai = diff;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = -diff;
                }
                if diff > 0.0 {
                    if ai > c {
                        ai = c;
                        aj = c - diff;
                    }
                } else if aj > c {
                    aj = c;
                    ai = c + diff;
                }
            } else {
                let mut quad = qii + qjj - 2.0 * qij;
                if quad <= 0.0 {
                    quad = TAU;
                }
                let delta = (self.grad[i] - self.grad[j]) / quad;
                let sum = ai + aj;
                ai -= delta;
                aj += delta;
                if sum > c {
                    if ai > c {
                        ai = c;
                        aj = sum - c;
                    }
                } else if aj < 0.0 {
                    aj = 0.0;
                    ai = sum;
                }
                if sum > c {
                    if aj > c {
                        aj = c;
                        ai = sum - c;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = sum;
                }
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
            let (di, dj) = (ai - old_i, aj - old_j);
            for t in 0..self.y.len() {
                self.grad[t] += self.q(t, i) * di + self.q(t, j) * dj;
            }
        }
        Err(Error::NotConverged(max_iter))
    }

    fn rho(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum) = (0usize, 0.0);
        for t in 0..self.y.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] >= self.c {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

impl SvmModel {
    /// Signed margin `b + Σ y_i α_i k(T, T_i)`.
    pub fn decision(&self, kernel_row: &[f64]) -> Result<f64> {
        if kernel_row.len() != self.alphas.len() {
            return Err(Error::LengthMismatch {
                expected: self.alphas.len(),
                actual: kernel_row.len(),
            });
        }
        Ok(self.bias
            + self
                .support_indices
                .iter()
                .map(|&i| f64::from(self.labels[i]) * self.alphas[i] * kernel_row[i])
                .sum::<f64>())
    }

    /// Class in `{0, 1}`; a zero margin maps to 1.
    pub fn predict(&self, kernel_row: &[f64]) -> Result<u8> {
        Ok(u8::from(self.decision(kernel_row)? >= 0.0))
    }

    /// `½ αᵀQα − Σα` on the training kernel.
    pub fn dual_objective(&self, k: &DMatrix<f64>) -> f64 {
        let n = self.alphas.len();
        let mut quad = 0.0;
        for i in 0..n {
            if self.alphas[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                quad += self.alphas[i] * self.alphas[j] * f64::from(self.labels[i] * self.labels[j]) * k[(i, j)];
            }
        }
        0.5 * quad - self.alphas.iter().sum::<f64>()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_closed_form() {
        for g in [0.0, 0.3, 0.9] {
            let k = DMatrix::from_row_slice(2, 2, &[1.0, g, g, 1.0]);
            let m = train_kernel(&k, &[0, 1], &TrainOptions { c: 1e6, tol: 1e-10, ..Default::default() }).unwrap();
            let expected = 1.0 / (1.0 - g);
            assert!((m.alphas[0] - expected).abs() < 1e-9, "{:?}", m.alphas);
            assert!((m.alphas[1] - expected).abs() < 1e-9);
            assert!(m.bias.abs() < 1e-9);
            // midway query
            assert!(m.decision(&[0.5, 0.5]).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn two_point_capped_at_c() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let m = train_kernel(&k, &[0, 1], &TrainOptions { c: 0.5, tol: 1e-10, ..Default::default() }).unwrap();
        assert_eq!(m.alphas, vec![0.5, 0.5]);
    }

    #[test]
    fn single_class_is_constant() {
        let k = DMatrix::identity(3, 3);
        let m = train_kernel(&k, &[1, 1, 1], &TrainOptions::default()).unwrap();
        assert!(m.support_indices.is_empty());
        assert_eq!(m.decision(&[0.2, 0.9, 0.1]).unwrap(), 1.0);
        let m0 = train_kernel(&k, &[0, 0, 0], &TrainOptions::default()).unwrap();
        assert_eq!(m0.predict(&[1.0, 0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn zero_alphas_decide_by_bias() {
        let m = SvmModel {
            alphas: vec![0.0; 3],
            bias: -0.25,
            support_indices: vec![],
            labels: vec![1, -1, 1],
            c: 1.0,
            config_hash: None,
            tree_ids: vec![],
            iterations: 0,
        };
        assert_eq!(m.decision(&[0.3, 0.1, 0.9]).unwrap(), -0.25);
        assert!(m.decision(&[0.3]).is_err());
    }

    #[test]
    fn rejects_indefinite_and_bad_labels() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(train_kernel(&k, &[0, 1], &TrainOptions::default()), Err(Error::NotPsd { .. })));
        assert!(train_kernel(&DMatrix::identity(2, 2), &[0, 2], &TrainOptions::default()).is_err());
        assert!(train_kernel(&DMatrix::identity(2, 2), &[0], &TrainOptions::default()).is_err());
    }

    #[test]
    fn json_fields() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let m = train_kernel(&k, &[1, 0], &TrainOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        for key in ["alphas", "bias", "support_indices", "labels", "C", "config_hash", "tree_ids"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: SvmModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
