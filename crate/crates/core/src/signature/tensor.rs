//! Truncated tensor algebra, path signatures and expected signatures.
//!
//! Level `k` of a [`TruncatedTensor`] over `R^d` is a dense row-major
//! buffer of `d^k` entries; multi-index `(a_1, ..., a_k)` lives at
//! `a_1 d^{k-1} + ... + a_k`.

use crate::error::{Error, Result};
use crate::tree_model::{PiecewiseLinearPath, StreamingTree};

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTensor {
    dim: usize,
    levels: Vec<Vec<f64>>,
}

impl TruncatedTensor {
    pub fn zero(dim: usize, depth: usize) -> Self {
        let levels = (0..=depth).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
        Self { dim, levels }
    }

    /// The multiplicative identity `(1, 0, 0, ...)`.
    pub fn unit(dim: usize, depth: usize) -> Self {
        let mut t = Self::zero(dim, depth);
        t.levels[0][0] = 1.0;
        t
    }

    pub fn from_levels(dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidParameter("a tensor needs at least level 0".into()));
        }
        for (k, level) in levels.iter().enumerate() {
            let expected = dim.pow(k as u32);
            if level.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: level.len(),
                });
            }
        }
        Ok(Self { dim, levels })
    }

    /// Signature of the straight segment with increment `v`:
    /// level `k` is `v^{⊗k} / k!`.
    pub fn segment(v: &[f64], depth: usize) -> Self {
        let dim = v.len();
        let mut levels = Vec::with_capacity(depth + 1);
        levels.push(vec![1.0]);
        for k in 1..=depth {
            let prev: &Vec<f64> = &levels[k - 1];
            let next = outer(prev, v, 1.0 / k as f64);
            levels.push(next);
        }
        Self { dim, levels }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        if self.depth() != other.depth() {
            return Err(Error::TruncationMismatch(self.depth(), other.depth()));
        }
        Ok(())
    }

    /// Graded product: level `k` of the result is `Σ_{i+j=k} a_i ⊗ b_j`.
    pub fn chen_product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = Self::zero(self.dim, self.depth());
        for k in 0..=self.depth() {
            let target = &mut out.levels[k];
            for i in 0..=k {
                let a = &self.levels[i];
                let b = &other.levels[k - i];
                for (ia, &x) in a.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let row = &mut target[ia * b.len()..(ia + 1) * b.len()];
                    for (r, &y) in row.iter_mut().zip(b) {
                        *r += x * y;
                    }
                }
            }
        }
        Ok(out)
    }

    /// In-place `self ⊗ exp(v)`, evaluated level by level with Horner's rule
    /// so the cost stays linear in the size of the top level.
    pub fn mul_segment(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        for k in (1..=self.depth()).rev() {
            let mut acc: Vec<f64> = v.iter().map(|x| self.levels[0][0] * x / k as f64).collect();
            for j in 1..k {
                for (a, b) in acc.iter_mut().zip(&self.levels[j]) {
                    *a += b;
                }
                acc = outer(&acc, v, 1.0 / (k - j) as f64);
            }
            for (a, b) in self.levels[k].iter_mut().zip(acc) {
                *a += b;
            }
        }
        Ok(())
    }

    /// `Σ_k <a_k, b_k>` with the Euclidean inner product on each level.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    /// Largest absolute entrywise difference on any level.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }
}

fn outer(a: &[f64], v: &[f64], scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * v.len());
    for &x in a {
        let xs = x * scale;
        out.extend(v.iter().map(|y| xs * y));
    }
    out
}

/// Levels `0..=depth` of the signature of a piecewise-linear path, exact up
/// to rounding: the product of its segment signatures.
pub fn sig_truncated(path: &PiecewiseLinearPath, depth: usize) -> TruncatedTensor {
    let mut sig = TruncatedTensor::unit(path.dim(), depth);
    for v in path.increments() {
        sig.mul_segment(&v).expect("increments share the path dimension");
    }
    sig
}

/// Truncated inner product of two signatures.
pub fn sig_inner_truncated(a: &TruncatedTensor, b: &TruncatedTensor) -> Result<f64> {
    a.inner(b)
}

/// Expected signature of the empirical measure on a tree's branches,
/// evaluated by recursion over the nodes.
///
/// A child's own path starts at its parent's last knot, so the segment
/// bridging parent and child is attributed to the child. Children are
/// weighted by their share of the node's leaves, which makes the recursion
/// equal the mean of the branch signatures; with equally sized subtrees
/// this is the plain average over children.
pub fn expected_sig_truncated(tree: &StreamingTree, depth: usize) -> TruncatedTensor {
    expected_node(tree, None, depth)
}

fn expected_node(node: &StreamingTree, prev: Option<Vec<f64>>, depth: usize) -> TruncatedTensor {
    let series = node.series();
    let mut knots: Vec<Vec<f64>> = Vec::with_capacity(series.len() + 1);
    knots.extend(prev);
    knots.extend((0..series.len()).map(|i| series.row(i)));
    let path = PiecewiseLinearPath::from_points(node.dim(), &knots).expect("validated tree");
    let own = sig_truncated(&path, depth);
    if node.is_leaf() {
        return own;
    }
    let last = series.row(series.len() - 1);
    let leaves = node.branch_count() as f64;
    let mut mean = TruncatedTensor::zero(node.dim(), depth);
    for child in node.children() {
        let e = expected_node(child, Some(last.clone()), depth);
        mean.add_scaled(&e, child.branch_count() as f64 / leaves).expect("same shape");
    }
    own.chen_product(&mean).expect("same shape")
}
