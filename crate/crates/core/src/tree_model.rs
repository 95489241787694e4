//! Time series, streaming trees and their branch representation.
//!
//! A [`StreamingTree`] is a node carrying a [`TimeSeries`] plus an ordered
//! list of child trees whose histories continue after the parent's last
//! sample. Equivalently it is the ordered list of its root-to-leaf
//! [`Branch`]es, each a single time series starting at the root's first
//! timestamp. Kernels only ever see branches, interpolated into
//! [`PiecewiseLinearPath`]s with time as coordinate 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamped samples `(t_i, x_i)` with `t_0 < t_1 < ... < t_n` and every
/// `x_i` of length `dim - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl TimeSeries {
    /// `dim` counts the time coordinate, so every value vector has `dim - 1`
    /// entries.
    pub fn new(dim: usize, points: impl IntoIterator<Item = (f64, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSeries("dimension must be positive".into()));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (t, v) in points {
            if v.len() != dim - 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim - 1,
                    actual: v.len(),
                });
            }
            times.push(t);
            values.extend(v);
        }
        Self::from_parts(dim, times, values)
    }

    /// Rows of the form `[t, v_1, ..., v_{d-1}]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidSeries("at least one point is required".into()))?;
        Self::new(dim, rows.iter().map(|r| (r.first().copied().unwrap_or(f64::NAN), r.get(1..).unwrap_or(&[]).to_vec())))
    }

    fn from_parts(dim: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidSeries("at least one point is required".into()));
        }
        if let Some(bad) = times.iter().chain(&values).find(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite entry {bad}")));
        }
        if let Some(w) = times.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries(format!(
                "timestamps not strictly increasing at index {}: {} >= {}",
                w + 1,
                times[w],
                times[w + 1]
            )));
        }
        Ok(Self { times, values, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        let w = self.dim - 1;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn first_time(&self) -> f64 {
        self.times[0]
    }

    pub fn last_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        (0..self.len()).map(move |i| (self.times[i], self.value(i)))
    }

    /// Row `i` as `[t, v...]`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.dim);
        row.push(self.times[i]);
        row.extend_from_slice(self.value(i));
        row
    }

    /// Appends `other` after `self`; `other` must start strictly later.
    pub fn concat(&self, other: &TimeSeries) -> Result<TimeSeries> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut times = self.times.clone();
        times.extend_from_slice(&other.times);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::from_parts(self.dim, times, values)
    }

    /// Applies `f(t, values)` to every point, keeping dimension.
    pub fn map_points(&self, mut f: impl FnMut(f64, &[f64]) -> (f64, Vec<f64>)) -> Result<TimeSeries> {
        TimeSeries::new(self.dim, self.iter().map(|(t, v)| f(t, v)))
    }

    fn knot_eq(&self, i: usize, other: &TimeSeries, j: usize) -> bool {
        self.times[i] == other.times[j] && self.value(i) == other.value(j)
    }

    fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        let w = self.dim - 1;
        TimeSeries {
            times: self.times[range.clone()].to_vec(),
            values: self.values[range.start * w..range.end * w].to_vec(),
            dim: self.dim,
        }
    }
}

/// A node's own series plus its ordered children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub struct StreamingTree {
    series: TimeSeries,
    children: Vec<StreamingTree>,
}

impl StreamingTree {
    pub fn new(series: TimeSeries, children: Vec<StreamingTree>) -> Result<Self> {
        for (k, child) in children.iter().enumerate() {
            if child.dim() != series.dim() {
                return Err(Error::InvalidTree(format!(
                    "child {k} has dimension {} but parent has {}",
                    child.dim(),
                    series.dim()
                )));
            }
            if child.series.first_time() <= series.last_time() {
                return Err(Error::InvalidTree(format!(
                    "child {k} starts at {} which is not after the parent's last time {}",
                    child.series.first_time(),
                    series.last_time()
                )));
            }
        }
        Ok(Self { series, children })
    }

    pub fn leaf(series: TimeSeries) -> Self {
        Self {
            series,
            children: Vec::new(),
        }
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    pub fn children(&self) -> &[StreamingTree] {
        &self.children
    }

    pub fn dim(&self) -> usize {
        self.series.dim()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of leaves.
    pub fn branch_count(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(StreamingTree::branch_count).sum()
        }
    }

    /// Number of points over all nodes.
    pub fn event_count(&self) -> usize {
        self.series.len() + self.children.iter().map(StreamingTree::event_count).sum::<usize>()
    }

    /// Root-to-leaf concatenations in depth-first child order.
    pub fn enumerate_branches(&self) -> Vec<Branch> {
        let mut out = Vec::with_capacity(self.branch_count());
        self.collect_branches(None, &mut out);
        out
    }

    fn collect_branches(&self, prefix: Option<&TimeSeries>, out: &mut Vec<Branch>) {
        let here = match prefix {
            None => self.series.clone(),
            // Validated at construction: children start after the parent ends.
            Some(p) => p.concat(&self.series).expect("tree invariants"),
        };
        if self.children.is_empty() {
            out.push(Branch { series: here });
        } else {
            for child in &self.children {
                child.collect_branches(Some(&here), out);
            }
        }
    }

    /// Applies `f` to every node's series, preserving shape.
    pub fn map_series(&self, f: &mut impl FnMut(&TimeSeries) -> Result<TimeSeries>) -> Result<StreamingTree> {
        let series = f(&self.series)?;
        let children = self
            .children
            .iter()
            .map(|c| c.map_series(f))
            .collect::<Result<Vec<_>>>()?;
        StreamingTree::new(series, children)
    }

    /// Rebuilds a tree from its branches by merging longest common knot
    /// prefixes. Consecutive branches that share a first knot become one
    /// subtree, so `from_branches(t.enumerate_branches())` reproduces the
    /// branch list of `t`.
    pub fn from_branches(branches: &[Branch]) -> Result<StreamingTree> {
        if branches.is_empty() {
            return Err(Error::InvalidTree("no branches".into()));
        }
        let first = &branches[0].series;
        if branches.iter().any(|b| !b.series.knot_eq(0, first, 0)) {
            return Err(Error::InvalidTree("branches do not share a root knot".into()));
        }
        let seqs: Vec<&TimeSeries> = branches.iter().map(|b| &b.series).collect();
        let offsets = vec![0; seqs.len()];
        merge_prefixes(&seqs, &offsets)
    }
}

// Each `seqs[k][offsets[k]..]` is a non-empty suffix; all of them start with
// the same knot.
fn merge_prefixes(seqs: &[&TimeSeries], offsets: &[usize]) -> Result<StreamingTree> {
    let rest = |k: usize| seqs[k].len() - offsets[k];
    if seqs.len() == 1 {
        return Ok(StreamingTree::leaf(seqs[0].slice(offsets[0]..seqs[0].len())));
    }
    let min_len = (0..seqs.len()).map(rest).min().unwrap_or(0);
    let mut common = 0;
    'outer: while common < min_len {
        for k in 1..seqs.len() {
            if !seqs[k].knot_eq(offsets[k] + common, seqs[0], offsets[0] + common) {
                break 'outer;
            }
        }
        common += 1;
    }
    // Each child needs at least one knot of its own.
    let shared = common.min(min_len - 1);
    if shared == 0 {
        return Err(Error::InvalidTree("a branch ends where a sibling continues".into()));
    }
    let root = seqs[0].slice(offsets[0]..offsets[0] + shared);
    let next: Vec<usize> = offsets.iter().map(|o| o + shared).collect();

    let mut children = Vec::new();
    let mut start = 0;
    for k in 1..=seqs.len() {
        let split = k == seqs.len()
            || rest(k) - shared == 1
            || rest(k - 1) - shared == 1
            || !seqs[k].knot_eq(next[k], seqs[k - 1], next[k - 1]);
        if split {
            children.push(merge_prefixes(&seqs[start..k], &next[start..k])?);
            start = k;
        }
    }
    StreamingTree::new(root, children)
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    series: Vec<Vec<f64>>,
    #[serde(default)]
    children: Vec<RawTree>,
}

impl TryFrom<RawTree> for StreamingTree {
    type Error = Error;

    fn try_from(raw: RawTree) -> Result<Self> {
        let series = TimeSeries::from_rows(&raw.series)?;
        let children = raw
            .children
            .into_iter()
            .map(StreamingTree::try_from)
            .collect::<Result<Vec<_>>>()?;
        StreamingTree::new(series, children)
    }
}

impl From<StreamingTree> for RawTree {
    fn from(tree: StreamingTree) -> Self {
        RawTree {
            series: (0..tree.series.len()).map(|i| tree.series.row(i)).collect(),
            children: tree.children.into_iter().map(RawTree::from).collect(),
        }
    }
}

/// The concatenated root-to-leaf history of one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub series: TimeSeries,
}

impl Branch {
    pub fn interpolate(&self) -> PiecewiseLinearPath {
        PiecewiseLinearPath::from_series(&self.series)
    }
}

/// Continuous piecewise-linear interpolation through a list of knots.
///
/// Knots are stored row-major; `params` are the parameter values at which
/// the path passes through each knot. For a branch, `params` are the
/// timestamps and coordinate 0 of every knot is the timestamp itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath {
    params: Vec<f64>,
    points: Vec<f64>,
    dim: usize,
}

impl PiecewiseLinearPath {
    pub fn from_series(series: &TimeSeries) -> Self {
        let dim = series.dim();
        let mut points = Vec::with_capacity(series.len() * dim);
        for (t, v) in series.iter() {
            points.push(t);
            points.extend_from_slice(v);
        }
        Self {
            params: series.times().to_vec(),
            points,
            dim,
        }
    }

    /// Knots given directly as points in `R^dim`, parametrised by index.
    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 || points.is_empty() {
            return Err(Error::InvalidParameter("a path needs a positive dimension and at least one knot".into()));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite knot coordinate".into()));
            }
            flat.extend_from_slice(p);
        }
        Ok(Self {
            params: (0..points.len()).map(|i| i as f64).collect(),
            points: flat,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_knots(&self) -> usize {
        self.params.len()
    }

    pub fn knot(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.params[0], self.params[self.params.len() - 1])
    }

    /// Drops coordinate 0 (time, for branch paths) while keeping the
    /// parametrisation.
    pub fn without_time(&self) -> Result<Self> {
        if self.dim < 2 {
            return Err(Error::InvalidParameter("path has no coordinates besides time".into()));
        }
        let dim = self.dim - 1;
        let points = self.points.chunks(self.dim).flat_map(|k| k[1..].iter().copied()).collect();
        Ok(Self {
            params: self.params.clone(),
            points,
            dim,
        })
    }

    /// Point at parameter `s`; values outside the domain clamp to the ends.
    pub fn eval(&self, s: f64) -> Vec<f64> {
        let n = self.params.len();
        if n == 1 || s <= self.params[0] {
            return self.knot(0).to_vec();
        }
        if s >= self.params[n - 1] {
            return self.knot(n - 1).to_vec();
        }
        let i = self.params.partition_point(|&p| p <= s) - 1;
        let (a, b) = (self.params[i], self.params[i + 1]);
        let w = (s - a) / (b - a);
        self.knot(i)
            .iter()
            .zip(self.knot(i + 1))
            .map(|(x, y)| x + w * (y - x))
            .collect()
    }

    /// Knot sequence with every interval split into `2^refinement` equal
    /// pieces, as a flat row-major buffer.
    pub fn refined_knots(&self, refinement: u32) -> Vec<f64> {
        let pieces = 1usize << refinement;
        let n = self.num_knots();
        let mut out = Vec::with_capacity(((n - 1) * pieces + 1) * self.dim);
        for i in 0..n.saturating_sub(1) {
            let (a, b) = (self.knot(i), self.knot(i + 1));
            for p in 0..pieces {
                let w = p as f64 / pieces as f64;
                out.extend(a.iter().zip(b).map(|(x, y)| x + w * (y - x)));
            }
        }
        out.extend_from_slice(self.knot(n - 1));
        out
    }

    /// Knot increments `x_{i+1} - x_i`.
    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (1..self.num_knots()).map(move |i| self.knot(i).iter().zip(self.knot(i - 1)).map(|(b, a)| b - a).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(f64, &[f64])]) -> TimeSeries {
        let dim = points[0].1.len() + 1;
        TimeSeries::new(dim, points.iter().map(|(t, v)| (*t, v.to_vec()))).unwrap()
    }

    fn example_one() -> StreamingTree {
        let root = series(&[(0.0, &[0.0]), (1.0, &[1.0]), (2.0, &[1.5])]);
        let a = series(&[(3.0, &[2.0]), (4.0, &[3.0])]);
        let b = series(&[(3.0, &[-1.0]), (4.0, &[-2.0]), (5.0, &[0.0])]);
        StreamingTree::new(root, vec![StreamingTree::leaf(a), StreamingTree::leaf(b)]).unwrap()
    }

    #[test]
    fn rejects_unordered_or_ragged_series() {
        assert!(TimeSeries::new(2, vec![(1.0, vec![0.0]), (1.0, vec![1.0])]).is_err());
        assert!(TimeSeries::new(2, vec![(0.0, vec![0.0]), (1.0, vec![1.0, 2.0])]).is_err());
        assert!(TimeSeries::new(2, Vec::new()).is_err());
        assert!(TimeSeries::new(2, vec![(0.0, vec![f64::NAN])]).is_err());
    }

    #[test]
    fn rejects_child_overlapping_parent() {
        let root = series(&[(0.0, &[0.0]), (2.0, &[1.0])]);
        let child = series(&[(2.0, &[1.0])]);
        assert!(StreamingTree::new(root.clone(), vec![StreamingTree::leaf(child)]).is_err());
        let other_dim = series(&[(3.0, &[1.0, 2.0])]);
        assert!(StreamingTree::new(root, vec![StreamingTree::leaf(other_dim)]).is_err());
    }

    #[test]
    fn example_one_has_two_branches() {
        let tree = example_one();
        let branches = tree.enumerate_branches();
        assert_eq!(branches.len(), 2);
        assert_eq!(tree.branch_count(), 2);
        assert_eq!(branches[0].series.len(), 3 + 2);
        assert_eq!(branches[1].series.len(), 3 + 3);
        assert_eq!(branches[0].series.times(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(branches[1].series.value(3), &[-1.0]);
        assert_eq!(branches[0].series.first_time(), tree.series().first_time());
    }

    #[test]
    fn leaf_yields_its_own_series() {
        let s = series(&[(0.0, &[1.0]), (1.0, &[2.0]), (2.0, &[3.0]), (3.0, &[4.0]), (4.0, &[5.0])]);
        let tree = StreamingTree::leaf(s.clone());
        assert_eq!(tree.enumerate_branches(), vec![Branch { series: s }]);
        assert_eq!(tree.event_count(), 5);
    }

    #[test]
    fn chain_of_single_points() {
        let c = StreamingTree::leaf(series(&[(2.0, &[3.0])]));
        let b = StreamingTree::new(series(&[(1.0, &[2.0])]), vec![c]).unwrap();
        let a = StreamingTree::new(series(&[(0.0, &[1.0])]), vec![b]).unwrap();
        let branches = a.enumerate_branches();
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].series.times(), &[0.0, 1.0, 2.0]);
        assert_eq!(a.branch_count(), 1);
        assert_eq!(a.event_count(), 3);
    }

    #[test]
    fn interpolation_is_affine_and_exact_at_knots() {
        let p = Branch { series: series(&[(0.0, &[1.0]), (1.0, &[3.0])]) }.interpolate();
        assert_eq!(p.eval(0.5), vec![0.5, 2.0]);
        assert_eq!(p.eval(0.0), vec![0.0, 1.0]);
        let q = Branch { series: series(&[(0.0, &[0.0]), (1.0, &[1.0]), (3.0, &[0.0])]) }.interpolate();
        assert_eq!(q.eval(2.0), vec![2.0, 0.5]);
        assert_eq!(q.eval(1.0), vec![1.0, 1.0]);
        assert_eq!(q.domain(), (0.0, 3.0));
    }

    #[test]
    fn refinement_subdivides_intervals() {
        let p = PiecewiseLinearPath::from_points(1, &[vec![0.0], vec![4.0], vec![0.0]]).unwrap();
        assert_eq!(p.refined_knots(0), vec![0.0, 4.0, 0.0]);
        assert_eq!(p.refined_knots(2), vec![0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn json_round_trip() {
        let tree = example_one();
        let json = serde_json::to_string(&tree).unwrap();
        assert!(json.starts_with("{\"series\":[[0.0,0.0],[1.0,1.0]"));
        let back: StreamingTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);
        let bad = r#"{"series": [[1.0, 0.0]], "children": [{"series": [[0.5, 1.0]], "children": []}]}"#;
        assert!(serde_json::from_str::<StreamingTree>(bad).is_err());
    }

    #[test]
    fn rebuild_with_duplicate_leaves() {
        let root = series(&[(0.0, &[0.0])]);
        let leaf = StreamingTree::leaf(series(&[(1.0, &[1.0])]));
        let tree = StreamingTree::new(root, vec![leaf.clone(), leaf]).unwrap();
        let branches = tree.enumerate_branches();
        let rebuilt = StreamingTree::from_branches(&branches).unwrap();
        assert_eq!(rebuilt.enumerate_branches(), branches);
    }
}
