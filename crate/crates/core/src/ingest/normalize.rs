use crate::error::Result;
use crate::tree_model::StreamingTree;

const DEGENERATE_SD: f64 = 1e-12;

/// Standardises every non-time channel with statistics pooled over the
/// knots of all branches (shared prefixes count once per branch) and maps
/// time affinely from `window` onto `[0, 1]`. Channels whose standard
/// deviation is below 1e-12 become identically zero.
pub fn normalize_tree(tree: &StreamingTree, window: (f64, f64)) -> Result<StreamingTree> {
    let width = tree.dim() - 1;
    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    let mut count = 0usize;
    for branch in tree.enumerate_branches() {
        for (_, v) in branch.series.iter() {
            for c in 0..width {
                sum[c] += v[c];
            }
            count += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    for branch in tree.enumerate_branches() {
        for (_, v) in branch.series.iter() {
            for c in 0..width {
                let d = v[c] - mean[c];
                sum_sq[c] += d * d;
            }
        }
    }
    let sd: Vec<f64> = sum_sq.iter().map(|s| (s / count as f64).sqrt()).collect();

    let (start, end) = window;
    let span = end - start;
    tree.map_series(&mut |series| {
        series.map_points(|t, v| {
            let scaled = v
                .iter()
                .enumerate()
                .map(|(c, x)| if sd[c] < DEGENERATE_SD { 0.0 } else { (x - mean[c]) / sd[c] })
                .collect();
            ((t - start) / span, scaled)
        })
    })
}
