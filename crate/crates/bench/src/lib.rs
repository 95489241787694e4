//! Shared fixtures for the criterion benches.

use sktree::tree_model::{PiecewiseLinearPath, TimeSeries};

/// Deterministic wiggly path with `knots` knots in `dim` dimensions,
/// time included.
pub fn wiggle(knots: usize, dim: usize, phase: f64) -> PiecewiseLinearPath {
    let rows: Vec<Vec<f64>> = (0..knots)
        .map(|i| {
            let t = i as f64 / knots as f64;
            std::iter::once(t)
                .chain((1..dim).map(|c| (phase + 1.7 * c as f64 * t).sin() * 0.5))
                .collect()
        })
        .collect();
    PiecewiseLinearPath::from_series(&TimeSeries::from_rows(&rows).expect("valid rows"))
}
