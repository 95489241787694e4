mod common;

use common::random_tree;
use proptest::prelude::*;
use sktree::signature::{expected_sig_truncated, sig_inner_truncated, sig_kernel_pde, sig_truncated, BaseKernel, PdeGrid, TruncatedTensor};
use sktree::tree_model::PiecewiseLinearPath;

fn path(points: &[Vec<f64>]) -> PiecewiseLinearPath {
    PiecewiseLinearPath::from_points(points[0].len(), points).unwrap()
}

/// Levels 1..=3 of the iterated integrals by trapezoidal quadrature of
/// dS_k = S_{k-1} ⊗ dX over a fine subdivision of each segment.
fn quadrature_levels(points: &[Vec<f64>], steps: usize) -> [Vec<f64>; 3] {
    let d = points[0].len();
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d * d];
    let mut s3 = vec![0.0; d * d * d];
    for w in points.windows(2) {
        let dx: Vec<f64> = (0..d).map(|i| (w[1][i] - w[0][i]) / steps as f64).collect();
        for _ in 0..steps {
            let s1_old = s1.clone();
            let s2_old = s2.clone();
            for i in 0..d {
                s1[i] += dx[i];
            }
            for i in 0..d {
                for j in 0..d {
                    s2[i * d + j] += 0.5 * (s1_old[i] + s1[i]) * dx[j];
                }
            }
            for ij in 0..d * d {
                for k in 0..d {
                    s3[ij * d + k] += 0.5 * (s2_old[ij] + s2[ij]) * dx[k];
                }
            }
        }
    }
    [s1, s2, s3]
}

fn points_strategy(max_knots: usize, max_dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_dim, 2..=max_knots).prop_flat_map(|(d, n)| prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), n))
}

#[test]
fn iterated_integrals_match_quadrature() {
    let cases = [
        vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.3, -0.7], vec![0.9, 0.2]],
        vec![vec![0.2, -0.1, 0.4], vec![-0.5, 0.6, 0.1], vec![0.7, 0.7, -0.3]],
    ];
    for pts in cases {
        let sig = sig_truncated(&path(&pts), 3);
        let oracle = quadrature_levels(&pts, 4000);
        for k in 1..=3 {
            let err = sig.level(k).iter().zip(&oracle[k - 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "level {k}: {err}");
        }
    }
}

#[test]
fn straight_segment_levels_are_tensor_powers() {
    // level 2 of a single segment is v ⊗ v / 2, level 3 is v ⊗ v ⊗ v / 6
    let v = [0.3, -1.2];
    let sig = sig_truncated(&path(&[vec![0.0, 0.0], v.to_vec()]), 3);
    assert_eq!(sig.level(1), &v);
    for i in 0..2 {
        for j in 0..2 {
            assert!((sig.level(2)[i * 2 + j] - v[i] * v[j] / 2.0).abs() < 1e-15);
            for k in 0..2 {
                assert!((sig.level(3)[(i * 2 + j) * 2 + k] - v[i] * v[j] * v[k] / 6.0).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn pde_matches_series_for_unit_inner_product() {
    // straight paths with <a, b> = 1: the kernel is Σ 1/(k!)² = I₀(2)
    let x = path(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
    let y = path(&[vec![0.0, 0.0], vec![1.0, 3.0]]);
    let series: f64 = (0..30).scan(1.0, |f, k| {
        if k > 0 {
            *f *= k as f64;
        }
        Some(1.0 / (*f * *f))
    })
    .sum();
    assert!((series - 2.279_585_302_336_067).abs() < 1e-14);
    let k = sig_kernel_pde(&x, &y, &BaseKernel::Linear, &PdeGrid::new(4).unwrap()).unwrap();
    assert!(((k - series) / series).abs() < 1e-4, "{k}");
    let truncated = sig_inner_truncated(&sig_truncated(&x, 12), &sig_truncated(&y, 12)).unwrap();
    assert!((truncated - series).abs() < 1e-12);
}

#[test]
fn pde_symmetric_in_its_arguments() {
    let x = path(&[vec![0.0, 0.1], vec![0.5, 0.9], vec![1.0, -0.2]]);
    let y = path(&[vec![0.0, 0.0], vec![0.2, 0.4], vec![0.4, 0.1], vec![1.1, 0.3]]);
    let base = BaseKernel::rbf(0.7).unwrap();
    let grid = PdeGrid::new(2).unwrap();
    let a = sig_kernel_pde(&x, &y, &base, &grid).unwrap();
    let b = sig_kernel_pde(&y, &x, &base, &grid).unwrap();
    assert!((a - b).abs() < 1e-12 * a.abs());
}

#[test]
fn subdividing_a_segment_leaves_the_signature_unchanged() {
    let pts = vec![vec![0.0, 0.1], vec![0.5, 0.9], vec![1.0, -0.2]];
    let mut finer = pts.clone();
    finer.insert(1, vec![0.25, 0.5]);
    let a = sig_truncated(&path(&pts), 5);
    let b = sig_truncated(&path(&finer), 5);
    assert!(a.max_abs_diff(&b).unwrap() < 1e-13);

    // the PDE value changes only through discretisation
    let y = path(&[vec![0.0, 0.0], vec![0.4, 0.3], vec![0.8, -0.1]]);
    let grid = PdeGrid::new(4).unwrap();
    let ka = sig_kernel_pde(&path(&pts), &y, &BaseKernel::Linear, &grid).unwrap();
    let kb = sig_kernel_pde(&path(&finer), &y, &BaseKernel::Linear, &grid).unwrap();
    assert!(((ka - kb) / ka).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chen_identity(a in points_strategy(6, 3), tail in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 1..5)) {
        let d = a[0].len();
        let tail: Vec<Vec<f64>> = tail.into_iter().map(|p| p[..d].to_vec()).collect();
        let mut b = vec![a[a.len() - 1].clone()];
        b.extend(tail);
        let mut whole = a.clone();
        whole.extend(b[1..].iter().cloned());
        let lhs = sig_truncated(&path(&whole), 4);
        let rhs = sig_truncated(&path(&a), 4).chen_product(&sig_truncated(&path(&b), 4)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn pde_agrees_with_truncated_inner_product(x in points_strategy(6, 3), y in points_strategy(6, 3)) {
        let d = x[0].len().min(y[0].len());
        let x: Vec<Vec<f64>> = x.iter().map(|p| p[..d].iter().map(|v| v * 0.5).collect()).collect();
        let y: Vec<Vec<f64>> = y.iter().map(|p| p[..d].iter().map(|v| v * 0.5).collect()).collect();
        let (px, py) = (path(&x), path(&y));
        let pde = sig_kernel_pde(&px, &py, &BaseKernel::Linear, &PdeGrid::new(3).unwrap()).unwrap();
        let exact = sig_inner_truncated(&sig_truncated(&px, 10), &sig_truncated(&py, 10)).unwrap();
        prop_assert!(((pde - exact) / exact).abs() < 1e-3, "pde {} exact {}", pde, exact);
    }

    #[test]
    fn recursion_equals_branch_mean(seed in any::<u64>(), dim in 2usize..5) {
        let mut budget = 6;
        let tree = random_tree(dim, seed, 0.0, 3, &mut budget);
        prop_assert!(tree.branch_count() <= 6);
        let branches = tree.enumerate_branches();
        let mut mean = TruncatedTensor::zero(dim, 4);
        for b in &branches {
            mean.add_scaled(&sig_truncated(&b.interpolate(), 4), 1.0 / branches.len() as f64).unwrap();
        }
        prop_assert!(expected_sig_truncated(&tree, 4).max_abs_diff(&mean).unwrap() < 1e-10);
    }
}
