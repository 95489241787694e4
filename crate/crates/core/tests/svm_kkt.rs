mod common;

use common::Lcg;
use nalgebra::DMatrix;
use sktree::svm::{train_kernel, SvmModel, TrainOptions};

/// Gaussian kernel on uniform points plus labels holding both classes.
fn instance(rng: &mut Lcg, n: usize, dim: usize) -> (DMatrix<f64>, Vec<u8>) {
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.unit()).collect()).collect();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let d2: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
        (-d2).exp()
    });
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(x[i][0] + 0.3 * rng.unit() > 0.0)).collect();
    labels[0] = 0;
    labels[1] = 1;
    (k, labels)
}

/// Largest violation of the dual KKT conditions.
fn kkt_violation(model: &SvmModel, k: &DMatrix<f64>) -> f64 {
    let n = model.alphas.len();
    let mut worst: f64 = 0.0;
    let balance: f64 = (0..n).map(|i| model.alphas[i] * f64::from(model.labels[i])).sum();
    worst = worst.max(balance.abs());
    for i in 0..n {
        let a = model.alphas[i];
        worst = worst.max(-a).max(a - model.c);
        let row: Vec<f64> = k.row(i).iter().copied().collect();
        let margin = f64::from(model.labels[i]) * model.decision(&row).unwrap();
        let v = if a <= 0.0 {
            1.0 - margin
        } else if a >= model.c {
            margin - 1.0
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[test]
fn kkt_conditions_hold_at_tolerance() {
    let mut rng = Lcg(7);
    for case in 0..40 {
        let n = 6 + case % 25;
        let (k, labels) = instance(&mut rng, n, 1 + case % 4);
        for c in [0.1, 1.0, 10.0, 100.0] {
            let model = train_kernel(&k, &labels, &TrainOptions { c, tol: 1e-3, ..Default::default() }).unwrap();
            let v = kkt_violation(&model, &k);
            assert!(v <= 1e-3, "case {case} C={c}: violation {v}");
        }
    }
}

#[test]
fn tighter_tolerance_lowers_the_objective() {
    let mut rng = Lcg(11);
    let (k, labels) = instance(&mut rng, 30, 2);
    let loose = train_kernel(&k, &labels, &TrainOptions { c: 10.0, tol: 1e-1, ..Default::default() }).unwrap();
    let tight = train_kernel(&k, &labels, &TrainOptions { c: 10.0, tol: 1e-8, ..Default::default() }).unwrap();
    assert!(tight.dual_objective(&k) <= loose.dual_objective(&k) + 1e-12);
    assert!(kkt_violation(&tight, &k) < 1e-7);
}
