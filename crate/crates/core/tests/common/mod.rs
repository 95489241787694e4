#![allow(dead_code)]

use sktree::tree_model::{StreamingTree, TimeSeries};

/// Small LCG so trees are a pure function of the seed.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
        self.0 >> 11
    }

    /// Uniform in [-1, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

/// Tree of at most `depth` levels below the root and at most `budget`
/// leaves; node series hold 1..=3 knots spaced 0.25 apart in time.
pub fn random_tree(dim: usize, seed: u64, t0: f64, depth: usize, budget: &mut usize) -> StreamingTree {
    let mut rng = Lcg(seed);
    let len = 1 + (rng.next_u64() % 3) as usize;
    let points: Vec<(f64, Vec<f64>)> = (0..len).map(|i| (t0 + 0.25 * i as f64, (1..dim).map(|_| rng.unit()).collect())).collect();
    let series = TimeSeries::new(dim, points).unwrap();
    let wanted = if depth == 0 { 0 } else { (rng.next_u64() % 4) as usize };
    let mut children = Vec::new();
    for _ in 0..wanted {
        // every child after the first adds a leaf
        if !children.is_empty() {
            if *budget <= 1 {
                break;
            }
            *budget -= 1;
        }
        children.push(random_tree(dim, rng.next_u64(), t0 + 0.25 * len as f64, depth - 1, budget));
    }
    StreamingTree::new(series, children).unwrap()
}
