//! MMD between the branch measures of two streaming trees, the tree kernel
//! `k_σ = exp(-σ² d²)`, and Gram matrices over datasets of trees.

mod cache;
mod gram;
mod mmd;

pub use cache::BlockCache;
pub use gram::{gram, min_eigenvalue, mmd_matrix, GramMatrix, MmdMatrix};
pub use mmd::{branch_kernel_block, mmd_from_blocks, mmd_squared, tree_kernel_sigma, Estimator, MmdConfig, TreePaths};

use sha2::{Digest, Sha256};

use crate::tree_model::StreamingTree;

/// Content address of a tree: SHA-256 of its JSON form.
pub fn content_id(tree: &StreamingTree) -> String {
    let json = serde_json::to_vec(tree).expect("trees always serialize");
    hex::encode(Sha256::digest(&json))
}
