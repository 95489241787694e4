pub mod error;
pub mod eval;
pub mod ingest;
pub mod signature;
pub mod svm;
pub mod tree_kernel;
pub mod tree_model;

pub use error::{Error, Result};
