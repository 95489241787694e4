//! Signature machinery: static base kernels, the PDE signature-kernel
//! solver, and the truncated tensor algebra used as its oracle.

mod base;
mod pde;
mod tensor;

pub use base::{median_heuristic, BaseKernel};
pub use pde::{sig_kernel_pde, PdeGrid, Scheme, MAX_REFINEMENT};
pub use tensor::{expected_sig_truncated, sig_inner_truncated, sig_truncated, TruncatedTensor};
