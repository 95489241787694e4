//! Finite-difference solver for the signature-kernel Goursat problem
//!
//! ```text
//! d²U/ds dt = d²κ(X(s), Y(t))/ds dt · U,   U(0, ·) = U(·, 0) = 1
//! ```
//!
//! on the grid of knot parameters of both paths, each knot interval split
//! dyadically. The kernel value is `U` at the terminal corner.

use serde::{Deserialize, Serialize};

use super::BaseKernel;
use crate::error::{Error, Result};
use crate::tree_model::PiecewiseLinearPath;

pub const MAX_REFINEMENT: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `U' = U_l + U_u - U_d + Δ U_d`
    FirstOrder,
    /// `U' = (U_l + U_u)(1 + Δ/2 + Δ²/12) - U_d (1 - Δ²/12)`
    #[default]
    SecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdeGrid {
    refinement: u32,
    #[serde(default)]
    scheme: Scheme,
}

impl Default for PdeGrid {
    fn default() -> Self {
        Self {
            refinement: 2,
            scheme: Scheme::SecondOrder,
        }
    }
}

impl PdeGrid {
    pub fn new(refinement: u32) -> Result<Self> {
        Self::with_scheme(refinement, Scheme::SecondOrder)
    }

    pub fn with_scheme(refinement: u32, scheme: Scheme) -> Result<Self> {
        if refinement > MAX_REFINEMENT {
            return Err(Error::InvalidParameter(format!(
                "grid refinement {refinement} exceeds the maximum of {MAX_REFINEMENT}"
            )));
        }
        Ok(Self { refinement, scheme })
    }

    pub fn refinement(&self) -> u32 {
        self.refinement
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
}

/// Signature kernel of two piecewise-linear paths of equal dimension.
pub fn sig_kernel_pde(x: &PiecewiseLinearPath, y: &PiecewiseLinearPath, base: &BaseKernel, grid: &PdeGrid) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    let dim = x.dim();
    let pieces = 1usize << grid.refinement;
    let xs = x.refined_knots(grid.refinement);
    let ys = y.refined_knots(grid.refinement);
    let (nx, ny) = (xs.len() / dim, ys.len() / dim);

    let kernel_row = |i: usize, row: &mut Vec<f64>| -> Result<()> {
        let xi = &xs[i * dim..(i + 1) * dim];
        row.clear();
        for j in 0..ny {
            let k = base.eval(xi, &ys[j * dim..(j + 1) * dim]);
            if !k.is_finite() {
                return Err(Error::NonFiniteKernel {
                    i: i / pieces,
                    j: j / pieces,
                });
            }
            row.push(k);
        }
        Ok(())
    };

    let mut k_prev = Vec::with_capacity(ny);
    let mut k_cur = Vec::with_capacity(ny);
    kernel_row(0, &mut k_prev)?;
    let mut u_prev = vec![1.0; ny];
    let mut u_cur = vec![1.0; ny];
    for i in 1..nx {
        kernel_row(i, &mut k_cur)?;
        u_cur[0] = 1.0;
        for j in 1..ny {
            let delta = k_cur[j] - k_cur[j - 1] - k_prev[j] + k_prev[j - 1];
            let (left, up, diag) = (u_cur[j - 1], u_prev[j], u_prev[j - 1]);
            u_cur[j] = match grid.scheme {
                Scheme::FirstOrder => left + up - diag + delta * diag,
                Scheme::SecondOrder => {
                    let d2 = delta * delta / 12.0;
                    (left + up) * (1.0 + 0.5 * delta + d2) - diag * (1.0 - d2)
                }
            };
        }
        std::mem::swap(&mut u_prev, &mut u_cur);
        std::mem::swap(&mut k_prev, &mut k_cur);
    }
    Ok(u_prev[ny - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(v: &[f64]) -> PiecewiseLinearPath {
        PiecewiseLinearPath::from_points(v.len(), &[vec![0.0; v.len()], v.to_vec()]).unwrap()
    }

    #[test]
    fn constant_paths_give_exactly_one() {
        let c = PiecewiseLinearPath::from_points(2, &[vec![0.5, 1.0], vec![0.5, 1.0], vec![0.5, 1.0]]).unwrap();
        let d = PiecewiseLinearPath::from_points(2, &[vec![-1.0, 3.0], vec![-1.0, 3.0]]).unwrap();
        for base in [BaseKernel::Linear, BaseKernel::rbf(0.3).unwrap()] {
            assert_eq!(sig_kernel_pde(&c, &d, &base, &PdeGrid::default()).unwrap(), 1.0);
        }
    }

    #[test]
    fn single_knot_path_gives_one() {
        let p = PiecewiseLinearPath::from_points(1, &[vec![2.0]]).unwrap();
        let q = line(&[1.0]);
        assert_eq!(sig_kernel_pde(&p, &q, &BaseKernel::Linear, &PdeGrid::default()).unwrap(), 1.0);
    }

    #[test]
    fn linear_segments_approach_bessel_series() {
        // Σ 1/(k!)^2
        let mut expected = 0.0;
        let mut fact = 1.0;
        for k in 0..30 {
            if k > 0 {
                fact *= k as f64;
            }
            expected += 1.0 / (fact * fact);
        }
        let a = line(&[0.6, 0.8]);
        let b = line(&[0.6, 0.8]);
        let err = |r| {
            let got = sig_kernel_pde(&a, &b, &BaseKernel::Linear, &PdeGrid::new(r).unwrap()).unwrap();
            (got - expected).abs() / expected
        };
        assert!(err(3) < 1e-3);
        // Second order once past the coarse grids: each halving cuts the error ~4x.
        for r in 2..6 {
            let (coarse, fine) = (err(r), err(r + 1));
            let factor = if r >= 3 { 3.0 } else { 2.0 };
            assert!(fine < coarse / factor, "r={r}: {coarse:e} -> {fine:e}");
        }
    }

    #[test]
    fn refinement_guard() {
        assert!(PdeGrid::new(11).is_err());
        assert!(PdeGrid::new(10).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(sig_kernel_pde(&line(&[1.0]), &line(&[1.0, 2.0]), &BaseKernel::Linear, &PdeGrid::default()).is_err());
    }

    #[test]
    fn non_finite_kernel_names_knots() {
        let big = PiecewiseLinearPath::from_points(1, &[vec![0.0], vec![1e200]]).unwrap();
        let err = sig_kernel_pde(&big, &big, &BaseKernel::Linear, &PdeGrid::new(0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteKernel { i: 1, j: 1 }));
    }
}
