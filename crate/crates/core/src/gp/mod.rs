//! Gaussian-process machinery: kernels, covariance assembly, incremental
//! Cholesky factors, conditionals, the linear model of coregionalization and
//! grid sampling.

mod cholesky;
mod grid;
mod kernel;
mod lmc;

pub use cholesky::{chol_extend, chol_remove, conditional_gaussian, mvn_logpdf, CholeskyState};
pub use grid::GridGpSampler;
pub use kernel::{Covariance, Kernel, KernelKind};
pub use lmc::{lmc_cov_matrix, LmcParams, MIN_ABS_DET};

use nalgebra::DMatrix;

use crate::pattern::Point;

/// `Σ_ij = C(|x_i − x_j|)`.
pub fn cov_matrix<C: Covariance>(kernel: &C, pts: &[Point]) -> DMatrix<f64> {
    let n = pts.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.cov(&pts[i], &pts[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Draws `L z` with `z` standard normal: a zero-mean sample with the state's
/// covariance.
pub fn sample_from_factor<C: Covariance + Clone>(state: &CholeskyState<C>, rng: &mut crate::Rng) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let z: Vec<f64> = (0..state.len()).map(|_| StandardNormal.sample(rng)).collect();
    state.mul_lower(&z)
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log expit(x)` without overflow.
#[inline]
pub fn log_expit(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}
