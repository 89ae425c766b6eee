use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use crate::error::{param, Result};
use crate::pattern::{distance, Point};

/// Linear model of coregionalization `g(s) = A w(s) + μ` where the `w_j` are
/// independent unit-variance GPs with correlation `exp(-ρ_j r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmcParams {
    a: DMatrix<f64>,
    rho: Vec<f64>,
    mu: Vec<f64>,
}

pub const MIN_ABS_DET: f64 = 1e-10;

impl LmcParams {
    pub fn new(a: DMatrix<f64>, rho: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let p = a.nrows();
        if p == 0 || a.ncols() != p {
            return Err(param("coregionalization matrix must be square and non-empty"));
        }
        if rho.len() != p || mu.len() != p {
            return Err(param("rho and mu must have one entry per type"));
        }
        if rho.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(param("ranges must be positive"));
        }
        if a.iter().chain(mu.iter()).any(|v| !v.is_finite()) {
            return Err(param("A and mu must be finite"));
        }
        if a.determinant().abs() <= MIN_ABS_DET {
            return Err(param("coregionalization matrix is (numerically) singular"));
        }
        Ok(Self { a, rho, mu })
    }

    /// `A = I`, `μ = 0`.
    pub fn independent(rho: Vec<f64>) -> Result<Self> {
        let p = rho.len();
        Self::new(DMatrix::identity(p, p), rho, vec![0.0; p])
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Correlation kernel of the `j`-th latent field.
    pub fn kernel(&self, j: usize) -> Kernel {
        Kernel::exponential(self.rho[j], 1.0).expect("validated range")
    }

    pub fn aat(&self) -> DMatrix<f64> {
        &self.a * self.a.transpose()
    }

    /// Cross-covariance `Cov(g(s), g(t))` at separation `r`.
    pub fn cross_cov(&self, r: f64) -> DMatrix<f64> {
        let p = self.p();
        let mut out = DMatrix::zeros(p, p);
        for j in 0..p {
            let c = (-self.rho[j] * r).exp();
            let col = self.a.column(j);
            out += (col * col.transpose()) * c;
        }
        out
    }

    /// Maps `g` to the latent `w = A⁻¹ (g - μ)`.
    pub fn to_latent(&self, g: &[f64]) -> DVector<f64> {
        let centred = DVector::from_iterator(self.p(), g.iter().zip(&self.mu).map(|(x, m)| x - m));
        self.a
            .clone()
            .lu()
            .solve(&centred)
            .expect("validated non-singular")
    }
}

/// Covariance of the stacked vector `(g(x_1), …, g(x_n))`, point-major:
/// entry `(i·p + k, j·p + l)` is `Cov(g_k(x_i), g_l(x_j))`.
pub fn lmc_cov_matrix(params: &LmcParams, pts: &[Point]) -> DMatrix<f64> {
    let p = params.p();
    let n = pts.len();
    let mut out = DMatrix::zeros(n * p, n * p);
    for i in 0..n {
        for j in 0..=i {
            let block = params.cross_cov(distance(&pts[i], &pts[j]));
            for k in 0..p {
                for l in 0..p {
                    out[(i * p + k, j * p + l)] = block[(k, l)];
                    out[(j * p + l, i * p + k)] = block[(k, l)];
                }
            }
        }
    }
    out
}
