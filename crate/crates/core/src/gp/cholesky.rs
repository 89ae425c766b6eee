//! Cholesky factor of a kernel matrix that follows a changing set of
//! locations.
//!
//! The lower factor is stored row-packed: row `i` occupies
//! `factor[i(i+1)/2 .. (i+1)(i+2)/2]`. Appending a location costs one
//! triangular solve; removing one is a rank-one update of the trailing block.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::kernel::Covariance;
use crate::error::{Error, Result};
use crate::pattern::Point;

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

#[derive(Clone, Debug)]
pub struct CholeskyState<C> {
    cov: C,
    jitter: f64,
    locations: Vec<Point>,
    factor: Vec<f64>,
}

impl<C: Covariance + Clone> CholeskyState<C> {
    pub fn empty(cov: C, jitter: f64) -> Self {
        assert!(jitter >= 0.0 && jitter.is_finite(), "jitter must be non-negative");
        Self {
            cov,
            jitter,
            locations: Vec::new(),
            factor: Vec::new(),
        }
    }

    /// Empty state with jitter `1e-8 · variance`.
    pub fn with_default_jitter(cov: C) -> Self {
        let jitter = 1e-8 * cov.variance();
        Self::empty(cov, jitter)
    }

    pub fn from_points(cov: C, jitter: f64, points: &[Point]) -> Result<Self> {
        let mut state = Self::empty(cov, jitter);
        state.locations = points.to_vec();
        state.factor = factorize_packed(&state.cov, jitter, points)?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn covariance(&self) -> &C {
        &self.cov
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j <= i);
        self.factor[row_start(i) + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.factor[row_start(i)..row_start(i + 1)]
    }

    pub fn lower(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| if j <= i { self.get(i, j) } else { 0.0 })
    }

    /// `Σ + jitter·I` at the current locations, assembled from the kernel.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.cov.cov(&self.locations[i], &self.locations[j]) + if i == j { self.jitter } else { 0.0 }
        })
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.len()).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(b.len(), n);
        let mut x = Vec::with_capacity(n);
        for i in 0..n {
            let row = self.row(i);
            let s: f64 = row[..i].iter().zip(&x).map(|(l, v)| l * v).sum();
            x.push((b[i] - s) / row[i]);
        }
        x
    }

    /// Solves `Lᵀ y = x`.
    pub fn solve_upper(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        let mut y = x.to_vec();
        for j in (0..n).rev() {
            let row = self.row(j);
            y[j] /= row[j];
            let yj = y[j];
            for (yi, l) in y[..j].iter_mut().zip(&row[..j]) {
                *yi -= l * yj;
            }
        }
        y
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(z.len(), n);
        (0..n)
            .map(|i| self.row(i).iter().zip(z).map(|(l, v)| l * v).sum())
            .collect()
    }

    /// `Lᵀ v`.
    pub fn mul_upper(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(v.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let vi = v[i];
            for (o, l) in out[..=i].iter_mut().zip(self.row(i)) {
                *o += l * vi;
            }
        }
        out
    }

    /// `Σ⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn cross_cov(&self, p: &Point) -> Vec<f64> {
        self.locations.iter().map(|q| self.cov.cov(q, p)).collect()
    }

    /// Row that appending `p` would add to the factor: `(L⁻¹ k, d)` with
    /// `d² = C(p,p) + jitter − |L⁻¹ k|²` the conditional variance at `p`.
    pub fn extension_row(&self, p: &Point) -> Result<(Vec<f64>, f64)> {
        let v = self.solve_lower(&self.cross_cov(p));
        let d2 = self.cov.cov(p, p) + self.jitter - v.iter().map(|x| x * x).sum::<f64>();
        if !(d2 > 0.0) || !d2.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: self.len(),
                value: d2,
            });
        }
        Ok((v, d2.sqrt()))
    }

    /// Appends a row previously obtained from [`Self::extension_row`].
    pub fn push_row(&mut self, p: Point, mut row: Vec<f64>, diag: f64) {
        debug_assert_eq!(row.len(), self.len());
        row.push(diag);
        self.factor.extend_from_slice(&row);
        self.locations.push(p);
    }

    pub fn push(&mut self, p: Point) -> Result<()> {
        let (row, diag) = self.extension_row(&p)?;
        self.push_row(p, row, diag);
        Ok(())
    }

    /// Removes location `index`; falls back to refactorizing if the update
    /// produces a non-positive pivot.
    pub fn remove(&mut self, index: usize) -> Result<()> {
        let n = self.len();
        if index >= n {
            return Err(Error::Dimension {
                expected: n,
                got: index,
            });
        }
        let mut w: Vec<f64> = (index + 1..n).map(|i| self.get(i, index)).collect();
        let mut packed = Vec::with_capacity(row_start(n - 1));
        for i in 0..n {
            if i == index {
                continue;
            }
            let row = self.row(i);
            if i < index {
                packed.extend_from_slice(row);
            } else {
                packed.extend_from_slice(&row[..index]);
                packed.extend_from_slice(&row[index + 1..]);
            }
        }
        self.locations.remove(index);
        self.factor = packed;
        if !self.rank_one_update_trailing(index, &mut w) {
            warn!("cholesky downdate lost positive definiteness; refactorizing {} points", n - 1);
            self.refactorize()?;
        }
        Ok(())
    }

    /// `L₃₃ L₃₃ᵀ + w wᵀ` on the block starting at `start`.
    fn rank_one_update_trailing(&mut self, start: usize, w: &mut [f64]) -> bool {
        let n = self.len();
        for (jj, j) in (start..n).enumerate() {
            let ljj = self.factor[row_start(j) + j];
            let r = ljj.hypot(w[jj]);
            if !(r > 0.0) || !r.is_finite() {
                return false;
            }
            let c = r / ljj;
            let s = w[jj] / ljj;
            self.factor[row_start(j) + j] = r;
            for (ii, i) in (j + 1..n).enumerate() {
                let k = jj + 1 + ii;
                let idx = row_start(i) + j;
                let lij = (self.factor[idx] + s * w[k]) / c;
                self.factor[idx] = lij;
                w[k] = c * w[k] - s * lij;
            }
        }
        true
    }

    pub fn refactorize(&mut self) -> Result<()> {
        self.factor = factorize_packed(&self.cov, self.jitter, &self.locations)?;
        Ok(())
    }

    pub fn extended(&self, p: Point) -> Result<Self> {
        let mut next = self.clone();
        next.push(p)?;
        Ok(next)
    }

    pub fn removed(&self, index: usize) -> Result<Self> {
        let mut next = self.clone();
        next.remove(index)?;
        Ok(next)
    }

    /// Same locations, different kernel; refactorizes from scratch.
    pub fn with_covariance(&self, cov: C) -> Result<Self> {
        Self::from_points(cov, self.jitter, &self.locations)
    }
}

fn factorize_packed<C: Covariance>(cov: &C, jitter: f64, pts: &[Point]) -> Result<Vec<f64>> {
    let n = pts.len();
    let mut f = vec![0.0; row_start(n)];
    for i in 0..n {
        for j in 0..=i {
            let mut s = cov.cov(&pts[i], &pts[j]);
            if i == j {
                s += jitter;
            }
            let (ri, rj) = (row_start(i), row_start(j));
            for k in 0..j {
                s -= f[ri + k] * f[rj + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                }
                f[ri + i] = s.sqrt();
            } else {
                f[ri + j] = s / f[rj + j];
            }
        }
    }
    Ok(f)
}

pub fn chol_extend<C: Covariance + Clone>(state: &CholeskyState<C>, p: Point) -> Result<CholeskyState<C>> {
    state.extended(p)
}

pub fn chol_remove<C: Covariance + Clone>(state: &CholeskyState<C>, index: usize) -> Result<CholeskyState<C>> {
    state.removed(index)
}

/// Posterior mean and covariance of the (nugget-inclusive) zero-mean GP at
/// `new_points` given `known_values` at the state's locations. With an empty
/// state this is the prior.
pub fn conditional_gaussian<C: Covariance + Clone>(
    state: &CholeskyState<C>,
    known_values: &[f64],
    new_points: &[Point],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = state.len();
    if known_values.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: known_values.len(),
        });
    }
    let m = new_points.len();
    let alpha = state.solve_lower(known_values);
    let v: Vec<Vec<f64>> = new_points
        .iter()
        .map(|p| state.solve_lower(&state.cross_cov(p)))
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mean = DVector::from_iterator(m, v.iter().map(|vi| dot(vi, &alpha)));
    let cov = state.covariance();
    let covm = DMatrix::from_fn(m, m, |i, j| {
        let prior = cov.cov(&new_points[i], &new_points[j]) + if i == j { state.jitter() } else { 0.0 };
        prior - dot(&v[i], &v[j])
    });
    Ok((mean, covm))
}

/// Multivariate normal log density with covariance given by the factor.
pub fn mvn_logpdf<C: Covariance + Clone>(values: &[f64], mean: &[f64], chol: &CholeskyState<C>) -> f64 {
    let n = chol.len();
    assert_eq!(values.len(), n, "value vector length");
    assert_eq!(mean.len(), n, "mean vector length");
    let r: Vec<f64> = values.iter().zip(mean).map(|(v, m)| v - m).collect();
    let z = chol.solve_lower(&r);
    let quad: f64 = z.iter().map(|x| x * x).sum();
    -0.5 * quad - 0.5 * chol.log_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}
