//! Exact stationary GP draws on a regular grid by circulant embedding.
//!
//! The kernel is wrapped onto a torus of at least twice the grid extent,
//! diagonalized with an FFT, and each complex draw yields two independent
//! real fields. The torus grows one grid extent at a time until the
//! embedding is non-negative.

use std::sync::Arc;

use log::warn;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::kernel::Kernel;
use crate::error::{param, Result};
use crate::pattern::{Domain, Point};
use crate::rng::Rng;

pub struct GridGpSampler {
    res: usize,
    dim: usize,
    ext: [usize; 2],
    windows: usize,
    cell: f64,
    scale: Vec<f64>,
    fft: [Arc<dyn Fft<f64>>; 2],
    buffer: Vec<Complex64>,
    column: Vec<Complex64>,
    queue: Vec<Vec<f64>>,
    points: Vec<Point>,
}

impl GridGpSampler {
    /// Sampler for the field at the `res^d` cell midpoints of `dom`; every
    /// draw is independent.
    pub fn new(kernel: &Kernel, dom: &Domain, res: usize) -> Result<Self> {
        Self::with_windows(kernel, dom, res, 1)
    }

    /// Cuts `windows` grids per axis out of each torus draw. Each window has
    /// exactly the grid covariance; distinct windows are separated by
    /// [`Self::window_gap`] and are correlated through the kernel at that
    /// distance.
    pub fn with_windows(kernel: &Kernel, dom: &Domain, res: usize, windows: usize) -> Result<Self> {
        if res == 0 || windows == 0 {
            return Err(param("grid resolution and window count must be positive"));
        }
        let dim = dom.dim();
        let h = [dom.side(0) / res as f64, if dim == 2 { dom.side(1) / res as f64 } else { 0.0 }];
        let mut planner = FftPlanner::new();
        let mut factor = 2;
        loop {
            let m = factor * res;
            let ext = [m, if dim == 2 { m } else { 1 }];
            let fft = [planner.plan_fft_forward(ext[0]), planner.plan_fft_forward(ext[1])];
            let mut base = vec![Complex64::new(0.0, 0.0); ext[0] * ext[1]];
            for j in 0..ext[1] {
                let dy = h[1] * j.min(ext[1] - j) as f64;
                for i in 0..ext[0] {
                    let dx = h[0] * i.min(ext[0] - i) as f64;
                    base[j * ext[0] + i] = Complex64::new(kernel.at_distance(dx.hypot(dy)), 0.0);
                }
            }
            fft2(&mut base, ext, &fft);
            let max = base.iter().map(|c| c.re).fold(f64::MIN, f64::max);
            let min = base.iter().map(|c| c.re).fold(f64::MAX, f64::min);
            let positive = min >= -1e-10 * max;
            let room = m >= 2 * windows * res;
            if (positive || factor >= 8) && room {
                if !positive {
                    warn!("circulant embedding has negative eigenvalue {min:e}; clipping");
                }
                let total = (ext[0] * ext[1]) as f64;
                let scale = base.iter().map(|c| (c.re.max(0.0) / total).sqrt()).collect();
                return Ok(Self {
                    res,
                    dim,
                    ext,
                    windows,
                    cell: h[0],
                    scale,
                    fft,
                    buffer: vec![Complex64::new(0.0, 0.0); ext[0] * ext[1]],
                    column: vec![Complex64::new(0.0, 0.0); ext[1]],
                    queue: Vec::new(),
                    points: dom.midpoint_grid(res),
                });
            }
            factor += 1;
        }
    }

    pub fn n_cells(&self) -> usize {
        self.res.pow(self.dim as u32)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Smallest torus side used, as a multiple of the grid resolution.
    pub fn embedding_factor(&self) -> usize {
        self.ext[0] / self.res
    }

    /// Distance along x between neighbouring windows (infinite with one
    /// window).
    pub fn window_gap(&self) -> f64 {
        if self.windows == 1 {
            return f64::INFINITY;
        }
        (self.ext[0] / self.windows - self.res) as f64 * self.cell
    }

    /// One zero-mean field at the cell midpoints, row-major in y.
    pub fn sample(&mut self, rng: &mut Rng) -> Vec<f64> {
        if let Some(f) = self.queue.pop() {
            return f;
        }
        for (b, s) in self.buffer.iter_mut().zip(&self.scale) {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *b = Complex64::new(re * s, im * s);
        }
        let [nx, ny] = self.ext;
        let stride = nx / self.windows;
        let window_cols = |w: usize| w * stride..w * stride + self.res;
        for row in self.buffer.chunks_exact_mut(nx) {
            self.fft[0].process(row);
        }
        if ny > 1 {
            for w in 0..self.windows {
                for i in window_cols(w) {
                    for j in 0..ny {
                        self.column[j] = self.buffer[j * nx + i];
                    }
                    self.fft[1].process(&mut self.column);
                    for j in 0..ny {
                        self.buffer[j * nx + i] = self.column[j];
                    }
                }
            }
        }
        let wy = if self.dim == 2 { self.windows } else { 1 };
        let ny_win = if self.dim == 2 { self.res } else { 1 };
        let mut fields = Vec::with_capacity(2 * self.windows * wy);
        for a in 0..self.windows {
            for b in 0..wy {
                let mut re = Vec::with_capacity(self.n_cells());
                let mut im = Vec::with_capacity(self.n_cells());
                for j in 0..ny_win {
                    let row = (b * stride + j) * nx;
                    for i in window_cols(a) {
                        let c = self.buffer[row + i];
                        re.push(c.re);
                        im.push(c.im);
                    }
                }
                fields.push(re);
                fields.push(im);
            }
        }
        fields.reverse();
        let first = fields.pop().expect("at least one window");
        self.queue = fields;
        first
    }
}

fn fft2(data: &mut [Complex64], ext: [usize; 2], fft: &[Arc<dyn Fft<f64>>; 2]) {
    let [nx, ny] = ext;
    for row in data.chunks_exact_mut(nx) {
        fft[0].process(row);
    }
    if ny > 1 {
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[j * nx + i];
            }
            fft[1].process(&mut col);
            for j in 0..ny {
                data[j * nx + i] = col[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::distance;

    fn check_covariance(dom: Domain, res: usize, kernel: Kernel) {
        let mut s = GridGpSampler::new(&kernel, &dom, res).unwrap();
        let pts = s.points().to_vec();
        let pairs = [(0, 0), (0, 1), (0, pts.len() - 1), (3, pts.len() / 2)];
        let reps = 40_000;
        let mut acc = [0.0; 4];
        let mut rng = Rng::new(17);
        for _ in 0..reps {
            let f = s.sample(&mut rng);
            for (k, (i, j)) in pairs.iter().enumerate() {
                acc[k] += f[*i] * f[*j];
            }
        }
        for (k, (i, j)) in pairs.iter().enumerate() {
            let emp = acc[k] / reps as f64;
            let exact = kernel.at_distance(distance(&pts[*i], &pts[*j]));
            // sd of the estimate is at most sqrt(2/reps) ≈ 0.007
            assert!((emp - exact).abs() < 0.03, "pair {k}: {emp} vs {exact}");
        }
    }

    #[test]
    fn empirical_covariance_2d() {
        check_covariance(Domain::unit_square(), 16, Kernel::exponential(2.0, 1.0).unwrap());
    }

    #[test]
    fn empirical_covariance_1d() {
        check_covariance(Domain::interval(0.0, 2.0).unwrap(), 32, Kernel::exponential(1.0, 1.5).unwrap());
    }

    #[test]
    fn windows_have_grid_covariance() {
        let kernel = Kernel::exponential(2.0, 1.0).unwrap();
        let dom = Domain::unit_square();
        let mut s = GridGpSampler::with_windows(&kernel, &dom, 8, 2).unwrap();
        assert!(s.window_gap() >= 1.0);
        let pts = s.points().to_vec();
        let (a, b) = (0, pts.len() - 1);
        let reps = 40_000;
        let (mut var, mut cov, mut cross) = (0.0, 0.0, 0.0);
        let mut rng = Rng::new(23);
        for _ in 0..reps / 2 {
            let f = s.sample(&mut rng);
            let g = s.sample(&mut rng);
            var += f[a] * f[a] + g[a] * g[a];
            cov += f[a] * f[b] + g[a] * g[b];
            cross += f[a] * g[a];
        }
        let n = reps as f64;
        assert!((var / n - 1.0).abs() < 0.03);
        assert!((cov / n - kernel.at_distance(distance(&pts[a], &pts[b]))).abs() < 0.03);
        assert!((cross / (n / 2.0)).abs() < 0.03);
    }

    #[test]
    fn embedding_nonnegative_for_acceptance_grids() {
        let k = Kernel::exponential(2.0, 1.0).unwrap();
        for res in [64, 128] {
            let s = GridGpSampler::new(&k, &Domain::unit_square(), res).unwrap();
            assert_eq!(s.n_cells(), res * res);
            assert!(s.scale.iter().all(|v| v.is_finite()));
        }
    }
}
