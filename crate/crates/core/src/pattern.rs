//! Rectangular domains, point-pattern containers, Poisson samplers and
//! densities under the counting-scattering measure.
//!
//! All densities in this crate are taken with respect to the measure that sums
//! over the number of points `n` and integrates each of the `n` locations
//! against Lebesgue measure. Under that convention a Poisson process with
//! intensity `λ(·)` has density `exp(-∫λ) / n! · Π λ(x_i)`.

use std::collections::HashSet;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{param, Error, Result};
use crate::rng::Rng;

/// A location in one or two dimensions. One-dimensional points keep `y = 0`.
pub type Point = [f64; 2];

pub fn distance(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Axis-aligned rectangle (d = 2) or interval (d = 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Point,
    upper: Point,
    dim: usize,
}

impl Domain {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let dim = lower.len();
        if !(dim == 1 || dim == 2) || upper.len() != dim {
            return Err(param("domain must have matching bounds of length 1 or 2"));
        }
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for i in 0..dim {
            if !(lower[i].is_finite() && upper[i].is_finite() && upper[i] > lower[i]) {
                return Err(param(format!(
                    "domain bounds must be finite with upper > lower (axis {i})"
                )));
            }
            lo[i] = lower[i];
            hi[i] = upper[i];
        }
        Ok(Self {
            lower: lo,
            upper: hi,
            dim,
        })
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 1.0, 0.0, 1.0).expect("valid bounds")
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Self::new(&[x0, y0], &[x1, y1])
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(&[a], &[b])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.dim]
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim]
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|i| self.side(i)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.side(i).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Closed containment test; the unused axis of a 1-d domain must be 0.
    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|i| p[i] >= self.lower[i] && p[i] <= self.upper[i])
            && (self.dim == 2 || p[1] == 0.0)
    }

    pub fn sample_uniform(&self, rng: &mut Rng) -> Point {
        let mut p = [0.0; 2];
        for (i, v) in p.iter_mut().enumerate().take(self.dim) {
            *v = self.lower[i] + self.side(i) * rng.random::<f64>();
        }
        p
    }

    /// Midpoints of a regular grid with `res` cells per axis, row-major in y.
    pub fn midpoint_grid(&self, res: usize) -> Vec<Point> {
        let hx = self.side(0) / res as f64;
        if self.dim == 1 {
            return (0..res)
                .map(|i| [self.lower[0] + (i as f64 + 0.5) * hx, 0.0])
                .collect();
        }
        let hy = self.side(1) / res as f64;
        let mut out = Vec::with_capacity(res * res);
        for j in 0..res {
            for i in 0..res {
                out.push([
                    self.lower[0] + (i as f64 + 0.5) * hx,
                    self.lower[1] + (j as f64 + 0.5) * hy,
                ]);
            }
        }
        out
    }

    pub fn cell_volume(&self, res: usize) -> f64 {
        self.volume() / (res as f64).powi(self.dim as i32)
    }
}

fn check_distinct(points: &[Point]) -> Result<()> {
    let mut seen = HashSet::with_capacity(points.len());
    for p in points {
        if !seen.insert((p[0].to_bits(), p[1].to_bits())) {
            return Err(Error::DuplicatePoint(*p));
        }
    }
    Ok(())
}

fn check_inside(dom: &Domain, points: &[Point]) -> Result<()> {
    match points.iter().find(|p| !dom.contains(p)) {
        Some(p) => Err(Error::OutsideDomain { point: *p }),
        None => Ok(()),
    }
}

/// A finite set of distinct locations inside a domain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    points: Vec<Point>,
}

impl PointPattern {
    pub fn new(dom: &Domain, points: Vec<Point>) -> Result<Self> {
        check_inside(dom, &points)?;
        check_distinct(&points)?;
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// Real-vector marks attached to every point, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marks {
    dim: usize,
    values: Vec<f64>,
}

impl Marks {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(param("mark matrix must have a positive width"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(param("marks must be finite"));
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn len(&self) -> usize {
        self.values.len() / self.dim
    }
}

/// Locations with optional time stamps, real-vector marks and colour labels.
/// Each optional field is either present for every point or absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkedPattern {
    locations: Vec<Point>,
    times: Option<Vec<f64>>,
    marks: Option<Marks>,
    colours: Option<Vec<u32>>,
}

impl MarkedPattern {
    pub fn new(
        dom: &Domain,
        locations: Vec<Point>,
        times: Option<Vec<f64>>,
        marks: Option<Marks>,
        colours: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = locations.len();
        check_inside(dom, &locations)?;
        check_distinct(&locations)?;
        if let Some(t) = &times {
            if t.len() != n {
                return Err(Error::Dimension { expected: n, got: t.len() });
            }
            if t.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(param("times must lie in [0, 1]"));
            }
            let mut seen = HashSet::with_capacity(n);
            for v in t {
                if !seen.insert(v.to_bits()) {
                    return Err(Error::DuplicateTime(*v));
                }
            }
        }
        if let Some(m) = &marks {
            if m.len() != n {
                return Err(Error::Dimension { expected: n, got: m.len() });
            }
        }
        if let Some(c) = &colours {
            if c.len() != n {
                return Err(Error::Dimension { expected: n, got: c.len() });
            }
        }
        Ok(Self {
            locations,
            times,
            marks,
            colours,
        })
    }

    /// Points with scalar marks, the shape used by the univariate Cox process.
    pub fn with_scalar_marks(dom: &Domain, locations: Vec<Point>, marks: Vec<f64>) -> Result<Self> {
        Self::new(dom, locations, None, Some(Marks::new(1, marks)?), None)
    }

    pub fn with_vector_marks(
        dom: &Domain,
        locations: Vec<Point>,
        dim: usize,
        marks: Vec<f64>,
    ) -> Result<Self> {
        Self::new(dom, locations, None, Some(Marks::new(dim, marks)?), None)
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

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn marks(&self) -> Option<&Marks> {
        self.marks.as_ref()
    }

    /// Scalar mark values; `None` unless marks are present with width 1.
    pub fn scalar_marks(&self) -> Option<&[f64]> {
        self.marks
            .as_ref()
            .filter(|m| m.dim == 1)
            .map(|m| m.values.as_slice())
    }

    pub fn mark_dim(&self) -> Option<usize> {
        self.marks.as_ref().map(|m| m.dim)
    }

    pub fn colours(&self) -> Option<&[u32]> {
        self.colours.as_deref()
    }

    pub fn without_colours(mut self) -> Self {
        self.colours = None;
        self
    }

    pub fn to_point_pattern(&self) -> PointPattern {
        PointPattern {
            points: self.locations.clone(),
        }
    }

    /// Assembles a pattern from parts that are already known to be valid.
    pub(crate) fn from_parts(
        locations: Vec<Point>,
        times: Option<Vec<f64>>,
        marks: Option<Marks>,
        colours: Option<Vec<u32>>,
    ) -> Self {
        Self {
            locations,
            times,
            marks,
            colours,
        }
    }
}

/// `N ~ Poisson(λ|S|)` points scattered uniformly on `dom`.
pub fn sample_homogeneous_ppp(rng: &mut Rng, dom: &Domain, lambda: f64) -> Result<PointPattern> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(param(format!("intensity must be positive, got {lambda}")));
    }
    let n = sample_poisson(rng, lambda * dom.volume());
    let points = (0..n).map(|_| dom.sample_uniform(rng)).collect();
    Ok(PointPattern { points })
}

/// Lewis–Shedler thinning: propose from `PPP(lambda_max)` and keep each point
/// with probability `intensity(s) / lambda_max`.
pub fn sample_nonhom_ppp_by_thinning<F>(
    rng: &mut Rng,
    dom: &Domain,
    lambda_max: f64,
    intensity: F,
) -> Result<PointPattern>
where
    F: Fn(&Point) -> f64,
{
    let base = sample_homogeneous_ppp(rng, dom, lambda_max)?;
    let mut kept = Vec::with_capacity(base.len());
    for p in base.points {
        let value = intensity(&p);
        if !(0.0..=lambda_max).contains(&value) {
            return Err(Error::EnvelopeViolation {
                point: p,
                value,
                bound: lambda_max,
            });
        }
        if rng.random::<f64>() * lambda_max < value {
            kept.push(p);
        }
    }
    Ok(PointPattern { points: kept })
}

/// How the integral of the intensity over the domain is obtained.
#[derive(Clone, Copy, Debug)]
pub enum IntensityIntegral {
    /// The caller supplies `∫λ` directly (e.g. `λ|S|` for constant intensity).
    Known(f64),
    /// Midpoint rule on a regular grid with `res` cells per axis.
    Midpoint { res: usize },
}

/// Log density of `PPP(λ(·))` under the counting-scattering measure.
pub fn log_ppp_density<F>(
    pattern: &PointPattern,
    dom: &Domain,
    log_intensity: F,
    integral: IntensityIntegral,
) -> Result<f64>
where
    F: Fn(&Point) -> f64,
{
    check_inside(dom, &pattern.points)?;
    let total = match integral {
        IntensityIntegral::Known(v) => v,
        IntensityIntegral::Midpoint { res } => {
            if res == 0 {
                return Err(param("quadrature resolution must be positive"));
            }
            let w = dom.cell_volume(res);
            dom.midpoint_grid(res)
                .iter()
                .map(|p| log_intensity(p).exp())
                .sum::<f64>()
                * w
        }
    };
    let n = pattern.len();
    let sum_log: f64 = pattern.points.iter().map(&log_intensity).sum();
    Ok(-total - ln_factorial(n as u64) + sum_log)
}

/// `log p_n + log π_n` for a finite point process given by a count PMF and a
/// symmetric scattering density.
pub fn log_fpp_density<P, S>(pattern: &PointPattern, count_pmf: P, log_scatter: S) -> f64
where
    P: Fn(usize) -> f64,
    S: Fn(&PointPattern) -> f64,
{
    let pn = count_pmf(pattern.len());
    if pn <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if pattern.is_empty() {
        return pn.ln();
    }
    pn.ln() + log_scatter(pattern)
}

pub(crate) fn sample_poisson(rng: &mut Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

pub fn ln_fact(n: usize) -> f64 {
    ln_factorial(n as u64)
}
