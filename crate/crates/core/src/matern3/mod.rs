//! Matern type III thinning on `S × [0, 1]`.
//!
//! A homogeneous Poisson process on space-time is labelled in time order: a
//! point is thinned when an earlier kept point casts a shadow on it. Given
//! the kept points, the thinned points form a Poisson process with intensity
//! `λ·h(s, t)` where `h` is the combined shadow of the kept points. Edge
//! effects are not corrected: nothing outside the domain casts a shadow.

mod area;
mod verify;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::pattern::{distance, ln_fact, sample_homogeneous_ppp, Domain, MarkedPattern, Point};
use crate::rng::Rng;

pub use area::disc_union_measure;
pub use verify::{verify_matern3, Matern3CheckConfig, Matern3Report};

/// Grid resolution per axis for the spatial part of `∫h` when no closed form
/// is available.
pub const DEFAULT_QUADRATURE_RES: usize = 256;

/// Probability that a kept point at `s*` deletes a later point at `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shadow {
    /// Hard core: delete everything strictly closer than `radius`.
    Disc { radius: f64 },
    /// Gaussian bump `height · exp(−d² / (2 scale²))` with `height ∈ (0, 1]`.
    Bump { height: f64, scale: f64 },
}

impl Shadow {
    pub fn disc(radius: f64) -> Result<Self> {
        let s = Shadow::Disc { radius };
        s.validate()?;
        Ok(s)
    }

    pub fn bump(height: f64, scale: f64) -> Result<Self> {
        let s = Shadow::Bump { height, scale };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Shadow::Disc { radius } if !(radius >= 0.0 && radius.is_finite()) => {
                Err(param(format!("shadow radius must be finite and non-negative, got {radius}")))
            }
            Shadow::Bump { height, scale } if !(height > 0.0 && height <= 1.0 && scale > 0.0 && scale.is_finite()) => {
                Err(param(format!("bump needs height in (0, 1] and positive scale, got {height}, {scale}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Shadow::Disc { .. })
    }

    /// Spatial part of the shadow, ignoring time order.
    pub fn kernel(&self, s: &Point, centre: &Point) -> f64 {
        match *self {
            Shadow::Disc { radius } => f64::from(u8::from(distance(s, centre) < radius)),
            Shadow::Bump { height, scale } => {
                let d2 = (s[0] - centre[0]).powi(2) + (s[1] - centre[1]).powi(2);
                height * (-d2 / (2.0 * scale * scale)).exp()
            }
        }
    }
}

pub fn shadow_eval(sh: &Shadow, s: &Point, t: f64, s_star: &Point, t_star: f64) -> f64 {
    if t > t_star {
        sh.kernel(s, s_star)
    } else {
        0.0
    }
}

/// Space-time pattern with distinct times in `[0, 1]` and optional 0/1
/// labels (0 thinned, 1 kept).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimedPattern(MarkedPattern);

impl Default for TimedPattern {
    fn default() -> Self {
        Self::empty()
    }
}

impl TimedPattern {
    pub fn new(dom: &Domain, points: Vec<Point>, times: Vec<f64>) -> Result<Self> {
        Ok(Self(MarkedPattern::new(dom, points, Some(times), None, None)?))
    }

    pub fn labelled(dom: &Domain, points: Vec<Point>, times: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        if labels.iter().any(|&c| c > 1) {
            return Err(Error::Structure("labels must be 0 (thinned) or 1 (kept)".into()));
        }
        Ok(Self(MarkedPattern::new(dom, points, Some(times), None, Some(labels))?))
    }

    pub fn empty() -> Self {
        Self(MarkedPattern::from_parts(Vec::new(), Some(Vec::new()), None, None))
    }

    pub fn from_marked(pattern: MarkedPattern) -> Result<Self> {
        if pattern.times().is_none() {
            return Err(Error::Structure("space-time pattern needs a time for every point".into()));
        }
        if pattern.colours().is_some_and(|c| c.iter().any(|&v| v > 1)) {
            return Err(Error::Structure("labels must be 0 (thinned) or 1 (kept)".into()));
        }
        Ok(Self(pattern))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        self.0.locations()
    }

    pub fn times(&self) -> &[f64] {
        self.0.times().unwrap_or(&[])
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.0.colours()
    }

    pub fn as_marked(&self) -> &MarkedPattern {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> + '_ {
        self.points().iter().zip(self.times().iter().copied())
    }

    /// Thinned points labelled 0 followed by kept points labelled 1.
    pub fn combine(dom: &Domain, thinned: &TimedPattern, kept: &TimedPattern) -> Result<Self> {
        let points = thinned.points().iter().chain(kept.points()).copied().collect();
        let times = thinned.times().iter().chain(kept.times()).copied().collect();
        let labels = std::iter::repeat_n(0, thinned.len()).chain(std::iter::repeat_n(1, kept.len())).collect();
        Self::labelled(dom, points, times, labels)
    }

    /// Splits a labelled pattern into its thinned and kept parts.
    pub fn split(&self, dom: &Domain) -> Result<(TimedPattern, TimedPattern)> {
        let labels = self
            .labels()
            .ok_or_else(|| Error::Structure("pattern carries no labels".into()))?;
        let pick = |want: u32| -> Result<TimedPattern> {
            let (p, t) = self
                .iter()
                .zip(labels)
                .filter(|(_, &c)| c == want)
                .map(|((p, t), _)| (*p, t))
                .unzip();
            TimedPattern::new(dom, p, t)
        };
        Ok((pick(0)?, pick(1)?))
    }
}

/// `Σ_j ln(1 − H(s, t, s_j, t_j))` over the points of `kept`.
fn log_unshadowed(s: &Point, t: f64, kept: &TimedPattern, sh: &Shadow) -> f64 {
    kept.iter().map(|(p, tj)| (-shadow_eval(sh, s, t, p, tj)).ln_1p()).sum()
}

/// `ln(1 − e^x)` for `x ≤ 0`, with `ln 0 = −∞` at `x = 0`.
fn ln_one_minus_exp(x: f64) -> f64 {
    (-x.exp_m1()).ln()
}

/// Probability that `(s, t)` is deleted by at least one point of `kept`.
pub fn combined_shadow_h(s: &Point, t: f64, kept: &TimedPattern, sh: &Shadow) -> f64 {
    -log_unshadowed(s, t, kept, sh).exp_m1()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(param(format!("intensity must be positive and finite, got {lambda}")))
    }
}

fn check_inside(dom: &Domain, pattern: &TimedPattern) -> Result<()> {
    match pattern.points().iter().find(|p| !dom.contains(p)) {
        Some(p) => Err(Error::OutsideDomain { point: *p }),
        None => Ok(()),
    }
}

fn check_disjoint_times(a: &TimedPattern, b: &TimedPattern) -> Result<()> {
    let mut all: Vec<f64> = a.times().iter().chain(b.times()).copied().collect();
    all.sort_by(f64::total_cmp);
    match all.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(Error::DuplicateTime(w[0])),
        None => Ok(()),
    }
}

/// Labels points in time order; `true` means kept. Random shadows draw one
/// Bernoulli per earlier kept point until one of them fires.
fn label_in_time_order(rng: &mut Rng, points: &[Point], times: &[f64], sh: &Shadow) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut kept_idx: Vec<usize> = Vec::new();
    let mut kept = vec![false; points.len()];
    for &i in &order {
        let deleted = kept_idx.iter().any(|&j| match sh {
            Shadow::Disc { .. } => sh.kernel(&points[i], &points[j]) == 1.0,
            Shadow::Bump { .. } => rng.random::<f64>() < sh.kernel(&points[i], &points[j]),
        });
        if !deleted {
            kept[i] = true;
            kept_idx.push(i);
        }
    }
    kept
}

/// Forward simulation. Returns `(thinned, kept)`.
pub fn simulate_matern3(rng: &mut Rng, dom: &Domain, lambda: f64, sh: &Shadow) -> Result<(TimedPattern, TimedPattern)> {
    sh.validate()?;
    let base = sample_homogeneous_ppp(rng, dom, lambda)?;
    let times: Vec<f64> = (0..base.len()).map(|_| rng.random::<f64>()).collect();
    let kept = label_in_time_order(rng, base.points(), &times, sh);
    let mut parts = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    for ((p, t), k) in base.iter().zip(&times).zip(&kept) {
        let part = &mut parts[usize::from(*k)];
        part.0.push(*p);
        part.1.push(*t);
    }
    let [(p0, t0), (p1, t1)] = parts;
    Ok((TimedPattern::new(dom, p0, t0)?, TimedPattern::new(dom, p1, t1)?))
}

/// Log probability of the labels given locations and times, evaluated over
/// all pairs so the point order does not matter.
pub fn log_label_scatter(pattern: &TimedPattern, sh: &Shadow) -> Result<f64> {
    let labels = pattern
        .labels()
        .ok_or_else(|| Error::Structure("label density needs labelled points".into()))?;
    let mut total = 0.0;
    for (i, (s, t)) in pattern.iter().enumerate() {
        let log_free: f64 = pattern
            .iter()
            .zip(labels)
            .filter(|(_, &c)| c == 1)
            .map(|((p, tj), _)| (-shadow_eval(sh, s, t, p, tj)).ln_1p())
            .sum();
        total += if labels[i] == 1 { log_free } else { ln_one_minus_exp(log_free) };
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    Ok(total)
}

/// Joint log density of thinned and kept space-time points.
pub fn log_joint_density_m3(
    thinned: &TimedPattern,
    kept: &TimedPattern,
    dom: &Domain,
    lambda: f64,
    sh: &Shadow,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_inside(dom, thinned)?;
    check_inside(dom, kept)?;
    check_disjoint_times(thinned, kept)?;
    let (n0, n1) = (thinned.len(), kept.len());
    let mut v = -lambda * dom.volume() + (n0 + n1) as f64 * lambda.ln() - ln_fact(n0) - ln_fact(n1);
    v += kept.iter().map(|(s, t)| log_unshadowed(s, t, kept, sh)).sum::<f64>();
    v += thinned
        .iter()
        .map(|(s, t)| ln_one_minus_exp(log_unshadowed(s, t, kept, sh)))
        .sum::<f64>();
    Ok(v)
}

/// How `∫ h` over `S × [0, 1]` is computed. The time direction is always
/// exact because `h` is piecewise constant in time between kept times.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Quadrature {
    /// Exact union area for discs, midpoint grid at the default resolution
    /// otherwise.
    #[default]
    Auto,
    /// Midpoint rule with `res` cells per spatial axis.
    Midpoint { res: usize },
}

/// `∫_{S×[0,1]} h(s, t) ds dt` for the combined shadow of `kept`.
pub fn shadow_integral(kept: &TimedPattern, dom: &Domain, sh: &Shadow, quadrature: Quadrature) -> Result<f64> {
    sh.validate()?;
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| kept.times()[a].total_cmp(&kept.times()[b]));
    let sorted_t: Vec<f64> = order.iter().map(|&i| kept.times()[i]).collect();
    let centres: Vec<Point> = order.iter().map(|&i| kept.points()[i]).collect();
    let slab = |k: usize| sorted_t.get(k + 1).copied().unwrap_or(1.0) - sorted_t[k];

    let res = match (quadrature, sh) {
        (Quadrature::Auto, Shadow::Disc { radius }) => {
            return Ok((0..centres.len())
                .map(|k| slab(k) * disc_union_measure(dom, &centres[..=k], *radius))
                .sum());
        }
        (Quadrature::Auto, _) => DEFAULT_QUADRATURE_RES,
        (Quadrature::Midpoint { res }, _) if res > 0 => res,
        _ => return Err(param("quadrature resolution must be positive")),
    };
    let grid = dom.midpoint_grid(res);
    let cell = dom.cell_volume(res);
    let mut free = vec![1.0; grid.len()];
    let mut total = 0.0;
    for (k, c) in centres.iter().enumerate() {
        for (f, g) in free.iter_mut().zip(&grid) {
            *f *= 1.0 - sh.kernel(g, c);
        }
        let covered: f64 = free.iter().map(|f| 1.0 - f).sum();
        total += slab(k) * covered * cell;
    }
    Ok(total)
}

/// Marginal log density of the kept points, with the thinned points
/// integrated out.
pub fn log_marginal_density_m3(
    kept: &TimedPattern,
    dom: &Domain,
    lambda: f64,
    sh: &Shadow,
    quadrature: Quadrature,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_inside(dom, kept)?;
    let integral = shadow_integral(kept, dom, sh, quadrature)?;
    let n1 = kept.len();
    let free: f64 = kept.iter().map(|(s, t)| log_unshadowed(s, t, kept, sh)).sum();
    Ok(-lambda * (dom.volume() - integral) + n1 as f64 * lambda.ln() - ln_fact(n1) + free)
}

/// Log density of the thinned points given the kept ones: a Poisson process
/// on `S × [0, 1]` with intensity `λ·h`.
pub fn log_conditional_density_m3(
    thinned: &TimedPattern,
    kept: &TimedPattern,
    dom: &Domain,
    lambda: f64,
    sh: &Shadow,
    quadrature: Quadrature,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_inside(dom, thinned)?;
    check_disjoint_times(thinned, kept)?;
    let integral = shadow_integral(kept, dom, sh, quadrature)?;
    let n0 = thinned.len();
    let shadows: f64 = thinned
        .iter()
        .map(|(s, t)| ln_one_minus_exp(log_unshadowed(s, t, kept, sh)))
        .sum();
    Ok(-lambda * integral + n0 as f64 * lambda.ln() - ln_fact(n0) + shadows)
}

/// Exact draw of the thinned points given the kept ones, by thinning a
/// space-time Poisson process of rate `λ` with retention probability `h`.
pub fn sample_conditional_thinned_m3(
    rng: &mut Rng,
    kept: &TimedPattern,
    dom: &Domain,
    lambda: f64,
    sh: &Shadow,
) -> Result<TimedPattern> {
    sh.validate()?;
    let base = sample_homogeneous_ppp(rng, dom, lambda)?;
    let mut points = Vec::new();
    let mut times = Vec::new();
    for p in base.iter() {
        let t = rng.random::<f64>();
        if kept.is_empty() {
            continue;
        }
        if rng.random::<f64>() < combined_shadow_h(p, t, kept, sh) {
            points.push(*p);
            times.push(t);
        }
    }
    TimedPattern::new(dom, points, times)
}

#[cfg(test)]
mod tests;
