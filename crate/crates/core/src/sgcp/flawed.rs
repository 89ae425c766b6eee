//! Two published recipes for sampling the thinned points given the observed
//! ones. Both target the wrong distribution and are kept only as reference
//! implementations for comparison against the birth-death-move chain.

use rand::Rng as _;

use super::{extend_gp, scalar_pattern, SgcpParams};
use crate::error::{param, Error, Result};
use crate::gp::{expit, CholeskyState};
use crate::pattern::{sample_homogeneous_ppp, sample_poisson, MarkedPattern, Point};
use crate::rng::Rng;

/// WRONG LAW. Fresh Poisson process, GP values conditional on the observed
/// values, each point kept with probability `1 − expit(g)`.
///
/// With no observed points this is exactly the thinned marginal of the
/// forward simulation, not the conditional given an empty observation.
pub fn sample_conditional_flawed_rao(rng: &mut Rng, observed: &MarkedPattern, params: &SgcpParams) -> Result<MarkedPattern> {
    let base = sample_homogeneous_ppp(rng, &params.dom, params.lambda)?;
    let (mut chol, mut values) = observed_factor(observed, params)?;
    let n1 = values.len();
    extend_gp(&mut chol, &mut values, base.points(), params.mean, rng)?;
    let mut locs = Vec::new();
    let mut marks = Vec::new();
    for (p, g) in base.iter().zip(&values[n1..]) {
        if rng.random::<f64>() < 1.0 - expit(*g) {
            locs.push(*p);
            marks.push(*g);
        }
    }
    Ok(scalar_pattern(&locs, &marks))
}

pub const GONCALVES_MAX_TRIES: usize = 1_000_000;

/// WRONG LAW. Count drawn as `Poisson(λ)` regardless of the observation,
/// then locations and GP values drawn by rejection from the density
/// proportional to `N(g | m, Σ) · Π (1 − expit g)`: uniform locations with
/// GP values from the conditional given the observed values, accepted with
/// probability `Π (1 − expit g)`.
///
/// The count law is only dimensionally meaningful on a unit-area domain, so
/// other domains are refused.
pub fn sample_conditional_flawed_goncalves(
    rng: &mut Rng,
    observed: &MarkedPattern,
    params: &SgcpParams,
) -> Result<MarkedPattern> {
    if (params.dom.volume() - 1.0).abs() > 1e-12 {
        return Err(param("the Poisson(λ) count recipe is only defined on unit-area domains"));
    }
    let n0 = sample_poisson(rng, params.lambda);
    let (chol0, values0) = observed_factor(observed, params)?;
    let n1 = values0.len();
    for _ in 0..GONCALVES_MAX_TRIES {
        let locs: Vec<Point> = (0..n0).map(|_| params.dom.sample_uniform(rng)).collect();
        let mut chol = chol0.clone();
        let mut values = values0.clone();
        extend_gp(&mut chol, &mut values, &locs, params.mean, rng)?;
        let accept: f64 = values[n1..].iter().map(|g| 1.0 - expit(*g)).product();
        if rng.random::<f64>() < accept {
            return Ok(scalar_pattern(&locs, &values[n1..]));
        }
    }
    Err(Error::IterationCap(GONCALVES_MAX_TRIES))
}

fn observed_factor(observed: &MarkedPattern, params: &SgcpParams) -> Result<(CholeskyState<crate::gp::Kernel>, Vec<f64>)> {
    let values = if observed.is_empty() {
        Vec::new()
    } else {
        observed
            .scalar_marks()
            .ok_or_else(|| Error::Structure("observed points need GP values".into()))?
            .to_vec()
    };
    let chol = CholeskyState::from_points(params.kernel, params.kernel.default_jitter(), observed.locations())?;
    Ok((chol, values))
}
