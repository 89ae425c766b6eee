//! Self-checks of the Matern III densities and samplers on the unit square.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{
    combined_shadow_h, log_conditional_density_m3, log_joint_density_m3, log_marginal_density_m3,
    sample_conditional_thinned_m3, simulate_matern3, Quadrature, Shadow, TimedPattern,
};
use crate::error::Result;
use crate::pattern::{distance, Domain};
use crate::rng::Rng;
use crate::stats::{poisson_gof, TestResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Matern3CheckConfig {
    pub lambda: f64,
    pub disc: Shadow,
    pub bump: Shadow,
    /// Configurations for the density chain, split over both shadows.
    pub n_configs: usize,
    pub n_hard_core: usize,
    pub conditional_lambda: f64,
    /// Area of the region where the shadow is certain.
    pub conditional_area: f64,
    pub n_conditional: usize,
    pub alpha: f64,
}

impl Default for Matern3CheckConfig {
    fn default() -> Self {
        Self {
            lambda: 20.0,
            disc: Shadow::Disc { radius: 0.1 },
            bump: Shadow::Bump { height: 0.7, scale: 0.05 },
            n_configs: 100,
            n_hard_core: 10_000,
            conditional_lambda: 10.0,
            conditional_area: 0.3,
            n_conditional: 100_000,
            alpha: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Matern3Report {
    pub seed: u64,
    pub config: Matern3CheckConfig,
    /// Largest `|log joint − log marginal − log conditional|`.
    pub max_chain_residual: f64,
    pub hard_core_violations: usize,
    pub conditional_mean_count: f64,
    pub conditional_expected: f64,
    pub conditional_test: TestResult,
    pub passed: bool,
}

/// Runs three checks:
///
/// * the joint density factors into marginal times conditional on simulated
///   and conditionally resampled configurations,
/// * no two kept points of the disc model are closer than its radius and
///   every thinned point lies in the shadow,
/// * with one kept point at time 0 whose disc covers `conditional_area`,
///   conditional thinned counts are Poisson with mean
///   `conditional_lambda · conditional_area`.
pub fn verify_matern3(rng: &mut Rng, config: &Matern3CheckConfig) -> Result<Matern3Report> {
    let seed = rng.seed();
    let dom = Domain::unit_square();
    config.disc.validate()?;
    config.bump.validate()?;

    let mut max_chain_residual: f64 = 0.0;
    for case in 0..config.n_configs {
        let sh = if case % 2 == 0 { &config.disc } else { &config.bump };
        let (sim_thinned, kept) = simulate_matern3(rng, &dom, config.lambda, sh)?;
        let thinned = if case % 4 < 2 {
            sim_thinned
        } else {
            sample_conditional_thinned_m3(rng, &kept, &dom, config.lambda, sh)?
        };
        let joint = log_joint_density_m3(&thinned, &kept, &dom, config.lambda, sh)?;
        let marginal = log_marginal_density_m3(&kept, &dom, config.lambda, sh, Quadrature::Auto)?;
        let cond = log_conditional_density_m3(&thinned, &kept, &dom, config.lambda, sh, Quadrature::Auto)?;
        let residual = (joint - marginal - cond).abs();
        max_chain_residual = max_chain_residual.max(if residual.is_nan() { f64::INFINITY } else { residual });
    }

    let radius = match config.disc {
        Shadow::Disc { radius } => radius,
        Shadow::Bump { .. } => 0.0,
    };
    let mut hard_core_violations = 0;
    for _ in 0..config.n_hard_core {
        let (thinned, kept) = simulate_matern3(rng, &dom, config.lambda, &config.disc)?;
        let pts = kept.points();
        let close = (0..pts.len()).any(|i| pts[i + 1..].iter().any(|b| distance(&pts[i], b) < radius));
        let unshadowed = thinned.iter().any(|(s, t)| combined_shadow_h(s, t, &kept, &config.disc) != 1.0);
        if close || unshadowed {
            hard_core_violations += 1;
        }
    }

    let full = Shadow::disc((config.conditional_area / PI).sqrt())?;
    let kept = TimedPattern::new(&dom, vec![[0.5, 0.5]], vec![0.0])?;
    let counts: Vec<usize> = (0..config.n_conditional)
        .map(|_| sample_conditional_thinned_m3(rng, &kept, &dom, config.conditional_lambda, &full).map(|x| x.len()))
        .collect::<Result<_>>()?;
    let expected = config.conditional_lambda * config.conditional_area;
    let conditional_test = poisson_gof(&counts, expected);
    let conditional_mean_count = counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64;

    let passed = max_chain_residual < 1e-10 && hard_core_violations == 0 && !conditional_test.rejects(config.alpha);
    Ok(Matern3Report {
        seed,
        config: config.clone(),
        max_chain_residual,
        hard_core_violations,
        conditional_mean_count,
        conditional_expected: expected,
        conditional_test,
        passed,
    })
}
