//! Joint-distribution check of the Gibbs sampler.
//!
//! Forward draws take parameters from the priors and simulate a complete
//! state. The successive-conditional chain alternates a Gibbs sweep with a
//! fresh simulation of points and field values given the current
//! parameters. Both leave the same joint law invariant, so summaries of the
//! two samples must agree.

use serde::{Deserialize, Serialize};

use super::gibbs::{gibbs_step, GibbsControls, Priors};
use super::{simulate_state, GibbsState, MtsgcpParams};
use crate::error::{param, Result};
use crate::pattern::Domain;
use crate::rng::Rng;
use crate::stats::{batch_means, mean_se, z_test};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GewekeConfig {
    pub p: usize,
    pub dom: Domain,
    pub priors: Priors,
    pub controls: GibbsControls,
    /// Samples kept from each simulator.
    pub n_samples: usize,
    /// Gibbs sweeps between kept chain samples.
    pub thin: usize,
    /// Sweeps discarded before the first kept chain sample.
    pub burn: usize,
    pub n_batches: usize,
    pub alpha: f64,
}

impl Default for GewekeConfig {
    /// Two types on the unit square with tight priors, so that states stay
    /// small and the chain mixes quickly.
    fn default() -> Self {
        Self {
            p: 2,
            dom: Domain::unit_square(),
            priors: Priors {
                lambda_shape: 50.0,
                lambda_rate: 2.5,
                a_sd: 0.5,
                rho_shape: 20.0,
                rho_rate: 10.0,
                mu_mean: 0.0,
                mu_sd: 0.5,
            },
            controls: GibbsControls::default(),
            n_samples: 1000,
            thin: 5,
            burn: 50,
            n_batches: 50,
            alpha: 0.005,
        }
    }
}

/// Comparison of one moment between the two samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTest {
    pub quantity: String,
    pub moment: u32,
    pub forward: f64,
    pub forward_se: f64,
    pub chain: f64,
    pub chain_se: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub n_samples: usize,
    pub alpha: f64,
    pub tests: Vec<MomentTest>,
    pub hmc_accept_mean: f64,
    pub passed: bool,
}

const QUANTITIES: [&str; 3] = ["lambda", "n_total", "aat_11"];

fn summaries(state: &GibbsState) -> [f64; 3] {
    [state.lambda(), state.len() as f64, state.lmc().aat()[(0, 0)]]
}

fn forward_state(rng: &mut Rng, config: &GewekeConfig) -> Result<GibbsState> {
    let (lambda, lmc) = config.priors.sample(rng, config.p)?;
    simulate_state(rng, &MtsgcpParams::new(lambda, lmc, config.dom.clone())?)
}

/// Runs both simulators and compares means and second moments of `λ`, the
/// total number of points and `(A Aᵀ)_11` by z-tests. Chain standard errors
/// use batch means.
pub fn geweke_test(rng: &mut Rng, config: &GewekeConfig) -> Result<GewekeReport> {
    config.priors.validate()?;
    config.controls.validate()?;
    if config.p == 0 || config.thin == 0 || config.n_batches < 2 || config.n_samples < 2 * config.n_batches {
        return Err(param("Geweke run needs p ≥ 1, thin ≥ 1 and at least two samples per batch"));
    }

    let mut forward = (0..3).map(|_| Vec::with_capacity(config.n_samples)).collect::<Vec<Vec<f64>>>();
    for _ in 0..config.n_samples {
        for (k, v) in summaries(&forward_state(rng, config)?).into_iter().enumerate() {
            forward[k].push(v);
        }
    }

    let mut chain = (0..3).map(|_| Vec::with_capacity(config.n_samples)).collect::<Vec<Vec<f64>>>();
    let mut state = forward_state(rng, config)?;
    state.hmc_step = config.controls.hmc_step;
    let mut accept_sum = 0.0;
    let mut sweeps = 0usize;
    let total = config.burn + config.n_samples * config.thin;
    for it in 0..total {
        let report = gibbs_step(rng, &mut state, &config.priors, &config.controls, false)?;
        accept_sum += report.hmc_accept;
        sweeps += 1;
        let step = state.hmc_step;
        let iteration = state.iteration;
        state = simulate_state(rng, &state.params())?;
        state.hmc_step = step;
        state.iteration = iteration;
        if it >= config.burn && (it - config.burn + 1).is_multiple_of(config.thin) {
            for (k, v) in summaries(&state).into_iter().enumerate() {
                chain[k].push(v);
            }
        }
    }

    let mut tests = Vec::new();
    for (k, name) in QUANTITIES.iter().enumerate() {
        for moment in [1u32, 2] {
            let f: Vec<f64> = forward[k].iter().map(|x| x.powi(moment as i32)).collect();
            let c: Vec<f64> = chain[k].iter().map(|x| x.powi(moment as i32)).collect();
            let ef = mean_se(&f);
            let ec = batch_means(&c, config.n_batches);
            let t = z_test(ef, ec);
            tests.push(MomentTest {
                quantity: (*name).to_string(),
                moment,
                forward: ef.mean,
                forward_se: ef.se,
                chain: ec.mean,
                chain_se: ec.se,
                z: t.statistic,
                p_value: t.p_value,
            });
        }
    }
    let passed = tests.iter().all(|t| t.p_value > config.alpha);
    Ok(GewekeReport {
        n_samples: config.n_samples,
        alpha: config.alpha,
        tests,
        hmc_accept_mean: accept_sum / sweeps.max(1) as f64,
        passed,
    })
}
