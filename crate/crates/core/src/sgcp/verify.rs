//! Monte Carlo experiments checking the thinning construction against a
//! grid-discretized Cox process, and comparing conditional samplers when
//! nothing is observed.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::Serialize;

use super::bdm::{log_acceptance_ratio, propose_kind, BdmChain, BdmControls, MoveKind, Proposal};
use super::flawed::{sample_conditional_flawed_goncalves, sample_conditional_flawed_rao};
use super::{log_conditional_density_unnorm, scalar_pattern, simulate_sgcp, AugmentedState, SgcpParams};
use crate::error::Result;
use crate::gp::{conditional_gaussian, expit, CholeskyState, GridGpSampler, Kernel};
use crate::pattern::{distance, sample_poisson, Domain, MarkedPattern, Point};
use crate::rng::Rng;
use crate::stats::{batch_means, mean_se, poisson_gof, two_sample_chi_square, z_test, Estimate, TestResult};

/// A Cox process draw with intensity `λ · expit(g + m)` held constant on each
/// grid cell, `g` drawn exactly at the cell midpoints.
pub fn grid_cox_pattern(rng: &mut Rng, sampler: &mut GridGpSampler, params: &SgcpParams, res: usize) -> Vec<Point> {
    let field = sampler.sample(rng);
    let mut cumulative = Vec::with_capacity(field.len());
    let mut acc = 0.0;
    for g in &field {
        acc += expit(g + params.mean);
        cumulative.push(acc);
    }
    let n = sample_poisson(rng, params.lambda * params.dom.cell_volume(res) * acc);
    let dom = &params.dom;
    let hx = dom.side(0) / res as f64;
    let hy = if dom.dim() == 2 { dom.side(1) / res as f64 } else { 0.0 };
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let cell = cumulative.partition_point(|c| *c <= u).min(field.len() - 1);
            let (i, j) = (cell % res, cell / res);
            let x = dom.lower()[0] + (i as f64 + rng.random::<f64>()) * hx;
            let y = if dom.dim() == 2 {
                dom.lower()[1] + (j as f64 + rng.random::<f64>()) * hy
            } else {
                0.0
            };
            [x, y]
        })
        .collect()
}

/// Number of unordered pairs closer than each radius (the numerator of
/// Ripley's K without edge correction).
pub fn pair_counts(points: &[Point], radii: &[f64]) -> Vec<usize> {
    let mut out = vec![0; radii.len()];
    for i in 0..points.len() {
        for j in 0..i {
            let d = distance(&points[i], &points[j]);
            for (k, r) in radii.iter().enumerate() {
                if d < *r {
                    out[k] += 1;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct AppendixBReport {
    pub seed: u64,
    pub params: SgcpParams,
    pub n_reps: usize,
    pub grid_res: usize,
    /// Grid windows per axis cut from each torus draw.
    pub windows: usize,
    /// Largest field correlation between points of distinct windows.
    pub window_correlation: f64,
    pub mean_count_thinning: f64,
    pub mean_count_grid: f64,
    pub count_test: TestResult,
    pub radii: Vec<f64>,
    pub pair_count_tests: Vec<TestResult>,
}

impl AppendixBReport {
    pub fn passed(&self, alpha: f64) -> bool {
        !self.count_test.rejects(alpha) && self.pair_count_tests.iter().all(|t| !t.rejects(alpha))
    }
}

/// Compares observed patterns from the thinning simulation against direct
/// simulation of the Cox process on a grid: counts and pair counts at each
/// radius, two-sample chi-square tests. With `windows > 1` several grid
/// fields are read from each torus draw; see [`GridGpSampler::with_windows`].
pub fn verify_appendix_b(
    rng: &mut Rng,
    params: &SgcpParams,
    n_reps: usize,
    grid_res: usize,
    windows: usize,
    radii: &[f64],
) -> Result<AppendixBReport> {
    let seed = rng.seed();
    let mut rng_a = rng.fork();
    let mut rng_b = rng.fork();
    let mut counts_a = Vec::with_capacity(n_reps);
    let mut pairs_a = vec![Vec::with_capacity(n_reps); radii.len()];
    for _ in 0..n_reps {
        let (_, observed) = simulate_sgcp(&mut rng_a, params)?;
        counts_a.push(observed.len());
        for (k, c) in pair_counts(observed.locations(), radii).into_iter().enumerate() {
            pairs_a[k].push(c);
        }
    }
    let mut sampler = GridGpSampler::with_windows(&params.kernel, &params.dom, grid_res, windows)?;
    let window_correlation = params.kernel.at_distance(sampler.window_gap()) / params.kernel.variance;
    let mut counts_b = Vec::with_capacity(n_reps);
    let mut pairs_b = vec![Vec::with_capacity(n_reps); radii.len()];
    for _ in 0..n_reps {
        let pts = grid_cox_pattern(&mut rng_b, &mut sampler, params, grid_res);
        counts_b.push(pts.len());
        for (k, c) in pair_counts(&pts, radii).into_iter().enumerate() {
            pairs_b[k].push(c);
        }
    }
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len().max(1) as f64;
    Ok(AppendixBReport {
        seed,
        params: params.clone(),
        n_reps,
        grid_res,
        windows,
        window_correlation,
        mean_count_thinning: mean(&counts_a),
        mean_count_grid: mean(&counts_b),
        count_test: two_sample_chi_square(&counts_a, &counts_b),
        radii: radii.to_vec(),
        pair_count_tests: pairs_a
            .iter()
            .zip(&pairs_b)
            .map(|(a, b)| two_sample_chi_square(a, b))
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmptyComparisonConfig {
    pub burn_sweeps: usize,
    pub n_sweeps: usize,
    pub steps_per_sweep: usize,
    /// Keep every `thin`-th sweep for the count-law tests.
    pub thin: usize,
    /// Independent draws from each flawed sampler.
    pub n_iid: usize,
    pub batches: usize,
}

impl Default for EmptyComparisonConfig {
    fn default() -> Self {
        Self {
            burn_sweeps: 1_000,
            n_sweeps: 100_000,
            steps_per_sweep: 20,
            thin: 10,
            n_iid: 100_000,
            batches: 100,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EmptyComparison {
    pub seed: u64,
    pub config: EmptyComparisonConfig,
    /// `P(thinned = ∅ | observed = ∅)` along the birth-death-move chain.
    pub bdm_empty: Estimate,
    pub rao_empty: Estimate,
    /// z-test of the two empty-set probabilities; positive when the chain
    /// puts less mass on the empty set.
    pub difference: TestResult,
    pub bdm_lower: bool,
    pub bdm_mean_count: f64,
    pub rao_mean_count: f64,
    pub rao_vs_marginal: TestResult,
    pub goncalves_mean_count: Option<f64>,
    pub goncalves_vs_poisson: Option<TestResult>,
    pub goncalves_vs_bdm: Option<TestResult>,
}

/// Runs the conditional samplers with nothing observed. The Gonçalves recipe
/// is skipped on domains without unit area.
pub fn compare_samplers_empty(
    rng: &mut Rng,
    params: &SgcpParams,
    controls: &BdmControls,
    cfg: &EmptyComparisonConfig,
) -> Result<EmptyComparison> {
    let seed = rng.seed();
    let empty = MarkedPattern::default();
    let mut rng_chain = rng.fork();
    let mut rng_rao = rng.fork();
    let mut rng_marginal = rng.fork();
    let mut rng_gon = rng.fork();

    let mut chain = BdmChain::new(params.clone(), &empty, *controls)?;
    for _ in 0..cfg.burn_sweeps {
        chain.sweep(&mut rng_chain, cfg.steps_per_sweep)?;
    }
    let mut bdm_indicator = Vec::with_capacity(cfg.n_sweeps);
    let mut bdm_counts = Vec::new();
    let mut bdm_total = 0usize;
    for i in 0..cfg.n_sweeps {
        chain.sweep(&mut rng_chain, cfg.steps_per_sweep)?;
        let n0 = chain.state.n_thinned();
        bdm_indicator.push(f64::from(n0 == 0));
        bdm_total += n0;
        if i % cfg.thin.max(1) == 0 {
            bdm_counts.push(n0);
        }
    }

    let mut rao_counts = Vec::with_capacity(cfg.n_iid);
    let mut marginal_counts = Vec::with_capacity(cfg.n_iid);
    for _ in 0..cfg.n_iid {
        rao_counts.push(sample_conditional_flawed_rao(&mut rng_rao, &empty, params)?.len());
        marginal_counts.push(simulate_sgcp(&mut rng_marginal, params)?.0.len());
    }
    let rao_indicator: Vec<f64> = rao_counts.iter().map(|&n| f64::from(n == 0)).collect();

    let unit_area = (params.dom.volume() - 1.0).abs() < 1e-12;
    let gon_counts: Option<Vec<usize>> = if unit_area {
        Some(
            (0..cfg.n_iid)
                .map(|_| sample_conditional_flawed_goncalves(&mut rng_gon, &empty, params).map(|x| x.len()))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let bdm_empty = batch_means(&bdm_indicator, cfg.batches);
    let rao_empty = mean_se(&rao_indicator);
    let difference = z_test(rao_empty, bdm_empty);
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len().max(1) as f64;
    Ok(EmptyComparison {
        seed,
        config: *cfg,
        bdm_empty,
        rao_empty,
        bdm_lower: difference.statistic > 3.0,
        difference,
        bdm_mean_count: bdm_total as f64 / cfg.n_sweeps.max(1) as f64,
        rao_mean_count: mean(&rao_counts),
        rao_vs_marginal: two_sample_chi_square(&rao_counts, &marginal_counts),
        goncalves_mean_count: gon_counts.as_deref().map(mean),
        goncalves_vs_poisson: gon_counts.as_deref().map(|c| poisson_gof(c, params.lambda)),
        goncalves_vs_bdm: gon_counts.as_deref().map(|c| two_sample_chi_square(c, &bdm_counts)),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AppendixCReport {
    pub seed: u64,
    pub params: SgcpParams,
    pub n_reps: usize,
    pub grid_res: usize,
    /// `E[exp(−λ ∫ expit g)]`: probability that nothing is observed, and also
    /// that the flawed Rao sampler returns nothing.
    pub void_probability: Estimate,
    pub jensen_bound: f64,
    /// `(estimate − bound) / SE`.
    pub jensen_z: f64,
    /// `E[−λ ∫ expit g]`.
    pub mean_log_void: Estimate,
    pub mean_log_void_target: f64,
    pub mean_log_void_z: f64,
    /// `1 / E[exp(λ ∫ expit g)]`: the correct probability of no thinned
    /// points given that nothing is observed (delta-method SE).
    pub conditional_empty: Estimate,
    pub samplers: Option<EmptyComparison>,
}

/// GP integrals on a grid: the void-probability bound, the symmetry
/// identity and the exact empty-conditional probability; optionally the
/// sampler comparison.
pub fn verify_appendix_c(
    rng: &mut Rng,
    params: &SgcpParams,
    n_reps: usize,
    grid_res: usize,
    samplers: Option<(&BdmControls, &EmptyComparisonConfig)>,
) -> Result<AppendixCReport> {
    let seed = rng.seed();
    let mut rng_grid = rng.fork();
    let mut sampler = GridGpSampler::new(&params.kernel, &params.dom, grid_res)?;
    let cell = params.dom.cell_volume(grid_res);
    let mut void = Vec::with_capacity(n_reps);
    let mut log_void = Vec::with_capacity(n_reps);
    let mut inverse = Vec::with_capacity(n_reps);
    for _ in 0..n_reps {
        let field = sampler.sample(&mut rng_grid);
        let integral: f64 = cell * field.iter().map(|g| expit(g + params.mean)).sum::<f64>();
        let x = params.lambda * integral;
        void.push((-x).exp());
        log_void.push(-x);
        inverse.push(x.exp());
    }
    let void_probability = mean_se(&void);
    let jensen_bound = (-params.base_mass() / 2.0).exp();
    let mean_log_void = mean_se(&log_void);
    let target = -params.base_mass() / 2.0;
    let inv = mean_se(&inverse);
    let samplers = match samplers {
        Some((controls, cfg)) => Some(compare_samplers_empty(&mut rng.fork(), params, controls, cfg)?),
        None => None,
    };
    Ok(AppendixCReport {
        seed,
        params: params.clone(),
        n_reps,
        grid_res,
        jensen_z: (void_probability.mean - jensen_bound) / void_probability.se,
        void_probability,
        jensen_bound,
        mean_log_void_z: (mean_log_void.mean - target) / mean_log_void.se,
        mean_log_void,
        mean_log_void_target: target,
        conditional_empty: Estimate {
            mean: 1.0 / inv.mean,
            se: inv.se / (inv.mean * inv.mean),
        },
        samplers,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BalanceReport {
    pub seed: u64,
    pub n_pairs: usize,
    /// Largest `|log π(x) q(x→y) α(x→y) − log π(y) q(y→x) α(y→x)|`.
    pub max_residual: f64,
}

/// Checks detailed balance of the birth-death-move kernel on random small
/// states and proposals. Target and proposal densities are recomputed from
/// fresh factorizations; only the acceptance ratios come from the sampler.
/// Intensities vary over (1, 10) and two control settings alternate.
pub fn verify_detailed_balance(rng: &mut Rng, n_pairs: usize) -> Result<BalanceReport> {
    let seed = rng.seed();
    let controls = [
        BdmControls::default(),
        BdmControls { move_probs: [0.5, 0.2, 0.3], move_scale: 0.2 },
    ];
    let mut checked = 0;
    let mut max_residual: f64 = 0.0;
    while checked < n_pairs {
        let p = SgcpParams::new(1.0 + 9.0 * rng.random::<f64>(), Kernel::exponential(2.0, 1.0)?, Domain::unit_square())?;
        let c = &controls[checked % 2];
        let x = random_state(rng, &p)?;
        let kind = [MoveKind::Birth, MoveKind::Death, MoveKind::Move][checked % 3];
        let Some(prop) = propose_kind(rng, &x, &p, c, kind)? else { continue };
        let Some(r) = balance_residual(&p, c, &x, &prop)? else { continue };
        max_residual = max_residual.max(if r.is_nan() { f64::INFINITY } else { r.abs() });
        checked += 1;
    }
    Ok(BalanceReport { seed, n_pairs, max_residual })
}

fn random_state(rng: &mut Rng, p: &SgcpParams) -> Result<AugmentedState> {
    let n1 = rng.random_range(0..4);
    let n0 = rng.random_range(0..5);
    let mk = |rng: &mut Rng, n: usize| {
        let l: Vec<Point> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        let g: Vec<f64> = (0..n).map(|_| 3.0 * rng.random::<f64>() - 1.5).collect();
        scalar_pattern(&l, &g)
    };
    AugmentedState::new(p, &mk(rng, n1), &mk(rng, n0))
}

fn normal_logpdf(x: f64, m: f64, sd: f64) -> f64 {
    -0.5 * ((x - m) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// Conditional density of `g` at `p` given the listed values, from a
/// fresh factorization.
fn cond_logpdf(params: &SgcpParams, locs: &[Point], vals: &[f64], p: Point, g: f64) -> Result<f64> {
    let chol = CholeskyState::from_points(params.kernel, params.kernel.default_jitter(), locs)?;
    let (m, v) = conditional_gaussian(&chol, vals, &[p])?;
    Ok(normal_logpdf(g, m[0], v[(0, 0)].sqrt()))
}

/// `log π(x) + log q(x → x′) + log α(x → x′)` minus the reverse, with
/// every term evaluated from scratch except the acceptance ratios.
fn balance_residual(
    p: &SgcpParams,
    c: &BdmControls,
    x: &AugmentedState,
    prop: &Proposal,
) -> Result<Option<f64>> {
    let [pb, pd, pm] = c.move_probs;
    let obs = x.observed();
    let (ol, og) = (x.observed_locations().to_vec(), x.observed_marks().to_vec());
    let (tl, tg) = (x.thinned_locations().to_vec(), x.thinned_marks().to_vec());
    let n0 = tl.len();
    let area = p.dom.volume();
    let all = |tl: &[Point], tg: &[f64]| {
        let mut l = ol.clone();
        l.extend_from_slice(tl);
        let mut g = og.clone();
        g.extend_from_slice(tg);
        (l, g)
    };
    let (x2, fwd_q, back_q, reverse) = match prop {
        Proposal::Birth { location, mark } => {
            let (l, g) = all(&tl, &tg);
            let mut tl2 = tl.clone();
            tl2.push(*location);
            let mut tg2 = tg.clone();
            tg2.push(*mark);
            let q = pb.ln() - area.ln() + cond_logpdf(p, &l, &g, *location, *mark)? - ((n0 + 1) as f64).ln();
            let back = pd.ln() - ((n0 + 1) as f64).ln();
            ((tl2, tg2), q, back, Proposal::Death { index: n0 })
        }
        Proposal::Death { index } => {
            let mut tl2 = tl.clone();
            let gone = tl2.remove(*index);
            let mut tg2 = tg.clone();
            let g_gone = tg2.remove(*index);
            let (l, g) = all(&tl2, &tg2);
            let q = pd.ln() - (n0 as f64).ln();
            let back = pb.ln() - area.ln() + cond_logpdf(p, &l, &g, gone, g_gone)? - (n0 as f64).ln();
            ((tl2, tg2), q, back, Proposal::Birth { location: gone, mark: g_gone })
        }
        Proposal::Move { index, location, mark } => {
            let mut tl2 = tl.clone();
            let old = tl2.remove(*index);
            let mut tg2 = tg.clone();
            let g_old = tg2.remove(*index);
            let (l, g) = all(&tl2, &tg2);
            let rw = (0..2).map(|k| normal_logpdf(location[k] - old[k], 0.0, c.move_scale * p.dom.diameter())).sum::<f64>();
            let q = pm.ln() - (n0 as f64).ln() + rw + cond_logpdf(p, &l, &g, *location, *mark)?;
            let back = pm.ln() - (n0 as f64).ln() + rw + cond_logpdf(p, &l, &g, old, g_old)?;
            tl2.push(*location);
            tg2.push(*mark);
            let rev = Proposal::Move { index: n0 - 1, location: old, mark: g_old };
            ((tl2, tg2), q, back, rev)
        }
    };
    let Ok(y) = AugmentedState::new(p, &obs, &scalar_pattern(&x2.0, &x2.1)) else { return Ok(None) };
    let pi_x = log_conditional_density_unnorm(&x.thinned(), &obs, p)?;
    let pi_y = log_conditional_density_unnorm(&y.thinned(), &obs, p)?;
    let a_fwd = log_acceptance_ratio(x, prop, p, c).min(0.0);
    let a_back = log_acceptance_ratio(&y, &reverse, p, c).min(0.0);
    Ok(Some((pi_x + fwd_q + a_fwd) - (pi_y + back_q + a_back)))
}
