//! Gibbs sampler for the multitype process given the observed points.
//!
//! One sweep updates, in order: the thinned points by birth-death-move, all
//! field values by Hamiltonian Monte Carlo in whitened latent coordinates,
//! `A` and each range by random-walk Metropolis, `λ` from its gamma
//! conditional and `μ` from its Gaussian conditional.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{log_joint_density_mt, log_sigma, sigma, std_normal, GibbsState};
use crate::error::{param, Error, Result};
use crate::gp::{mvn_logpdf, CholeskyState, Kernel, LmcParams};
use crate::pattern::{Domain, Point, PointPattern};
use crate::rng::Rng;
use crate::sgcp::{BdmControls, BdmStats, MoveKind};

pub type MtBdmStats = BdmStats;

/// Gamma priors are shape/rate; normal priors are mean/sd.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Priors {
    pub lambda_shape: f64,
    pub lambda_rate: f64,
    /// Standard deviation of every entry of `A`.
    pub a_sd: f64,
    pub rho_shape: f64,
    pub rho_rate: f64,
    pub mu_mean: f64,
    pub mu_sd: f64,
}

impl Priors {
    /// Weak defaults. The range prior has rate equal to the domain diameter,
    /// so `ρ · diameter` is a unit exponential.
    pub fn default_for(dom: &Domain) -> Self {
        Self {
            lambda_shape: 0.1,
            lambda_rate: 0.1,
            a_sd: 1.0,
            rho_shape: 1.0,
            rho_rate: dom.diameter(),
            mu_mean: 0.0,
            mu_sd: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.lambda_shape,
            self.lambda_rate,
            self.a_sd,
            self.rho_shape,
            self.rho_rate,
            self.mu_sd,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !self.mu_mean.is_finite() {
            return Err(param("prior hyperparameters must be positive and finite"));
        }
        Ok(())
    }

    fn log_a(&self, a: &DMatrix<f64>) -> f64 {
        -0.5 * a.iter().map(|x| x * x).sum::<f64>() / (self.a_sd * self.a_sd)
    }

    /// Log prior of `ln ρ` (gamma density times the Jacobian `ρ`).
    fn log_log_rho(&self, rho: f64) -> f64 {
        self.rho_shape * rho.ln() - self.rho_rate * rho
    }

    /// Draws `(λ, A, ρ, μ)` from the priors, redrawing singular `A`.
    pub fn sample(&self, rng: &mut Rng, p: usize) -> Result<(f64, LmcParams)> {
        self.validate()?;
        let lambda = Gamma::new(self.lambda_shape, 1.0 / self.lambda_rate)
            .expect("validated")
            .sample(rng);
        let rho_dist = Gamma::new(self.rho_shape, 1.0 / self.rho_rate).expect("validated");
        let entry = Normal::new(0.0, self.a_sd).expect("validated");
        let mu_dist = Normal::new(self.mu_mean, self.mu_sd).expect("validated");
        loop {
            let a = DMatrix::from_fn(p, p, |_, _| entry.sample(rng));
            let rho = (0..p).map(|_| rho_dist.sample(rng)).collect();
            let mu = (0..p).map(|_| mu_dist.sample(rng)).collect();
            if let Ok(lmc) = LmcParams::new(a, rho, mu) {
                return Ok((lambda, lmc));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsControls {
    pub bdm: BdmControls,
    /// Birth-death-move steps per sweep are `max(min_bdm_steps, n_thinned)`.
    pub min_bdm_steps: usize,
    /// Initial leapfrog step size; tuned during burn-in.
    pub hmc_step: f64,
    pub hmc_leapfrog: usize,
    /// Acceptance rate the step size is tuned towards.
    pub hmc_target: f64,
    /// Random-walk scale for the entries of `A`.
    pub a_scale: f64,
    /// Random-walk scale for `ln ρ`.
    pub rho_scale: f64,
    /// Keep locations and field values of every kept iteration in the trace.
    pub store_fields: bool,
}

impl Default for GibbsControls {
    fn default() -> Self {
        Self {
            bdm: BdmControls::default(),
            min_bdm_steps: 20,
            hmc_step: 0.05,
            hmc_leapfrog: 10,
            hmc_target: 0.7,
            a_scale: 0.1,
            rho_scale: 0.2,
            store_fields: false,
        }
    }
}

impl GibbsControls {
    pub fn validate(&self) -> Result<()> {
        self.bdm.validate()?;
        if !(self.hmc_step >= 0.0 && self.hmc_step.is_finite()) {
            return Err(param("leapfrog step size must be non-negative"));
        }
        if !(self.hmc_target > 0.0 && self.hmc_target < 1.0) {
            return Err(param("target acceptance must lie in (0, 1)"));
        }
        if !(self.a_scale > 0.0 && self.rho_scale > 0.0) {
            return Err(param("random-walk scales must be positive"));
        }
        Ok(())
    }
}

/// What happened in one sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub bdm: BdmStats,
    pub hmc_accept: f64,
    pub a_accepted: bool,
    pub rho_accepted: Vec<bool>,
}

// ---------------------------------------------------------------------------
// Birth-death-move on the thinned points

/// Factor rows and latent values needed to apply a birth or move.
#[derive(Clone, Debug)]
pub(crate) struct Prepared {
    latent: Vec<f64>,
    rows: Vec<Vec<f64>>,
    sds: Vec<f64>,
    rest: Option<Vec<CholeskyState<Kernel>>>,
}

#[derive(Clone, Debug)]
pub(crate) enum MtProposal {
    Birth { location: Point, mark: Vec<f64>, prep: Prepared },
    Death { index: usize },
    Move { index: usize, location: Point, mark: Vec<f64>, prep: Prepared },
}

fn draw_latent(rng: &mut Rng, means: &[f64], sds: &[f64]) -> Vec<f64> {
    means
        .iter()
        .zip(sds)
        .map(|(m, s)| m + s * std_normal(rng))
        .collect()
}

fn removed_factors(state: &GibbsState, i: usize) -> Result<Vec<CholeskyState<Kernel>>> {
    state.chols().iter().map(|c| c.removed(i)).collect()
}

pub(crate) fn propose_mt(
    rng: &mut Rng,
    state: &GibbsState,
    controls: &BdmControls,
    kind: MoveKind,
) -> Result<Option<MtProposal>> {
    let n0 = state.n_thinned();
    let dom = state.dom();
    let soft = |r: Result<Option<MtProposal>>| match r {
        Err(Error::NotPositiveDefinite { .. }) => Ok(None),
        other => other,
    };
    match kind {
        MoveKind::Birth => soft((|| {
            let location = dom.sample_uniform(rng);
            let (means, sds, rows) = state.latent_conditional(&location)?;
            let latent = draw_latent(rng, &means, &sds);
            let mark = state.field_from_latent(&latent);
            Ok(Some(MtProposal::Birth {
                location,
                mark,
                prep: Prepared { latent, rows, sds, rest: None },
            }))
        })()),
        MoveKind::Death => {
            if n0 == 0 {
                return Ok(None);
            }
            Ok(Some(MtProposal::Death { index: rng.random_range(0..n0) }))
        }
        MoveKind::Move => {
            if n0 == 0 {
                return Ok(None);
            }
            let index = rng.random_range(0..n0);
            let i = state.n_observed() + index;
            let step = Normal::new(0.0, controls.move_scale * dom.diameter()).expect("positive scale");
            let mut location = state.locations()[i];
            for x in location.iter_mut().take(dom.dim()) {
                *x += step.sample(rng);
            }
            if !dom.contains(&location) {
                return Ok(None);
            }
            soft((|| {
                let rest = removed_factors(state, i)?;
                let p = state.p();
                let mut means = Vec::with_capacity(p);
                let mut sds = Vec::with_capacity(p);
                let mut rows = Vec::with_capacity(p);
                for (j, chol) in rest.iter().enumerate() {
                    let (row, sd) = chol.extension_row(&location)?;
                    let mut w = state.latent(j).to_vec();
                    w.remove(i);
                    let white = chol.solve_lower(&w);
                    means.push(row.iter().zip(&white).map(|(a, b)| a * b).sum());
                    sds.push(sd);
                    rows.push(row);
                }
                let latent = draw_latent(rng, &means, &sds);
                let mark = state.field_from_latent(&latent);
                Ok(Some(MtProposal::Move {
                    index,
                    location,
                    mark,
                    prep: Prepared { latent, rows, sds, rest: Some(rest) },
                }))
            })())
        }
    }
}

pub(crate) fn log_ratio_mt(state: &GibbsState, proposal: &MtProposal, controls: &BdmControls) -> f64 {
    let [pb, pd, _] = controls.move_probs;
    let log_mass = (state.lambda() * state.dom().volume()).ln();
    let n0 = state.n_thinned() as f64;
    match proposal {
        MtProposal::Birth { mark, .. } => log_mass + log_sigma(mark, 0) - (n0 + 1.0).ln() + pd.ln() - pb.ln(),
        MtProposal::Death { index } => {
            let g = state.mark(state.n_observed() + index);
            -(log_mass + log_sigma(g, 0) - n0.ln() + pd.ln() - pb.ln())
        }
        MtProposal::Move { index, location, mark, .. } => {
            if !state.dom().contains(location) {
                return f64::NEG_INFINITY;
            }
            log_sigma(mark, 0) - log_sigma(state.mark(state.n_observed() + index), 0)
        }
    }
}

pub(crate) fn apply_mt(state: &mut GibbsState, proposal: MtProposal) -> Result<()> {
    match proposal {
        MtProposal::Birth { location, prep, .. } => {
            state.push_thinned(location, &prep.latent, prep.rows, &prep.sds);
        }
        MtProposal::Death { index } => {
            let rest = removed_factors(state, state.n_observed() + index)?;
            state.remove_thinned_with(index, rest);
        }
        MtProposal::Move { index, location, prep, .. } => {
            state.remove_thinned_with(index, prep.rest.expect("move carries reduced factors"));
            state.push_thinned(location, &prep.latent, prep.rows, &prep.sds);
        }
    }
    Ok(())
}

fn choose_kind(rng: &mut Rng, probs: &[f64; 3]) -> MoveKind {
    let u: f64 = rng.random();
    if u < probs[0] {
        MoveKind::Birth
    } else if u < probs[0] + probs[1] {
        MoveKind::Death
    } else {
        MoveKind::Move
    }
}

pub(crate) fn bdm_step_mt(rng: &mut Rng, state: &mut GibbsState, controls: &BdmControls, stats: &mut BdmStats) -> Result<bool> {
    let kind = choose_kind(rng, &controls.move_probs);
    stats.proposed[kind as usize] += 1;
    let Some(proposal) = propose_mt(rng, state, controls, kind)? else {
        return Ok(false);
    };
    let log_r = log_ratio_mt(state, &proposal, controls);
    let u: f64 = rng.random();
    if u.ln() >= log_r {
        return Ok(false);
    }
    match apply_mt(state, proposal) {
        Ok(()) => {
            stats.accepted[kind as usize] += 1;
            Ok(true)
        }
        Err(Error::NotPositiveDefinite { .. }) => {
            debug!("rejected {kind:?}: factor update lost positive definiteness");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo on the field values

/// Potential `½|z|² − Σ ln σ_c(g)` and its gradient in whitened coordinates
/// `w_j = L_j z_j`.
pub(super) fn potential(state: &GibbsState, z: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let p = state.p();
    let n = state.len();
    let w: Vec<Vec<f64>> = (0..p).map(|j| state.chol(j).mul_lower(&z[j])).collect();
    let a = state.lmc().a();
    let mut u = 0.5 * z.iter().flatten().map(|x| x * x).sum::<f64>();
    let mut dw = vec![vec![0.0; n]; p];
    let mut wi = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            wi[j] = w[j][i];
        }
        let g = state.field_from_latent(&wi);
        let c = state.colours()[i] as usize;
        u -= log_sigma(&g, c);
        let s = sigma(&g);
        for j in 0..p {
            // ∂/∂w_j = Σ_k A_kj ∂/∂g_k
            dw[j][i] = (0..p)
                .map(|k| a[(k, j)] * (f64::from(u8::from(c == k + 1)) - s[k + 1]))
                .sum();
        }
    }
    let grad = (0..p)
        .map(|j| {
            let back = state.chol(j).mul_upper(&dw[j]);
            z[j].iter().zip(back).map(|(zi, b)| zi - b).collect()
        })
        .collect();
    (u, grad)
}

/// One HMC transition of all field values. Returns the acceptance
/// probability.
pub(crate) fn hmc_update(rng: &mut Rng, state: &mut GibbsState, step: f64, n_leapfrog: usize) -> f64 {
    let p = state.p();
    if state.is_empty() {
        return 1.0;
    }
    let z0: Vec<Vec<f64>> = (0..p).map(|j| state.chol(j).solve_lower(state.latent(j))).collect();
    let m0: Vec<Vec<f64>> = z0
        .iter()
        .map(|zj| zj.iter().map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let (u0, mut grad) = potential(state, &z0);
    let mut z = z0.clone();
    let mut m = m0.clone();
    let mut u = u0;
    for _ in 0..n_leapfrog {
        for j in 0..p {
            for (mi, gi) in m[j].iter_mut().zip(&grad[j]) {
                *mi -= 0.5 * step * gi;
            }
            for (zi, mi) in z[j].iter_mut().zip(&m[j]) {
                *zi += step * mi;
            }
        }
        (u, grad) = potential(state, &z);
        for j in 0..p {
            for (mi, gi) in m[j].iter_mut().zip(&grad[j]) {
                *mi -= 0.5 * step * gi;
            }
        }
    }
    let kinetic = |m: &[Vec<f64>]| 0.5 * m.iter().flatten().map(|x| x * x).sum::<f64>();
    let log_accept = (u0 + kinetic(&m0)) - (u + kinetic(&m));
    let accept = if log_accept.is_nan() { 0.0 } else { log_accept.exp().min(1.0) };
    let uniform: f64 = rng.random();
    if uniform < accept && step > 0.0 {
        let w = (0..p).map(|j| state.chol(j).mul_lower(&z[j])).collect();
        state.set_latent(w);
    }
    accept
}

// ---------------------------------------------------------------------------
// Parameter updates

fn latent_log_density(state: &GibbsState, w: &[Vec<f64>]) -> f64 {
    let zeros = vec![0.0; state.len()];
    w.iter()
        .enumerate()
        .map(|(j, wj)| mvn_logpdf(wj, &zeros, state.chol(j)))
        .sum()
}

fn latent_for(state: &GibbsState, a_inv: &DMatrix<f64>, mu: &[f64]) -> Vec<Vec<f64>> {
    let p = state.p();
    let n = state.len();
    (0..p)
        .map(|j| {
            (0..n)
                .map(|i| (0..p).map(|k| a_inv[(j, k)] * (state.mark(i)[k] - mu[k])).sum())
                .collect()
        })
        .collect()
}

fn update_a(rng: &mut Rng, state: &mut GibbsState, priors: &Priors, scale: f64) -> Result<bool> {
    let p = state.p();
    let n = state.len() as f64;
    let current = state.lmc().a().clone();
    let step = Normal::new(0.0, scale).expect("positive scale");
    let proposal = DMatrix::from_fn(p, p, |r, c| current[(r, c)] + step.sample(rng));
    let det = proposal.determinant();
    if det.abs() <= crate::gp::MIN_ABS_DET {
        return Ok(false);
    }
    let Some(inv) = proposal.clone().try_inverse() else {
        return Ok(false);
    };
    let w_new = latent_for(state, &inv, state.lmc().mu());
    let log_new = latent_log_density(state, &w_new) - n * det.abs().ln() + priors.log_a(&proposal);
    let w_old: Vec<Vec<f64>> = (0..p).map(|j| state.latent(j).to_vec()).collect();
    let log_old = latent_log_density(state, &w_old) - n * current.determinant().abs().ln() + priors.log_a(&current);
    let u: f64 = rng.random();
    if u.ln() < log_new - log_old {
        state.set_a(proposal)?;
        Ok(true)
    } else {
        Ok(false)
    }
}

fn update_rho(rng: &mut Rng, state: &mut GibbsState, priors: &Priors, scale: f64, j: usize) -> Result<bool> {
    let rho = state.lmc().rho()[j];
    let proposal = rho * (scale * std_normal(rng)).exp();
    let kernel = Kernel::exponential(proposal, 1.0)?;
    let chol = match state.chol(j).with_covariance(kernel) {
        Ok(c) => c,
        Err(Error::NotPositiveDefinite { .. }) => {
            warn!("range proposal {proposal} for channel {j} rejected: kernel matrix not positive definite");
            return Ok(false);
        }
        Err(e) => return Err(e),
    };
    let zeros = vec![0.0; state.len()];
    let log_new = mvn_logpdf(state.latent(j), &zeros, &chol) + priors.log_log_rho(proposal);
    let log_old = mvn_logpdf(state.latent(j), &zeros, state.chol(j)) + priors.log_log_rho(rho);
    let u: f64 = rng.random();
    if u.ln() < log_new - log_old {
        state.set_rho(j, proposal, chol)?;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Shape and rate of the gamma conditional of `λ` given `n_total` points.
pub fn lambda_conditional(priors: &Priors, n_total: usize, area: f64) -> (f64, f64) {
    (priors.lambda_shape + n_total as f64, priors.lambda_rate + area)
}

/// Mean and covariance of the Gaussian conditional of `μ` given the field
/// values, `A` and the ranges.
pub fn mu_conditional(state: &GibbsState, priors: &Priors) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = state.p();
    let n = state.len();
    let a_inv = state.a_inv();
    let mut q = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    if n > 0 {
        let ones = vec![1.0; n];
        // u_j = (A⁻¹ g)_j = w_j + (A⁻¹ μ)_j
        let u = latent_for(state, a_inv, &vec![0.0; p]);
        for j in 0..p {
            let c_inv_one = state.chol(j).solve(&ones);
            q[(j, j)] = c_inv_one.iter().sum();
            b[j] = c_inv_one.iter().zip(&u[j]).map(|(x, y)| x * y).sum();
        }
    }
    let prior_prec = 1.0 / (priors.mu_sd * priors.mu_sd);
    let precision = a_inv.transpose() * &q * a_inv + DMatrix::identity(p, p) * prior_prec;
    let linear = a_inv.transpose() * b + DVector::from_element(p, priors.mu_mean * prior_prec);
    let cov = precision
        .try_inverse()
        .ok_or_else(|| param("conditional precision of the mean is singular"))?;
    let mean = &cov * linear;
    Ok((mean, cov))
}

fn update_mu(rng: &mut Rng, state: &mut GibbsState, priors: &Priors) -> Result<()> {
    let (mean, cov) = mu_conditional(state, priors)?;
    let p = state.p();
    let sym = (&cov + cov.transpose()) * 0.5;
    let l = sym
        .cholesky()
        .ok_or_else(|| param("conditional covariance of the mean is not positive definite"))?
        .l();
    let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(rng)));
    let draw = mean + l * z;
    state.set_mu(draw.iter().copied().collect())
}

/// One full sweep. With `adapt` the leapfrog step size moves towards the
/// target acceptance rate.
pub fn gibbs_step(
    rng: &mut Rng,
    state: &mut GibbsState,
    priors: &Priors,
    controls: &GibbsControls,
    adapt: bool,
) -> Result<StepReport> {
    let mut report = StepReport::default();
    let steps = controls.min_bdm_steps.max(state.n_thinned());
    for _ in 0..steps {
        bdm_step_mt(rng, state, &controls.bdm, &mut report.bdm)?;
    }

    let step = state.hmc_step;
    report.hmc_accept = hmc_update(rng, state, step, controls.hmc_leapfrog);
    state.iteration += 1;
    if adapt && step > 0.0 {
        let gain = (state.iteration as f64).powf(-0.6);
        state.hmc_step = (step * (gain * (report.hmc_accept - controls.hmc_target)).exp()).clamp(1e-6, 10.0);
    }

    report.a_accepted = update_a(rng, state, priors, controls.a_scale)?;
    for j in 0..state.p() {
        report.rho_accepted.push(update_rho(rng, state, priors, controls.rho_scale, j)?);
    }

    let (shape, rate) = lambda_conditional(priors, state.len(), state.dom().volume());
    state.set_lambda(Gamma::new(shape, 1.0 / rate).expect("positive").sample(rng));
    update_mu(rng, state, priors)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Traces and the driver

/// Locations (all points, observed first) and point-major field values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub locations: Vec<Point>,
    pub colours: Vec<u32>,
    pub marks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub lambda: f64,
    /// Rows of `A`.
    pub a: Vec<Vec<f64>>,
    /// Rows of `A Aᵀ`, invariant to rotations of `A`.
    pub aat: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    pub n_thinned: usize,
    pub log_joint: f64,
    pub hmc_step: f64,
    pub hmc_accept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Snapshot>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

impl TraceRecord {
    pub fn from_state(state: &GibbsState, iteration: usize, hmc_accept: f64, store_fields: bool) -> Self {
        Self {
            iteration,
            lambda: state.lambda(),
            a: rows(state.lmc().a()),
            aat: rows(&state.lmc().aat()),
            rho: state.lmc().rho().to_vec(),
            mu: state.lmc().mu().to_vec(),
            n_thinned: state.n_thinned(),
            log_joint: log_joint_density_mt(state),
            hmc_step: state.hmc_step(),
            hmc_accept,
            snapshot: store_fields.then(|| Snapshot {
                locations: state.locations().to_vec(),
                colours: state.colours().to_vec(),
                marks: state.marks().to_vec(),
            }),
        }
    }

    pub fn lmc(&self) -> Result<LmcParams> {
        let p = self.a.len();
        let a = DMatrix::from_fn(p, p, |r, c| self.a[r][c]);
        LmcParams::new(a, self.rho.clone(), self.mu.clone())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub bdm: BdmStats,
    pub hmc_accept_mean: f64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lmc_draws(&self) -> Result<Vec<LmcParams>> {
        self.records.iter().map(TraceRecord::lmc).collect()
    }
}

fn merge_stats(total: &mut BdmStats, step: &BdmStats) {
    for k in 0..3 {
        total.proposed[k] += step.proposed[k];
        total.accepted[k] += step.accepted[k];
    }
}

/// Runs `n_burn` adapting sweeps and then `n_iter` recorded sweeps from
/// `state`.
pub fn run_chain(
    rng: &mut Rng,
    state: &mut GibbsState,
    priors: &Priors,
    controls: &GibbsControls,
    n_iter: usize,
    n_burn: usize,
) -> Result<Trace> {
    priors.validate()?;
    controls.validate()?;
    let mut trace = Trace::default();
    for it in 0..n_burn {
        let r = gibbs_step(rng, state, priors, controls, true)?;
        if it % 100 == 0 {
            debug!("burn-in {it}: n0 = {}, step = {:.4}", state.n_thinned(), state.hmc_step());
        }
        merge_stats(&mut trace.bdm, &r.bdm);
    }
    let mut accept_sum = 0.0;
    for it in 0..n_iter {
        let r = gibbs_step(rng, state, priors, controls, false)?;
        merge_stats(&mut trace.bdm, &r.bdm);
        accept_sum += r.hmc_accept;
        trace
            .records
            .push(TraceRecord::from_state(state, it, r.hmc_accept, controls.store_fields));
    }
    trace.hmc_accept_mean = if n_iter > 0 { accept_sum / n_iter as f64 } else { 0.0 };
    Ok(trace)
}

/// Posterior sampling given one observed pattern per type.
pub fn fit(
    rng: &mut Rng,
    data: &[PointPattern],
    dom: &Domain,
    priors: &Priors,
    controls: &GibbsControls,
    n_iter: usize,
    n_burn: usize,
) -> Result<Trace> {
    for d in data {
        if let Some(q) = d.points().iter().find(|q| !dom.contains(q)) {
            return Err(Error::OutsideDomain { point: *q });
        }
    }
    let mut state = GibbsState::initial(rng, dom, data, priors)?;
    state.hmc_step = controls.hmc_step;
    run_chain(rng, &mut state, priors, controls, n_iter, n_burn)
}
