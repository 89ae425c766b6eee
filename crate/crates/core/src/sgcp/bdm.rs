//! Birth-death-move Metropolis-Hastings for the thinned points given the
//! observed ones.
//!
//! Births and moves draw the new GP value from its conditional given every
//! other stored value, so the Gaussian factors cancel and only the retention
//! terms `1 − expit(g)` survive in the acceptance ratios.

use log::debug;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AugmentedState, SgcpParams};
use crate::error::{param, Error, Result};
use crate::gp::log_expit;
use crate::pattern::{MarkedPattern, Point};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BdmControls {
    /// Probabilities of proposing a birth, a death and a move.
    pub move_probs: [f64; 3],
    /// Random-walk scale of a move as a fraction of the domain diameter.
    pub move_scale: f64,
}

impl Default for BdmControls {
    fn default() -> Self {
        Self {
            move_probs: [1.0 / 3.0; 3],
            move_scale: 0.1,
        }
    }
}

impl BdmControls {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.move_probs.iter().sum();
        if self.move_probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(param("move probabilities must be non-negative and sum to one"));
        }
        if self.move_probs[0] > 0.0 && self.move_probs[1] == 0.0 || self.move_probs[1] > 0.0 && self.move_probs[0] == 0.0 {
            return Err(param("births and deaths must both be possible or both be disabled"));
        }
        if !(self.move_scale > 0.0 && self.move_scale.is_finite()) {
            return Err(param("move scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Birth,
    Death,
    Move,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Proposal {
    Birth { location: Point, mark: f64 },
    Death { index: usize },
    Move { index: usize, location: Point, mark: f64 },
}

impl Proposal {
    pub fn kind(&self) -> MoveKind {
        match self {
            Proposal::Birth { .. } => MoveKind::Birth,
            Proposal::Death { .. } => MoveKind::Death,
            Proposal::Move { .. } => MoveKind::Move,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BdmStats {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
}

impl BdmStats {
    pub fn acceptance_rate(&self, kind: MoveKind) -> f64 {
        let k = kind as usize;
        self.accepted[k] as f64 / self.proposed[k].max(1) as f64
    }
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

/// Draws a proposal of the given kind. `None` means the proposal is void:
/// a death or move with no thinned points, a move leaving the domain, or a
/// new location numerically coincident with a stored one.
pub fn propose_kind(
    rng: &mut Rng,
    state: &AugmentedState,
    params: &SgcpParams,
    controls: &BdmControls,
    kind: MoveKind,
) -> Result<Option<Proposal>> {
    let n0 = state.n_thinned();
    match kind {
        MoveKind::Birth => {
            let location = params.dom.sample_uniform(rng);
            match state.conditional_at(params, &location) {
                Ok((m, sd, _)) => {
                    let z: f64 = StandardNormal.sample(rng);
                    Ok(Some(Proposal::Birth {
                        location,
                        mark: m + sd * z,
                    }))
                }
                Err(Error::NotPositiveDefinite { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        }
        MoveKind::Death => {
            if n0 == 0 {
                return Ok(None);
            }
            Ok(Some(Proposal::Death {
                index: rng.random_range(0..n0),
            }))
        }
        MoveKind::Move => {
            if n0 == 0 {
                return Ok(None);
            }
            let index = rng.random_range(0..n0);
            let old = state.thinned_locations()[index];
            let step = Normal::new(0.0, controls.move_scale * params.dom.diameter()).expect("positive scale");
            let mut location = old;
            for x in location.iter_mut().take(params.dom.dim()) {
                *x += step.sample(rng);
            }
            if !params.dom.contains(&location) {
                return Ok(None);
            }
            let mut rest = state.clone();
            rest.remove_thinned(index)?;
            match rest.conditional_at(params, &location) {
                Ok((m, sd, _)) => {
                    let z: f64 = StandardNormal.sample(rng);
                    Ok(Some(Proposal::Move {
                        index,
                        location,
                        mark: m + sd * z,
                    }))
                }
                Err(Error::NotPositiveDefinite { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        }
    }
}

pub fn propose(
    rng: &mut Rng,
    state: &AugmentedState,
    params: &SgcpParams,
    controls: &BdmControls,
) -> Result<(MoveKind, Option<Proposal>)> {
    let kind = choose_kind(rng, &controls.move_probs);
    Ok((kind, propose_kind(rng, state, params, controls, kind)?))
}

/// Log Metropolis-Hastings ratio of a proposal from `state`.
pub fn log_acceptance_ratio(
    state: &AugmentedState,
    proposal: &Proposal,
    params: &SgcpParams,
    controls: &BdmControls,
) -> f64 {
    let [pb, pd, _] = controls.move_probs;
    let log_mass = params.base_mass().ln();
    let n0 = state.n_thinned() as f64;
    match proposal {
        Proposal::Birth { mark, .. } => log_mass + log_expit(-mark) - (n0 + 1.0).ln() + pd.ln() - pb.ln(),
        Proposal::Death { index } => {
            let g = state.thinned_marks()[*index];
            -(log_mass + log_expit(-g) - n0.ln() + pd.ln() - pb.ln())
        }
        Proposal::Move { index, location, mark } => {
            if !params.dom.contains(location) {
                return f64::NEG_INFINITY;
            }
            log_expit(-mark) - log_expit(-state.thinned_marks()[*index])
        }
    }
}

pub fn apply(state: &mut AugmentedState, proposal: &Proposal) -> Result<()> {
    match proposal {
        Proposal::Birth { location, mark } => state.push_thinned(*location, *mark),
        Proposal::Death { index } => state.remove_thinned(*index),
        Proposal::Move { index, location, mark } => {
            state.remove_thinned(*index)?;
            state.push_thinned(*location, *mark)
        }
    }
}

/// One Metropolis-Hastings step; returns whether the state changed.
pub fn bdm_step(
    rng: &mut Rng,
    state: &mut AugmentedState,
    params: &SgcpParams,
    controls: &BdmControls,
    stats: &mut BdmStats,
) -> Result<bool> {
    let (kind, proposal) = propose(rng, state, params, controls)?;
    stats.proposed[kind as usize] += 1;
    let Some(proposal) = proposal else {
        return Ok(false);
    };
    let log_alpha = log_acceptance_ratio(state, &proposal, params, controls);
    let u: f64 = rng.random();
    if u.ln() >= log_alpha {
        return Ok(false);
    }
    let mut next = state.clone();
    match apply(&mut next, &proposal) {
        Ok(()) => {
            *state = next;
            stats.accepted[kind as usize] += 1;
            Ok(true)
        }
        Err(Error::NotPositiveDefinite { .. }) => {
            debug!("rejecting {kind:?}: covariance lost positive definiteness");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

/// A birth-death-move chain on the thinned points with the observed points
/// and their GP values held fixed.
#[derive(Clone, Debug)]
pub struct BdmChain {
    pub state: AugmentedState,
    pub params: SgcpParams,
    pub controls: BdmControls,
    pub stats: BdmStats,
}

impl BdmChain {
    /// Starts from no thinned points.
    pub fn new(params: SgcpParams, observed: &MarkedPattern, controls: BdmControls) -> Result<Self> {
        controls.validate()?;
        let state = AugmentedState::from_observed(&params, observed)?;
        Ok(Self {
            state,
            params,
            controls,
            stats: BdmStats::default(),
        })
    }

    pub fn step(&mut self, rng: &mut Rng) -> Result<bool> {
        bdm_step(rng, &mut self.state, &self.params, &self.controls, &mut self.stats)
    }

    pub fn sweep(&mut self, rng: &mut Rng, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(rng)?;
        }
        Ok(())
    }
}

/// Runs `n_sweeps` sweeps of `steps_per_sweep` proposals and returns the
/// thinned pattern after each sweep.
pub fn sample_conditional_bdm(
    rng: &mut Rng,
    observed: &MarkedPattern,
    params: &SgcpParams,
    controls: &BdmControls,
    n_sweeps: usize,
    steps_per_sweep: usize,
) -> Result<Vec<MarkedPattern>> {
    let mut chain = BdmChain::new(params.clone(), observed, *controls)?;
    let mut out = Vec::with_capacity(n_sweeps);
    for _ in 0..n_sweeps {
        chain.sweep(rng, steps_per_sweep)?;
        out.push(chain.state.thinned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::scalar_pattern;
    use super::*;
    use crate::gp::Kernel;
    use crate::pattern::Domain;

    fn params(lambda: f64) -> SgcpParams {
        SgcpParams::new(lambda, Kernel::exponential(2.0, 1.0).unwrap(), Domain::unit_square()).unwrap()
    }

    fn random_state(rng: &mut Rng, p: &SgcpParams) -> AugmentedState {
        let n1 = rng.random_range(0..4);
        let n0 = rng.random_range(0..5);
        let mk = |rng: &mut Rng, n: usize| {
            let l: Vec<Point> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
            let g: Vec<f64> = (0..n).map(|_| 3.0 * rng.random::<f64>() - 1.5).collect();
            scalar_pattern(&l, &g)
        };
        AugmentedState::new(p, &mk(rng, n1), &mk(rng, n0)).unwrap()
    }

    #[test]
    fn detailed_balance() {
        let report = super::super::verify_detailed_balance(&mut Rng::new(21), 200).unwrap();
        assert_eq!(report.n_pairs, 200);
        assert!(report.max_residual < 1e-8, "{report:?}");
    }

    #[test]
    fn birth_ratio_worked_value() {
        // λ|S| = 10, four thinned points, 1 − expit(g) = 1/2
        let p = params(10.0);
        let mut rng = Rng::new(3);
        let mut x = random_state(&mut rng, &p);
        while x.n_thinned() != 4 {
            x = random_state(&mut rng, &p);
        }
        let prop = Proposal::Birth { location: [0.5, 0.5], mark: 0.0 };
        let r = log_acceptance_ratio(&x, &prop, &p, &BdmControls::default());
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn void_proposals_when_nothing_thinned() {
        let p = params(3.0);
        let x = AugmentedState::from_observed(&p, &MarkedPattern::default()).unwrap();
        let c = BdmControls::default();
        let mut rng = Rng::new(4);
        assert!(propose_kind(&mut rng, &x, &p, &c, MoveKind::Death).unwrap().is_none());
        assert!(propose_kind(&mut rng, &x, &p, &c, MoveKind::Move).unwrap().is_none());
    }

    #[test]
    fn incremental_factor_tracks_scratch() {
        let p = params(8.0);
        let mut rng = Rng::new(5);
        let obs = scalar_pattern(&[[0.2, 0.2], [0.7, 0.4]], &[0.5, -0.3]);
        let mut chain = BdmChain::new(p.clone(), &obs, BdmControls::default()).unwrap();
        for _ in 0..50 {
            chain.sweep(&mut rng, 20).unwrap();
            let scratch = AugmentedState::new(&p, &obs, &chain.state.thinned()).unwrap();
            let a = chain.state.log_conditional_unnorm(&p);
            let b = scratch.log_conditional_unnorm(&p);
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn tiny_intensity_keeps_thinned_set_empty() {
        let p = params(1e-6);
        let mut rng = Rng::new(6);
        let draws = sample_conditional_bdm(&mut rng, &MarkedPattern::default(), &p, &BdmControls::default(), 500, 20).unwrap();
        assert!(draws.iter().all(MarkedPattern::is_empty));
    }

    #[test]
    fn chain_is_reproducible() {
        let p = params(5.0);
        let obs = scalar_pattern(&[[0.4, 0.4]], &[1.0]);
        let run = || sample_conditional_bdm(&mut Rng::new(8), &obs, &p, &BdmControls::default(), 50, 20).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_controls_rejected() {
        let bad = BdmControls { move_probs: [0.5, 0.0, 0.5], move_scale: 0.1 };
        assert!(bad.validate().is_err());
        let bad = BdmControls { move_probs: [0.5, 0.5, 0.5], move_scale: 0.1 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn chain_does_not_drift_from_truth() {
        // start at a draw from the joint and watch the log density
        let p = params(20.0);
        let mut rng = Rng::new(9);
        let (t, o) = super::super::simulate_sgcp(&mut rng, &p).unwrap();
        let mut chain = BdmChain::new(p.clone(), &o, BdmControls::default()).unwrap();
        chain.state = AugmentedState::new(&p, &o, &t).unwrap();
        let start = chain.state.log_conditional_unnorm(&p);
        let mut trace = Vec::new();
        for _ in 0..500 {
            chain.sweep(&mut rng, 20).unwrap();
            trace.push(chain.state.log_conditional_unnorm(&p));
        }
        let late = crate::stats::mean(&trace[250..]);
        let sd = crate::stats::variance(&trace).sqrt();
        assert!((late - start).abs() < 4.0 * sd.max(1.0), "start {start}, late mean {late}, sd {sd}");
    }
}
