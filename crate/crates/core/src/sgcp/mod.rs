//! Sigmoidal Gaussian Cox process: a Poisson process with intensity
//! `λ · expit(g(s))` for a Gaussian process `g`, simulated by thinning a
//! homogeneous process with GP-valued retention probabilities.
//!
//! Inference augments the observed points with the thinned ones; the joint
//! density of both sets (with GP values at every location) is tractable:
//!
//! ```text
//! exp(−λ|S|) λ^(n₀+n₁) / (n₀! n₁!) · N(g | m, Σ) · Π₀ (1 − expit g) · Π₁ expit g
//! ```

mod bdm;
mod flawed;
mod verify;

pub use bdm::{
    bdm_step, log_acceptance_ratio, propose, sample_conditional_bdm, BdmChain, BdmControls, BdmStats,
    MoveKind, Proposal,
};
pub use flawed::{sample_conditional_flawed_goncalves, sample_conditional_flawed_rao, GONCALVES_MAX_TRIES};
pub use verify::{
    compare_samplers_empty, grid_cox_pattern, pair_counts, verify_appendix_b, verify_appendix_c,
    AppendixBReport, AppendixCReport, BalanceReport, EmptyComparison, EmptyComparisonConfig,
    verify_detailed_balance,
};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::gp::{expit, log_expit, mvn_logpdf, CholeskyState, Kernel};
use crate::pattern::{ln_fact, sample_homogeneous_ppp, Domain, MarkedPattern, Point};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgcpParams {
    pub lambda: f64,
    pub kernel: Kernel,
    pub dom: Domain,
    /// Constant mean of the GP; zero in the standard model.
    #[serde(default)]
    pub mean: f64,
}

impl SgcpParams {
    pub fn new(lambda: f64, kernel: Kernel, dom: Domain) -> Result<Self> {
        Self::with_mean(lambda, kernel, dom, 0.0)
    }

    pub fn with_mean(lambda: f64, kernel: Kernel, dom: Domain, mean: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(param(format!("intensity must be positive, got {lambda}")));
        }
        if !mean.is_finite() {
            return Err(param("GP mean must be finite"));
        }
        Ok(Self {
            lambda,
            kernel,
            dom,
            mean,
        })
    }

    /// Expected number of base points `λ|S|`.
    pub fn base_mass(&self) -> f64 {
        self.lambda * self.dom.volume()
    }
}

/// Observed and thinned points with GP values at all of them, plus the
/// Cholesky factor of their covariance. Locations are stored observed first,
/// then thinned.
#[derive(Clone, Debug)]
pub struct AugmentedState {
    chol: CholeskyState<Kernel>,
    marks: Vec<f64>,
    n_observed: usize,
}

impl AugmentedState {
    pub fn new(params: &SgcpParams, observed: &MarkedPattern, thinned: &MarkedPattern) -> Result<Self> {
        let obs_marks = marks_of(observed)?;
        let thin_marks = marks_of(thinned)?;
        let mut locations = observed.locations().to_vec();
        locations.extend_from_slice(thinned.locations());
        let mut marks = obs_marks;
        marks.extend(thin_marks);
        Self::from_parts(params, locations, marks, observed.len())
    }

    /// Observed points with no thinned points yet.
    pub fn from_observed(params: &SgcpParams, observed: &MarkedPattern) -> Result<Self> {
        Self::from_parts(params, observed.locations().to_vec(), marks_of(observed)?, observed.len())
    }

    fn from_parts(params: &SgcpParams, locations: Vec<Point>, marks: Vec<f64>, n_observed: usize) -> Result<Self> {
        // revalidates domain membership and distinctness across both sets
        MarkedPattern::new(&params.dom, locations.clone(), None, None, None)?;
        if marks.iter().any(|g| !g.is_finite()) {
            return Err(param("GP values must be finite"));
        }
        let chol = CholeskyState::from_points(params.kernel, params.kernel.default_jitter(), &locations)?;
        Ok(Self {
            chol,
            marks,
            n_observed,
        })
    }

    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    pub fn n_thinned(&self) -> usize {
        self.marks.len() - self.n_observed
    }

    pub fn chol(&self) -> &CholeskyState<Kernel> {
        &self.chol
    }

    /// GP values in storage order.
    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn thinned_locations(&self) -> &[Point] {
        &self.chol.locations()[self.n_observed..]
    }

    pub fn thinned_marks(&self) -> &[f64] {
        &self.marks[self.n_observed..]
    }

    pub fn observed_locations(&self) -> &[Point] {
        &self.chol.locations()[..self.n_observed]
    }

    pub fn observed_marks(&self) -> &[f64] {
        &self.marks[..self.n_observed]
    }

    pub fn thinned(&self) -> MarkedPattern {
        scalar_pattern(self.thinned_locations(), self.thinned_marks())
    }

    pub fn observed(&self) -> MarkedPattern {
        scalar_pattern(self.observed_locations(), self.observed_marks())
    }

    /// Conditional mean and standard deviation of the GP at `p` given every
    /// stored value.
    pub fn conditional_at(&self, params: &SgcpParams, p: &Point) -> Result<(f64, f64, Vec<f64>)> {
        let (row, sd) = self.chol.extension_row(p)?;
        let centred: Vec<f64> = self.marks.iter().map(|g| g - params.mean).collect();
        let white = self.chol.solve_lower(&centred);
        let mean = params.mean + row.iter().zip(&white).map(|(a, b)| a * b).sum::<f64>();
        Ok((mean, sd, row))
    }

    pub(crate) fn push_thinned(&mut self, p: Point, g: f64) -> Result<()> {
        self.chol.push(p)?;
        self.marks.push(g);
        Ok(())
    }

    pub(crate) fn remove_thinned(&mut self, index: usize) -> Result<()> {
        let k = self.n_observed + index;
        self.chol.remove(k)?;
        self.marks.remove(k);
        Ok(())
    }

    pub fn log_joint_density(&self, params: &SgcpParams) -> f64 {
        let (n0, n1) = (self.n_thinned(), self.n_observed);
        let obs: f64 = self.observed_marks().iter().map(|&g| log_expit(g)).sum();
        -params.base_mass() + (n0 + n1) as f64 * params.lambda.ln() - ln_fact(n0) - ln_fact(n1)
            + self.log_gp_density(params)
            + self.log_retention_thinned()
            + obs
    }

    /// Log joint density up to terms that depend only on the observed set.
    pub fn log_conditional_unnorm(&self, params: &SgcpParams) -> f64 {
        let n0 = self.n_thinned();
        n0 as f64 * params.lambda.ln() - ln_fact(n0) + self.log_gp_density(params) + self.log_retention_thinned()
    }

    fn log_gp_density(&self, params: &SgcpParams) -> f64 {
        mvn_logpdf(&self.marks, &vec![params.mean; self.marks.len()], &self.chol)
    }

    fn log_retention_thinned(&self) -> f64 {
        self.thinned_marks().iter().map(|&g| log_expit(-g)).sum()
    }
}

fn marks_of(x: &MarkedPattern) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Ok(Vec::new());
    }
    x.scalar_marks()
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::Structure("pattern needs one GP value per point".into()))
}

pub(crate) fn scalar_pattern(locations: &[Point], marks: &[f64]) -> MarkedPattern {
    MarkedPattern::from_parts(
        locations.to_vec(),
        None,
        Some(crate::pattern::Marks::new(1, marks.to_vec()).expect("finite marks")),
        None,
    )
}

/// Appends GP values at `new` to a state holding `known` values, drawing
/// each new value from its conditional given everything before it.
pub(crate) fn extend_gp(
    chol: &mut CholeskyState<Kernel>,
    values: &mut Vec<f64>,
    new: &[Point],
    mean: f64,
    rng: &mut Rng,
) -> Result<()> {
    for p in new {
        let (row, sd) = chol.extension_row(p)?;
        let centred: Vec<f64> = values.iter().map(|g| g - mean).collect();
        let white = chol.solve_lower(&centred);
        let m = mean + row.iter().zip(&white).map(|(a, b)| a * b).sum::<f64>();
        let z: f64 = StandardNormal.sample(rng);
        values.push(m + sd * z);
        chol.push_row(*p, row, sd);
    }
    Ok(())
}

/// Exact simulation by thinning: base Poisson process, GP values at its
/// points, each point kept with probability `expit(g)`. Returns
/// `(thinned, observed)`.
pub fn simulate_sgcp(rng: &mut Rng, params: &SgcpParams) -> Result<(MarkedPattern, MarkedPattern)> {
    let base = sample_homogeneous_ppp(rng, &params.dom, params.lambda)?;
    let mut chol = CholeskyState::empty(params.kernel, params.kernel.default_jitter());
    let mut g = Vec::with_capacity(base.len());
    extend_gp(&mut chol, &mut g, base.points(), params.mean, rng)?;
    let (mut tl, mut tg, mut ol, mut og) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (p, v) in base.iter().zip(g) {
        if rng.random::<f64>() < expit(v) {
            ol.push(*p);
            og.push(v);
        } else {
            tl.push(*p);
            tg.push(v);
        }
    }
    Ok((scalar_pattern(&tl, &tg), scalar_pattern(&ol, &og)))
}

pub fn log_joint_density(state: &AugmentedState, params: &SgcpParams) -> f64 {
    state.log_joint_density(params)
}

/// Unnormalized log density of the thinned points given the observed ones.
pub fn log_conditional_density_unnorm(
    thinned: &MarkedPattern,
    observed: &MarkedPattern,
    params: &SgcpParams,
) -> Result<f64> {
    Ok(AugmentedState::new(params, observed, thinned)?.log_conditional_unnorm(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::cov_matrix;
    use std::f64::consts::PI;

    fn params(lambda: f64) -> SgcpParams {
        SgcpParams::new(lambda, Kernel::exponential(2.0, 1.0).unwrap(), Domain::unit_square()).unwrap()
    }

    fn random_marked(rng: &mut Rng, n: usize) -> MarkedPattern {
        let locs: Vec<Point> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        let g: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        scalar_pattern(&locs, &g)
    }

    /// Direct evaluation of the joint display with a dense covariance matrix.
    fn joint_oracle(params: &SgcpParams, thinned: &MarkedPattern, observed: &MarkedPattern) -> f64 {
        let mut locs = thinned.locations().to_vec();
        locs.extend_from_slice(observed.locations());
        let mut g = thinned.scalar_marks().unwrap_or(&[]).to_vec();
        g.extend_from_slice(observed.scalar_marks().unwrap_or(&[]));
        let n = locs.len();
        let mut sigma = cov_matrix(&params.kernel, &locs);
        for i in 0..n {
            sigma[(i, i)] += params.kernel.default_jitter();
        }
        let gv = nalgebra::DVector::from_vec(g.clone());
        let quad = if n > 0 { (gv.transpose() * sigma.clone().try_inverse().unwrap() * &gv)[0] } else { 0.0 };
        let log_n = -0.5 * quad - 0.5 * sigma.determinant().ln() - 0.5 * n as f64 * (2.0 * PI).ln();
        let (n0, n1) = (thinned.len(), observed.len());
        let mut v = (-params.lambda).exp() * params.lambda.powi((n0 + n1) as i32)
            / (ln_fact(n0).exp() * ln_fact(n1).exp());
        for &x in &g[..n0] {
            v *= 1.0 - expit(x);
        }
        for &x in &g[n0..] {
            v *= expit(x);
        }
        v.ln() + log_n
    }

    #[test]
    fn empty_joint_is_void_probability() {
        let p = params(3.5);
        let s = AugmentedState::from_observed(&p, &MarkedPattern::default()).unwrap();
        assert!((s.log_joint_density(&p) + 3.5).abs() < 1e-15);
    }

    #[test]
    fn single_observed_point() {
        let p = params(2.0);
        let obs = scalar_pattern(&[[0.3, 0.6]], &[0.7]);
        let s = AugmentedState::from_observed(&p, &obs).unwrap();
        let var = 1.0 + p.kernel.default_jitter();
        let expected = -2.0 + 2f64.ln() - 0.5 * (2.0 * PI * var).ln() - 0.49 / (2.0 * var) + log_expit(0.7);
        assert!((s.log_joint_density(&p) - expected).abs() < 1e-12);
    }

    #[test]
    fn joint_matches_dense_oracle() {
        let mut rng = Rng::new(11);
        let p = params(4.0);
        for _ in 0..20 {
            let n0 = rng.random_range(0..5);
            let n1 = rng.random_range(0..5);
            let all = random_marked(&mut rng, n0 + n1);
            let t = scalar_pattern(&all.locations()[..n0], &all.scalar_marks().unwrap()[..n0]);
            let o = scalar_pattern(&all.locations()[n0..], &all.scalar_marks().unwrap()[n0..]);
            let s = AugmentedState::new(&p, &o, &t).unwrap();
            assert!((s.log_joint_density(&p) - joint_oracle(&p, &t, &o)).abs() < 1e-9);
        }
    }

    #[test]
    fn swapping_a_point_between_sets() {
        let mut rng = Rng::new(12);
        let p = params(4.0);
        for _ in 0..20 {
            let all = random_marked(&mut rng, 5);
            let (l, g) = (all.locations(), all.scalar_marks().unwrap());
            let t = scalar_pattern(&l[..2], &g[..2]);
            let o = scalar_pattern(&l[2..], &g[2..]);
            let t2 = scalar_pattern(&l[..3], &g[..3]);
            let o2 = scalar_pattern(&l[3..], &g[3..]);
            let a = AugmentedState::new(&p, &o, &t).unwrap().log_joint_density(&p);
            let b = AugmentedState::new(&p, &o2, &t2).unwrap().log_joint_density(&p);
            // moving point 2 from observed (n1 = 3) to thinned (n0 = 2)
            let gx = g[2];
            let expected = log_expit(-gx) - log_expit(gx) + (3f64 / 3.0).ln();
            assert!((b - a - expected).abs() < 1e-10, "{} vs {expected}", b - a);
        }
    }

    #[test]
    fn conditional_differences_match_joint() {
        let mut rng = Rng::new(13);
        let p = params(6.0);
        let obs = random_marked(&mut rng, 4);
        for _ in 0..100 {
            let mk = |rng: &mut Rng| loop {
                let n = rng.random_range(0..5);
                let t = random_marked(rng, n);
                if AugmentedState::new(&p, &obs, &t).is_ok() {
                    return t;
                }
            };
            let (t1, t2) = (mk(&mut rng), mk(&mut rng));
            let c = log_conditional_density_unnorm(&t1, &obs, &p).unwrap()
                - log_conditional_density_unnorm(&t2, &obs, &p).unwrap();
            let j = AugmentedState::new(&p, &obs, &t1).unwrap().log_joint_density(&p)
                - AugmentedState::new(&p, &obs, &t2).unwrap().log_joint_density(&p);
            assert!((c - j).abs() < 1e-10);
        }
    }

    #[test]
    fn conditional_with_no_thinned_points_is_gp_density() {
        let mut rng = Rng::new(14);
        let p = params(3.0);
        let obs = random_marked(&mut rng, 3);
        let s = AugmentedState::from_observed(&p, &obs).unwrap();
        let expected = mvn_logpdf(obs.scalar_marks().unwrap(), &[0.0; 3], s.chol());
        let got = log_conditional_density_unnorm(&MarkedPattern::default(), &obs, &p).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn tiny_intensity_gives_empty_patterns() {
        let p = params(1e-9);
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            let (t, o) = simulate_sgcp(&mut rng, &p).unwrap();
            assert!(t.is_empty() && o.is_empty());
        }
    }

    #[test]
    fn saturated_field_keeps_everything() {
        let p = SgcpParams::with_mean(8.0, Kernel::exponential(2.0, 1e-12).unwrap(), Domain::unit_square(), 20.0)
            .unwrap();
        let mut rng = Rng::new(2);
        let mut thinned = 0;
        let mut total = 0;
        for _ in 0..200 {
            let (t, o) = simulate_sgcp(&mut rng, &p).unwrap();
            thinned += t.len();
            total += t.len() + o.len();
        }
        assert!(total > 1000);
        assert!(thinned <= 1, "{thinned} thinned");
    }

    #[test]
    fn simulation_is_reproducible() {
        let p = params(10.0);
        let a = simulate_sgcp(&mut Rng::new(9), &p).unwrap();
        let b = simulate_sgcp(&mut Rng::new(9), &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observed_fraction_is_one_half() {
        // g and −g have the same law, so E[n₁] = E[n₀] = λ|S|/2
        let p = params(4.0);
        let mut rng = Rng::new(3);
        let (mut n0, mut n1) = (0usize, 0usize);
        for _ in 0..20_000 {
            let (t, o) = simulate_sgcp(&mut rng, &p).unwrap();
            n0 += t.len();
            n1 += o.len();
        }
        let (m0, m1) = (n0 as f64 / 2e4, n1 as f64 / 2e4);
        assert!((m0 - 2.0).abs() < 0.05 && (m1 - 2.0).abs() < 0.05, "{m0} {m1}");
    }
}
