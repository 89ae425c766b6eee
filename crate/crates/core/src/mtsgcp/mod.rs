//! Multitype sigmoidal Gaussian Cox process.
//!
//! A homogeneous Poisson process of rate `λ` is coloured point by point: a
//! point at `s` gets type `j ∈ 1..=p` with probability `σ_j(g(s))` and is
//! thinned (type 0) with the remaining probability, where
//! `σ_j(g) = exp(g_j) / (1 + Σ_i exp(g_i))` and `g = A w + μ` follows a
//! linear model of coregionalization.
//!
//! Internally every stored point carries both its field values `g` and the
//! latent values `w = A⁻¹ (g − μ)`. The latent channels are independent, so
//! the Gaussian part of every density factorizes into one Cholesky factor per
//! channel plus the Jacobian `|det A|^{-n}`.

mod gibbs;
mod summaries;
mod verify;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::gp::{mvn_logpdf, sample_from_factor, CholeskyState, Kernel, LmcParams};
use crate::pattern::{ln_fact, sample_homogeneous_ppp, Domain, MarkedPattern, Point, PointPattern};
use crate::rng::Rng;

pub use gibbs::{
    fit, gibbs_step, lambda_conditional, mu_conditional, GibbsControls, MtBdmStats, Priors, StepReport, Trace,
    TraceRecord, Snapshot,
};
pub use summaries::{mean_sigma, pcf, posterior_intensity_grid, IntensityGrid, PcfPoint, PcfTable, MAX_GRID_RES};
pub use verify::{geweke_test, GewekeConfig, GewekeReport, MomentTest};

/// Nugget added to each unit-variance latent channel.
pub const LATENT_JITTER: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtsgcpParams {
    pub lambda: f64,
    pub lmc: LmcParams,
    pub dom: Domain,
}

impl MtsgcpParams {
    pub fn new(lambda: f64, lmc: LmcParams, dom: Domain) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(param(format!("intensity must be positive, got {lambda}")));
        }
        Ok(Self { lambda, lmc, dom })
    }

    pub fn p(&self) -> usize {
        self.lmc.p()
    }
}

fn log_sum_exp_with_zero(g: &[f64]) -> f64 {
    let m = g.iter().fold(0.0_f64, |a, &b| a.max(b));
    m + ((-m).exp() + g.iter().map(|x| (x - m).exp()).sum::<f64>()).ln()
}

/// Colour probabilities `(σ_0, σ_1, …, σ_p)` for field values `g`.
pub fn sigma(g: &[f64]) -> Vec<f64> {
    let m = g.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut out = Vec::with_capacity(g.len() + 1);
    out.push((-m).exp());
    out.extend(g.iter().map(|x| (x - m).exp()));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// `ln σ_colour(g)`.
pub fn log_sigma(g: &[f64], colour: usize) -> f64 {
    let lse = log_sum_exp_with_zero(g);
    if colour == 0 {
        -lse
    } else {
        g[colour - 1] - lse
    }
}

pub(crate) fn latent_kernel(lmc: &LmcParams, j: usize) -> Kernel {
    lmc.kernel(j)
}

pub(crate) fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| param("coregionalization matrix is singular"))
}

/// Augmented state of the sampler: every point with its colour and field
/// values, the model parameters, and one Cholesky factor per latent channel.
///
/// Observed points come first, grouped by type, followed by the thinned ones.
#[derive(Clone, Debug)]
pub struct GibbsState {
    dom: Domain,
    lambda: f64,
    lmc: LmcParams,
    a_inv: DMatrix<f64>,
    chols: Vec<CholeskyState<Kernel>>,
    colours: Vec<u32>,
    g: Vec<f64>,
    w: Vec<Vec<f64>>,
    n_observed: usize,
    pub(crate) hmc_step: f64,
    pub(crate) iteration: usize,
}

fn marks_or_empty(x: &MarkedPattern, p: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Ok(Vec::new());
    }
    match x.marks() {
        Some(m) if m.dim() == p => Ok(m.values().to_vec()),
        _ => Err(Error::Structure(format!("points need {p} field values each"))),
    }
}

impl GibbsState {
    /// State from observed patterns (one per type) and thinned points, each
    /// carrying `p` field values per point.
    pub fn new(params: &MtsgcpParams, observed: &[MarkedPattern], thinned: &MarkedPattern) -> Result<Self> {
        let p = params.p();
        if observed.len() != p {
            return Err(Error::Dimension { expected: p, got: observed.len() });
        }
        let mut locations = Vec::new();
        let mut colours = Vec::new();
        let mut g = Vec::new();
        for (k, part) in observed.iter().enumerate() {
            locations.extend_from_slice(part.locations());
            colours.extend(std::iter::repeat_n(k as u32 + 1, part.len()));
            g.extend(marks_or_empty(part, p)?);
        }
        let n_observed = locations.len();
        locations.extend_from_slice(thinned.locations());
        colours.extend(std::iter::repeat_n(0, thinned.len()));
        g.extend(marks_or_empty(thinned, p)?);
        Self::from_parts(params, locations, colours, g, n_observed)
    }

    pub(crate) fn from_parts(
        params: &MtsgcpParams,
        locations: Vec<Point>,
        colours: Vec<u32>,
        g: Vec<f64>,
        n_observed: usize,
    ) -> Result<Self> {
        let p = params.p();
        if let Some(q) = locations.iter().find(|q| !params.dom.contains(q)) {
            return Err(Error::OutsideDomain { point: *q });
        }
        let chols = (0..p)
            .map(|j| CholeskyState::from_points(latent_kernel(&params.lmc, j), LATENT_JITTER, &locations))
            .collect::<Result<Vec<_>>>()?;
        let mut state = Self {
            dom: params.dom.clone(),
            lambda: params.lambda,
            lmc: params.lmc.clone(),
            a_inv: inverse(params.lmc.a())?,
            chols,
            colours,
            g,
            w: vec![Vec::new(); p],
            n_observed,
            hmc_step: 0.05,
            iteration: 0,
        };
        state.refresh_latent();
        Ok(state)
    }

    /// Starting point for inference: `A = I`, `μ = 0`, ranges at their prior
    /// means, field values at the data drawn from that prior, no thinned
    /// points, and `λ` matched to the observed count.
    pub fn initial(rng: &mut Rng, dom: &Domain, data: &[PointPattern], priors: &Priors) -> Result<Self> {
        let p = data.len();
        if p == 0 {
            return Err(param("at least one point type is needed"));
        }
        let rho = vec![priors.rho_shape / priors.rho_rate; p];
        let lmc = LmcParams::new(DMatrix::identity(p, p), rho, vec![0.0; p])?;
        let n_obs: usize = data.iter().map(|d| d.len()).sum();
        let lambda = (n_obs as f64 + 1.0) * (p as f64 + 1.0) / (p as f64 * dom.volume());
        let params = MtsgcpParams::new(lambda, lmc, dom.clone())?;
        let mut locations = Vec::with_capacity(n_obs);
        let mut colours = Vec::with_capacity(n_obs);
        for (k, d) in data.iter().enumerate() {
            locations.extend_from_slice(d.points());
            colours.extend(std::iter::repeat_n(k as u32 + 1, d.len()));
        }
        let g = draw_field(rng, &params.lmc, &locations)?;
        Self::from_parts(&params, locations, colours, g, n_obs)
    }

    fn refresh_latent(&mut self) {
        let p = self.p();
        let n = self.len();
        let mu = self.lmc.mu().to_vec();
        for j in 0..p {
            self.w[j] = (0..n)
                .map(|i| (0..p).map(|k| self.a_inv[(j, k)] * (self.g[i * p + k] - mu[k])).sum())
                .collect();
        }
    }

    fn refresh_field(&mut self) {
        let p = self.p();
        let n = self.len();
        let a = self.lmc.a();
        let mu = self.lmc.mu();
        for i in 0..n {
            for k in 0..p {
                self.g[i * p + k] = mu[k] + (0..p).map(|j| a[(k, j)] * self.w[j][i]).sum::<f64>();
            }
        }
    }

    pub fn p(&self) -> usize {
        self.lmc.p()
    }

    pub fn len(&self) -> usize {
        self.colours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colours.is_empty()
    }

    pub fn dom(&self) -> &Domain {
        &self.dom
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lmc(&self) -> &LmcParams {
        &self.lmc
    }

    pub fn params(&self) -> MtsgcpParams {
        MtsgcpParams {
            lambda: self.lambda,
            lmc: self.lmc.clone(),
            dom: self.dom.clone(),
        }
    }

    pub fn hmc_step(&self) -> f64 {
        self.hmc_step
    }

    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    pub fn n_thinned(&self) -> usize {
        self.len() - self.n_observed
    }

    pub fn locations(&self) -> &[Point] {
        self.chols[0].locations()
    }

    pub fn colours(&self) -> &[u32] {
        &self.colours
    }

    /// Field values, point-major: entry `i·p + k` is `g_k` at point `i`.
    pub fn marks(&self) -> &[f64] {
        &self.g
    }

    pub fn mark(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.g[i * p..(i + 1) * p]
    }

    pub fn latent(&self, j: usize) -> &[f64] {
        &self.w[j]
    }

    pub fn chol(&self, j: usize) -> &CholeskyState<Kernel> {
        &self.chols[j]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.p() + 1];
        for &k in &self.colours {
            c[k as usize] += 1;
        }
        c
    }

    pub fn thinned(&self) -> MarkedPattern {
        self.pattern_where(|i| i >= self.n_observed)
    }

    pub fn observed(&self) -> Vec<MarkedPattern> {
        (1..=self.p() as u32)
            .map(|k| self.pattern_where(|i| i < self.n_observed && self.colours[i] == k))
            .collect()
    }

    fn pattern_where(&self, keep: impl Fn(usize) -> bool) -> MarkedPattern {
        let p = self.p();
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        let locs = idx.iter().map(|&i| self.locations()[i]).collect();
        let marks = idx.iter().flat_map(|&i| self.mark(i).to_vec()).collect();
        MarkedPattern::from_parts(locs, None, Some(crate::pattern::Marks::new(p, marks).expect("p values per point")), None)
    }

    /// Replaces all field values and recomputes the latent values.
    pub fn set_marks(&mut self, g: Vec<f64>) -> Result<()> {
        if g.len() != self.g.len() {
            return Err(Error::Dimension { expected: self.g.len(), got: g.len() });
        }
        self.g = g;
        self.refresh_latent();
        Ok(())
    }

    pub(crate) fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
    }

    /// New `A` with the field values held fixed.
    pub(crate) fn set_a(&mut self, a: DMatrix<f64>) -> Result<()> {
        let lmc = LmcParams::new(a, self.lmc.rho().to_vec(), self.lmc.mu().to_vec())?;
        self.a_inv = inverse(lmc.a())?;
        self.lmc = lmc;
        self.refresh_latent();
        Ok(())
    }

    /// New `μ` with the field values held fixed.
    pub(crate) fn set_mu(&mut self, mu: Vec<f64>) -> Result<()> {
        self.lmc = LmcParams::new(self.lmc.a().clone(), self.lmc.rho().to_vec(), mu)?;
        self.refresh_latent();
        Ok(())
    }

    /// New range for channel `j` together with its refactorized kernel.
    pub(crate) fn set_rho(&mut self, j: usize, rho: f64, chol: CholeskyState<Kernel>) -> Result<()> {
        let mut r = self.lmc.rho().to_vec();
        r[j] = rho;
        self.lmc = LmcParams::new(self.lmc.a().clone(), r, self.lmc.mu().to_vec())?;
        self.chols[j] = chol;
        Ok(())
    }

    /// Replaces the latent values of every channel and recomputes the field.
    pub(crate) fn set_latent(&mut self, w: Vec<Vec<f64>>) {
        self.w = w;
        self.refresh_field();
    }

    pub(crate) fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub(crate) fn chols(&self) -> &[CholeskyState<Kernel>] {
        &self.chols
    }

    /// Latent conditional mean and standard deviation at `q` for every
    /// channel, with the factor rows that appending `q` would add.
    pub(crate) fn latent_conditional(&self, q: &Point) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let p = self.p();
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        let mut rows = Vec::with_capacity(p);
        for j in 0..p {
            let (row, sd) = self.chols[j].extension_row(q)?;
            let white = self.chols[j].solve_lower(&self.w[j]);
            means.push(row.iter().zip(&white).map(|(a, b)| a * b).sum());
            sds.push(sd);
            rows.push(row);
        }
        Ok((means, sds, rows))
    }

    pub(crate) fn field_from_latent(&self, w: &[f64]) -> Vec<f64> {
        let p = self.p();
        let a = self.lmc.a();
        (0..p)
            .map(|k| self.lmc.mu()[k] + (0..p).map(|j| a[(k, j)] * w[j]).sum::<f64>())
            .collect()
    }

    pub(crate) fn push_thinned(&mut self, q: Point, w: &[f64], rows: Vec<Vec<f64>>, sds: &[f64]) {
        for (j, row) in rows.into_iter().enumerate() {
            self.chols[j].push_row(q, row, sds[j]);
            self.w[j].push(w[j]);
        }
        let g = self.field_from_latent(w);
        self.g.extend(g);
        self.colours.push(0);
    }

    /// Removes thinned point `index`, installing factors that already have
    /// the point removed.
    pub(crate) fn remove_thinned_with(&mut self, index: usize, chols: Vec<CholeskyState<Kernel>>) {
        let i = self.n_observed + index;
        let p = self.p();
        self.chols = chols;
        for j in 0..p {
            self.w[j].remove(i);
        }
        self.g.drain(i * p..(i + 1) * p);
        self.colours.remove(i);
    }

    /// `Σ_j ln N(w_j | 0, C_j) − n ln|det A|`, the log density of all field
    /// values.
    pub fn log_field_density(&self) -> f64 {
        let n = self.len();
        let zeros = vec![0.0; n];
        let latent: f64 = (0..self.p()).map(|j| mvn_logpdf(&self.w[j], &zeros, &self.chols[j])).sum();
        latent - n as f64 * self.lmc.a().determinant().abs().ln()
    }

    pub fn log_colour_likelihood(&self) -> f64 {
        (0..self.len())
            .map(|i| log_sigma(self.mark(i), self.colours[i] as usize))
            .sum()
    }

    /// Gradient of the log joint density with respect to the field values,
    /// point-major.
    pub fn log_joint_gradient(&self) -> Vec<f64> {
        let p = self.p();
        let n = self.len();
        let precision_w: Vec<Vec<f64>> = (0..p).map(|j| self.chols[j].solve(&self.w[j])).collect();
        let mut grad = self.colour_gradient();
        for i in 0..n {
            for k in 0..p {
                // Σ⁻¹(g − μ) = (A⁻ᵀ ⊗ I) C⁻¹ w
                let prior: f64 = (0..p).map(|j| self.a_inv[(j, k)] * precision_w[j][i]).sum();
                grad[i * p + k] -= prior;
            }
        }
        grad
    }

    /// `∂/∂g Σ_i ln σ_{c_i}(g_i)`, point-major.
    pub(crate) fn colour_gradient(&self) -> Vec<f64> {
        let p = self.p();
        let mut grad = vec![0.0; self.g.len()];
        for i in 0..self.len() {
            let s = sigma(self.mark(i));
            let c = self.colours[i] as usize;
            for k in 0..p {
                grad[i * p + k] = f64::from(u8::from(c == k + 1)) - s[k + 1];
            }
        }
        grad
    }
}

/// Joint log density of all coloured points and their field values:
/// Poisson count and scatter, multinomial colouring factor, LMC prior of the
/// field values and the colour probabilities.
pub fn log_joint_density_mt(state: &GibbsState) -> f64 {
    let counts = state.counts();
    let n = state.len() as f64;
    -state.lambda * state.dom.volume() + n * state.lambda.ln() - counts.iter().map(|&c| ln_fact(c)).sum::<f64>()
        + state.log_field_density()
        + state.log_colour_likelihood()
}

/// One joint draw of `g` at `locations`, point-major.
pub(crate) fn draw_field(rng: &mut Rng, lmc: &LmcParams, locations: &[Point]) -> Result<Vec<f64>> {
    let p = lmc.p();
    let n = locations.len();
    let mut w = Vec::with_capacity(p);
    for j in 0..p {
        let chol = CholeskyState::from_points(latent_kernel(lmc, j), LATENT_JITTER, locations)?;
        w.push(sample_from_factor(&chol, rng));
    }
    let a = lmc.a();
    let mut g = vec![0.0; n * p];
    for i in 0..n {
        for k in 0..p {
            g[i * p + k] = lmc.mu()[k] + (0..p).map(|j| a[(k, j)] * w[j][i]).sum::<f64>();
        }
    }
    Ok(g)
}

pub(crate) fn std_normal(rng: &mut Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

fn draw_colour(rng: &mut Rng, probs: &[f64]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, pk) in probs.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k as u32;
        }
    }
    (probs.len() - 1) as u32
}

/// Forward simulation as an augmented state: base points, their field values
/// and their colours.
pub(crate) fn simulate_state(rng: &mut Rng, params: &MtsgcpParams) -> Result<GibbsState> {
    let p = params.p();
    let base = sample_homogeneous_ppp(rng, &params.dom, params.lambda)?;
    let g = draw_field(rng, &params.lmc, base.points())?;
    let colours: Vec<u32> = (0..base.len())
        .map(|i| draw_colour(rng, &sigma(&g[i * p..(i + 1) * p])))
        .collect();
    let mut order: Vec<usize> = (0..base.len()).collect();
    order.sort_by_key(|&i| (colours[i] == 0, colours[i]));
    let locations = order.iter().map(|&i| base.points()[i]).collect();
    let sorted_g = order.iter().flat_map(|&i| g[i * p..(i + 1) * p].to_vec()).collect();
    let sorted_c: Vec<u32> = order.iter().map(|&i| colours[i]).collect();
    let n_observed = sorted_c.iter().filter(|&&c| c != 0).count();
    GibbsState::from_parts(params, locations, sorted_c, sorted_g, n_observed)
}

/// Exact simulation. Returns the thinned points and one pattern per type,
/// every point marked with its `p` field values.
pub fn simulate_mtsgcp(rng: &mut Rng, params: &MtsgcpParams) -> Result<(MarkedPattern, Vec<MarkedPattern>)> {
    let state = simulate_state(rng, params)?;
    Ok((state.thinned(), state.observed()))
}

/// Stacks the per-type observed patterns of a state into plain locations.
pub fn observed_locations(state: &GibbsState) -> Vec<PointPattern> {
    state.observed().iter().map(|m| m.to_point_pattern()).collect()
}
