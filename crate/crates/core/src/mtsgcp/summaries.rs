//! Posterior summaries: mean colour probabilities, per-type intensity grids
//! and the cross pair correlation functions.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{inverse, latent_kernel, sigma, std_normal, Trace, LATENT_JITTER};
use crate::error::{param, Error, Result};
use crate::gp::{CholeskyState, LmcParams};
use crate::pattern::Domain;
use crate::rng::Rng;
use crate::stats::{mean_se, Estimate};

/// Largest accepted number of grid cells per axis.
pub const MAX_GRID_RES: usize = 512;

fn field_value(a: &DMatrix<f64>, mu: &[f64], w: &[f64]) -> Vec<f64> {
    let p = mu.len();
    (0..p)
        .map(|k| mu[k] + (0..p).map(|j| a[(k, j)] * w[j]).sum::<f64>())
        .collect()
}

fn normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Monte Carlo estimate of `E σ_k(g)` for `k = 0..=p` under the stationary
/// marginal `g ~ N(μ, A Aᵀ)`.
pub fn mean_sigma(rng: &mut Rng, lmc: &LmcParams, n_mc: usize) -> Vec<Estimate> {
    let p = lmc.p();
    let mut samples = vec![Vec::with_capacity(n_mc); p + 1];
    for _ in 0..n_mc {
        let g = field_value(lmc.a(), lmc.mu(), &normals(rng, p));
        for (k, s) in sigma(&g).into_iter().enumerate() {
            samples[k].push(s);
        }
    }
    samples.iter().map(|s| mean_se(s)).collect()
}

/// Posterior mean of `λ σ_k(·)` on a regular grid, one layer per type with
/// the thinned type first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityGrid {
    pub res: usize,
    pub dom: Domain,
    pub n_draws: usize,
    /// `layers[k][cell]`, cells row-major in y.
    pub layers: Vec<Vec<f64>>,
}

impl IntensityGrid {
    /// Cell-wise sum over all types, the posterior mean of `λ`.
    pub fn total(&self) -> Vec<f64> {
        let n = self.layers.first().map_or(0, Vec::len);
        (0..n).map(|c| self.layers.iter().map(|l| l[c]).sum()).collect()
    }

    /// Expected number of points of type `k` in the domain.
    pub fn mass(&self, k: usize) -> f64 {
        self.layers[k].iter().sum::<f64>() * self.dom.cell_volume(self.res)
    }
}

/// Averages `λ σ_k` over the stored iterations of `trace`. For every
/// iteration and cell the field is drawn from its conditional given the
/// stored field values, one cell at a time.
pub fn posterior_intensity_grid(rng: &mut Rng, trace: &Trace, dom: &Domain, res: usize) -> Result<IntensityGrid> {
    if res == 0 {
        return Err(param("grid resolution must be positive"));
    }
    if res > MAX_GRID_RES {
        return Err(Error::TooLarge(format!(
            "grid resolution {res} exceeds the limit of {MAX_GRID_RES} cells per axis"
        )));
    }
    let cells = dom.midpoint_grid(res);
    let mut layers: Vec<Vec<f64>> = Vec::new();
    for record in &trace.records {
        let snap = record
            .snapshot
            .as_ref()
            .ok_or_else(|| Error::Structure("trace records carry no field snapshots".into()))?;
        let lmc = record.lmc()?;
        let p = lmc.p();
        if layers.is_empty() {
            layers = vec![vec![0.0; cells.len()]; p + 1];
        }
        let a_inv = inverse(lmc.a())?;
        let n = snap.locations.len();
        let mut factors = Vec::with_capacity(p);
        let mut white = Vec::with_capacity(p);
        for j in 0..p {
            let chol = CholeskyState::from_points(latent_kernel(&lmc, j), LATENT_JITTER, &snap.locations)?;
            let w: Vec<f64> = (0..n)
                .map(|i| (0..p).map(|k| a_inv[(j, k)] * (snap.marks[i * p + k] - lmc.mu()[k])).sum())
                .collect();
            white.push(chol.solve_lower(&w));
            factors.push(chol);
        }
        let mut latent = vec![0.0; p];
        for (c, q) in cells.iter().enumerate() {
            for j in 0..p {
                let v = factors[j].solve_lower(&factors[j].cross_cov(q));
                let mean: f64 = v.iter().zip(&white[j]).map(|(a, b)| a * b).sum();
                let var = (1.0 + LATENT_JITTER - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
                latent[j] = mean + var.sqrt() * std_normal(rng);
            }
            let s = sigma(&field_value(lmc.a(), lmc.mu(), &latent));
            for (k, sk) in s.into_iter().enumerate() {
                layers[k][c] += record.lambda * sk;
            }
        }
    }
    let n_draws = trace.records.len();
    if n_draws == 0 {
        return Err(param("trace has no recorded iterations"));
    }
    for layer in &mut layers {
        layer.iter_mut().for_each(|v| *v /= n_draws as f64);
    }
    Ok(IntensityGrid { res, dom: dom.clone(), n_draws, layers })
}

/// One estimate of `γ_kl(r)` summarized over parameter draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcfPoint {
    pub r: f64,
    /// Types, `1 ≤ k ≤ l ≤ p`.
    pub k: usize,
    pub l: usize,
    /// Average over parameter draws.
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
    /// Monte Carlo standard error of `mean`.
    pub mc_se: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PcfTable {
    pub n_draws: usize,
    pub n_mc: usize,
    pub points: Vec<PcfPoint>,
}

impl PcfTable {
    pub fn get(&self, k: usize, l: usize, r: f64) -> Option<&PcfPoint> {
        let (k, l) = (k.min(l), k.max(l));
        self.points.iter().find(|pt| pt.k == k && pt.l == l && pt.r == r)
    }
}

/// `γ_kl(r)` and its delta-method standard error for one parameter draw,
/// indexed `[r][pair]`.
fn pcf_one(rng: &mut Rng, lmc: &LmcParams, radii: &[f64], n_mc: usize) -> Vec<Vec<(f64, f64)>> {
    let p = lmc.p();
    let base: Vec<Vec<f64>> = (0..n_mc).map(|_| normals(rng, p)).collect();
    let fresh: Vec<Vec<f64>> = (0..n_mc).map(|_| normals(rng, p)).collect();
    let sig_s: Vec<Vec<f64>> = base.iter().map(|w| sigma(&field_value(lmc.a(), lmc.mu(), w))).collect();
    let pairs: Vec<(usize, usize)> = (1..=p).flat_map(|k| (k..=p).map(move |l| (k, l))).collect();
    let nf = n_mc as f64;
    radii
        .iter()
        .map(|&r| {
            let corr: Vec<f64> = lmc.rho().iter().map(|rho| (-rho * r).exp()).collect();
            let sig_t: Vec<Vec<f64>> = base
                .iter()
                .zip(&fresh)
                .map(|(ws, z)| {
                    let wt: Vec<f64> = (0..p)
                        .map(|j| corr[j] * ws[j] + (1.0 - corr[j] * corr[j]).sqrt() * z[j])
                        .collect();
                    sigma(&field_value(lmc.a(), lmc.mu(), &wt))
                })
                .collect();
            let marginal = |k: usize| -> Vec<f64> {
                sig_s.iter().zip(&sig_t).map(|(s, t)| 0.5 * (s[k] + t[k])).collect()
            };
            pairs
                .iter()
                .map(|&(k, l)| {
                    let joint: Vec<f64> = sig_s
                        .iter()
                        .zip(&sig_t)
                        .map(|(s, t)| 0.5 * (s[k] * t[l] + s[l] * t[k]))
                        .collect();
                    let bk = marginal(k);
                    let bl = marginal(l);
                    let mk = bk.iter().sum::<f64>() / nf;
                    let ml = bl.iter().sum::<f64>() / nf;
                    let mj = joint.iter().sum::<f64>() / nf;
                    let gamma = mj / (mk * ml);
                    let psi: Vec<f64> = (0..n_mc)
                        .map(|i| joint[i] / (mk * ml) - gamma * bk[i] / mk - gamma * bl[i] / ml)
                        .collect();
                    let se = if n_mc > 1 { (crate::stats::variance(&psi) / nf).sqrt() } else { f64::NAN };
                    (gamma, se)
                })
                .collect()
        })
        .collect()
}

/// Cross pair correlation functions `γ_kl(r)` for every pair of observed
/// types, averaged over parameter draws with pointwise 95% bands.
///
/// Both points of a pair share the same Gaussian draws at every radius, and
/// the estimator is symmetrized in `(k, l)`. The intensity scale does not
/// enter. Draw `d` uses random stream `d` of `seed`, so results do not
/// depend on how draws are scheduled.
pub fn pcf(draws: &[LmcParams], radii: &[f64], n_mc: usize, seed: u64) -> Result<PcfTable> {
    if draws.is_empty() {
        return Err(param("at least one parameter draw is needed"));
    }
    if n_mc < 2 {
        return Err(param("at least two Monte Carlo draws are needed"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(param(format!("distances must be positive, got {r}")));
    }
    let p = draws[0].p();
    if draws.iter().any(|d| d.p() != p) {
        return Err(param("parameter draws differ in the number of types"));
    }
    let per_draw: Vec<Vec<Vec<(f64, f64)>>> = draws
        .iter()
        .enumerate()
        .map(|(d, lmc)| pcf_one(&mut Rng::with_stream(seed, d as u64), lmc, radii, n_mc))
        .collect();
    let pairs: Vec<(usize, usize)> = (1..=p).flat_map(|k| (k..=p).map(move |l| (k, l))).collect();
    let nd = draws.len() as f64;
    let mut points = Vec::with_capacity(radii.len() * pairs.len());
    for (ri, &r) in radii.iter().enumerate() {
        for (pi, &(k, l)) in pairs.iter().enumerate() {
            let values: Vec<f64> = per_draw.iter().map(|d| d[ri][pi].0).collect();
            let se2: f64 = per_draw.iter().map(|d| d[ri][pi].1.powi(2)).sum();
            points.push(PcfPoint {
                r,
                k,
                l,
                mean: values.iter().sum::<f64>() / nd,
                lo95: crate::stats::quantile(&values, 0.025),
                hi95: crate::stats::quantile(&values, 0.975),
                mc_se: se2.sqrt() / nd,
            });
        }
    }
    Ok(PcfTable { n_draws: draws.len(), n_mc, points })
}
