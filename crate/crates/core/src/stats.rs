//! Small statistical toolkit used by the verification routines: goodness of
//! fit and two-sample tests on count data, z-tests on means, Monte Carlo
//! standard errors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Normal, Poisson};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

const MIN_EXPECTED: f64 = 5.0;

fn chi2_sf(stat: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df).expect("positive df").cdf(stat)
}

/// Two-sided normal p-value for a z statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    let n = Normal::standard();
    2.0 * (1.0 - n.cdf(z.abs()))
}

/// Merges adjacent bins (left to right) until every pooled bin has weight at
/// least `MIN_EXPECTED`; a light remainder joins the last pooled bin.
fn pool_bins(weights: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if acc >= MIN_EXPECTED {
            out.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < weights.len() {
        match out.last_mut() {
            Some(last) => last.end = weights.len(),
            None => out.push(0..weights.len()),
        }
    }
    out
}

/// Pearson goodness of fit of observed bin counts against bin probabilities.
/// `probs` should cover the full support (include a tail bin).
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> TestResult {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * total as f64).collect();
    let bins = pool_bins(&expected);
    let mut stat = 0.0;
    for r in &bins {
        let o: f64 = observed[r.clone()].iter().map(|&v| v as f64).sum();
        let e: f64 = expected[r.clone()].iter().sum();
        if e > 0.0 {
            stat += (o - e).powi(2) / e;
        }
    }
    let df = bins.len() as f64 - 1.0;
    TestResult {
        statistic: stat,
        df,
        p_value: chi2_sf(stat, df),
    }
}

pub fn histogram(counts: &[usize]) -> Vec<u64> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut h = vec![0u64; max + 1];
    for &c in counts {
        h[c] += 1;
    }
    h
}

/// Goodness of fit of integer samples to `Poisson(mean)`.
pub fn poisson_gof(samples: &[usize], mean: f64) -> TestResult {
    let pois = Poisson::new(mean).expect("positive mean");
    let hist = histogram(samples);
    let k = hist.len().max((mean + 10.0 * mean.sqrt() + 10.0) as usize);
    let mut observed = hist.clone();
    observed.resize(k + 1, 0);
    let mut probs: Vec<f64> = (0..k).map(|i| pois.pmf(i as u64)).collect();
    probs.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
    chi_square_gof(&observed, &probs)
}

/// Two-sample chi-square test of homogeneity for integer-valued samples.
pub fn two_sample_chi_square(a: &[usize], b: &[usize]) -> TestResult {
    let ha = histogram(a);
    let hb = histogram(b);
    let k = ha.len().max(hb.len());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let get = |h: &Vec<u64>, i: usize| h.get(i).copied().unwrap_or(0) as f64;
    // pooling is driven by the smaller expected count of the two rows
    let min_expected: Vec<f64> = (0..k)
        .map(|i| (get(&ha, i) + get(&hb, i)) * na.min(nb) / n)
        .collect();
    let bins = pool_bins(&min_expected);
    let mut stat = 0.0;
    for r in &bins {
        let oa: f64 = r.clone().map(|i| get(&ha, i)).sum();
        let ob: f64 = r.clone().map(|i| get(&hb, i)).sum();
        let col = oa + ob;
        if col == 0.0 {
            continue;
        }
        let ea = col * na / n;
        let eb = col * nb / n;
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let df = bins.len() as f64 - 1.0;
    TestResult {
        statistic: stat,
        df,
        p_value: chi2_sf(stat, df),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Mean with the i.i.d. standard error.
pub fn mean_se(xs: &[f64]) -> Estimate {
    Estimate {
        mean: mean(xs),
        se: (variance(xs) / xs.len() as f64).sqrt(),
    }
}

/// Mean with a batch-means standard error for autocorrelated chains.
pub fn batch_means(xs: &[f64], n_batches: usize) -> Estimate {
    let size = xs.len() / n_batches;
    assert!(size >= 2, "too few samples for {n_batches} batches");
    let means: Vec<f64> = xs.chunks_exact(size).take(n_batches).map(mean).collect();
    Estimate {
        mean: mean(xs),
        se: (variance(&means) / n_batches as f64).sqrt(),
    }
}

/// z-test for equality of two independent estimates.
pub fn z_test(a: Estimate, b: Estimate) -> TestResult {
    let se = a.se.hypot(b.se);
    let z = if se > 0.0 { (a.mean - b.mean) / se } else { 0.0 };
    TestResult {
        statistic: z,
        df: f64::INFINITY,
        p_value: normal_two_sided(z),
    }
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
