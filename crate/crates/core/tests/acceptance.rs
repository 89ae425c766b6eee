//! Acceptance suite. Runs every criterion at full size and prints one line
//! per criterion. Criterion 10 is reported but never fails the run.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 5 9`.

use std::path::Path;
use std::time::{Duration, Instant};

use coxthin::colouring::verify_colouring;
use coxthin::gp::{Kernel, LmcParams};
use coxthin::io::load_csv;
use coxthin::matern3::{verify_matern3, Matern3CheckConfig};
use coxthin::mtsgcp::{
    fit, geweke_test, log_joint_density_mt, pcf, simulate_mtsgcp, GewekeConfig, GibbsControls, GibbsState,
    MtsgcpParams, Priors,
};
use coxthin::sgcp::{
    compare_samplers_empty, verify_appendix_b, verify_appendix_c, verify_detailed_balance, BdmControls,
    EmptyComparisonConfig, SgcpParams,
};
use coxthin::{Domain, Result, Rng};
use nalgebra::DMatrix;

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Report,
}

struct Outcome {
    verdict: Verdict,
    summary: String,
}

fn pass_if(ok: bool, summary: String) -> Outcome {
    Outcome { verdict: if ok { Verdict::Pass } else { Verdict::Fail }, summary }
}

fn kernel(range: f64) -> Kernel {
    Kernel::exponential(range, 1.0).expect("valid kernel")
}

fn colouring() -> Result<Outcome> {
    let r = verify_colouring(1e-10)?;
    let dependent = r.checks.iter().any(|c| c.model.starts_with("dependent"));
    let ok = r.passed && r.checks.len() >= 5 && dependent && r.max_abs_error < 1e-10;
    Ok(pass_if(ok, format!("{} models, max |PMF error| = {:.2e}", r.checks.len(), r.max_abs_error)))
}

fn appendix_b() -> Result<Outcome> {
    let params = SgcpParams::new(5.0, kernel(2.0), Domain::unit_square())?;
    let r = verify_appendix_b(&mut Rng::new(2002), &params, 100_000, 128, 2, &[0.05, 0.1, 0.2])?;
    let pairs: Vec<String> = r.pair_count_tests.iter().map(|t| format!("{:.3}", t.p_value)).collect();
    Ok(pass_if(
        r.count_test.p_value > 0.01,
        format!(
            "count chi-square p = {:.3} (means {:.4} vs {:.4}); pair-count p = [{}]",
            r.count_test.p_value,
            r.mean_count_thinning,
            r.mean_count_grid,
            pairs.join(", ")
        ),
    ))
}

fn appendix_c() -> Result<Outcome> {
    let mut rng = Rng::new(3003);
    let mut ok = true;
    let mut parts = Vec::new();
    for lambda in [2.0, 5.0] {
        let params = SgcpParams::new(lambda, kernel(2.0), Domain::unit_square())?;
        let r = verify_appendix_c(&mut rng.fork(), &params, 10_000, 64, None)?;
        ok &= r.mean_log_void_z.abs() < 3.0 && r.jensen_z > 3.0;
        parts.push(format!(
            "λ|S|={lambda}: identity z = {:+.2}, Jensen z = {:.1}",
            r.mean_log_void_z, r.jensen_z
        ));
    }
    Ok(pass_if(ok, parts.join("; ")))
}

fn sampler_forensics() -> Result<Outcome> {
    let params = SgcpParams::new(3.0, kernel(2.0), Domain::unit_square())?;
    let cfg = EmptyComparisonConfig { n_sweeps: 100_000, n_iid: 100_000, ..EmptyComparisonConfig::default() };
    let r = compare_samplers_empty(&mut Rng::new(4004), &params, &BdmControls::default(), &cfg)?;
    let gon_poisson = r.goncalves_vs_poisson.as_ref().map_or(f64::NAN, |t| t.p_value);
    let gon_bdm = r.goncalves_vs_bdm.as_ref().map_or(f64::NAN, |t| t.p_value);
    let ok = r.bdm_lower && r.difference.statistic > 3.0 && r.rao_vs_marginal.p_value > 0.01 && gon_bdm < 0.01;
    Ok(pass_if(
        ok,
        format!(
            "P(empty): chain {:.4}±{:.4} < Rao {:.4}±{:.4}, z = {:.1}; Rao vs marginal p = {:.3}; \
             Gonçalves vs Poisson p = {:.3}, vs chain p = {:.1e}",
            r.bdm_empty.mean,
            r.bdm_empty.se,
            r.rao_empty.mean,
            r.rao_empty.se,
            r.difference.statistic,
            r.rao_vs_marginal.p_value,
            gon_poisson,
            gon_bdm
        ),
    ))
}

fn detailed_balance() -> Result<Outcome> {
    let r = verify_detailed_balance(&mut Rng::new(5005), 500)?;
    Ok(pass_if(
        r.n_pairs == 500 && r.max_residual < 1e-8,
        format!("{} pairs, max residual = {:.2e}", r.n_pairs, r.max_residual),
    ))
}

fn matern3(report: &coxthin::matern3::Matern3Report, density: bool) -> Outcome {
    if density {
        pass_if(
            report.max_chain_residual < 1e-10 && report.hard_core_violations == 0,
            format!(
                "{} configurations, max residual = {:.2e}; hard-core violations {}/{}",
                report.config.n_configs,
                report.max_chain_residual,
                report.hard_core_violations,
                report.config.n_hard_core
            ),
        )
    } else {
        pass_if(
            !report.conditional_test.rejects(0.01),
            format!(
                "mean count {:.4} vs {:.1}, chi-square p = {:.3} over {} draws",
                report.conditional_mean_count,
                report.conditional_expected,
                report.conditional_test.p_value,
                report.config.n_conditional
            ),
        )
    }
}

/// Largest relative error of the log joint gradient against central
/// differences, on states built from simulated two-type patterns.
fn gradient_error() -> Result<f64> {
    let mut rng = Rng::new(8118);
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for case in 0..10 {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.6 + 0.1 * case as f64, 0.8]);
        let lmc = LmcParams::new(a, vec![4.0, 7.0], vec![0.3, -0.2])?;
        let params = MtsgcpParams::new(40.0, lmc, Domain::unit_square())?;
        let (thinned, observed) = simulate_mtsgcp(&mut rng, &params)?;
        let state = GibbsState::new(&params, &observed, &thinned)?;
        let grad = state.log_joint_gradient();
        for m in 0..state.marks().len() {
            let at = |d: f64| -> Result<f64> {
                let mut s = state.clone();
                let mut g = s.marks().to_vec();
                g[m] += d;
                s.set_marks(g)?;
                Ok(log_joint_density_mt(&s))
            };
            let fd = (at(h)? - at(-h)?) / (2.0 * h);
            worst = worst.max((fd - grad[m]).abs() / grad[m].abs().max(1.0));
        }
    }
    Ok(worst)
}

fn geweke() -> Result<Outcome> {
    let cfg = GewekeConfig { n_samples: 5_000, ..GewekeConfig::default() };
    let r = geweke_test(&mut Rng::new(8008), &cfg)?;
    let grad = gradient_error()?;
    let parts: Vec<String> = r
        .tests
        .iter()
        .map(|t| format!("{}[{}] p={:.3}", t.quantity, t.moment, t.p_value))
        .collect();
    let ok = r.tests.iter().all(|t| t.p_value > 0.005) && grad < 1e-4;
    Ok(pass_if(
        ok,
        format!(
            "{} samples: {}; HMC accept {:.2}; gradient rel error {:.1e}",
            r.n_samples,
            parts.join(", "),
            r.hmc_accept_mean,
            grad
        ),
    ))
}

fn pcf_properties() -> Result<Outcome> {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.6, 0.8]);
    let rho = vec![5.0, 8.0];
    let lmc = LmcParams::new(a, rho.clone(), vec![0.0, 0.0])?;
    let far = 50.0 / rho.iter().cloned().fold(f64::INFINITY, f64::min);
    let radii = [0.01, far];
    let n_mc = 100_000;

    let low = MtsgcpParams::new(10.0, lmc.clone(), Domain::unit_square())?;
    let high = MtsgcpParams::new(1000.0, lmc, Domain::unit_square())?;
    let table = pcf(std::slice::from_ref(&low.lmc), &radii, n_mc, 99)?;
    let again = pcf(std::slice::from_ref(&high.lmc), &radii, n_mc, 99)?;
    let invariant = table.points.iter().zip(&again.points).all(|(x, y)| x.mean.to_bits() == y.mean.to_bits());

    let mut ok = invariant;
    let mut far_z: f64 = 0.0;
    for (k, l) in [(1, 1), (1, 2), (2, 2)] {
        let pt = table.get(k, l, far).expect("radius present");
        let z = (pt.mean - 1.0) / pt.mc_se.max(f64::MIN_POSITIVE);
        far_z = far_z.max(z.abs());
        ok &= z.abs() < 3.0 || pt.mean == 1.0;
    }
    let near: Vec<f64> = [1, 2].iter().map(|&k| table.get(k, k, 0.01).expect("radius present").mean).collect();
    ok &= near.iter().all(|&g| g > 1.0);
    Ok(pass_if(
        ok,
        format!(
            "max |γ(r={far})−1|/SE = {far_z:.2}; γ_kk(0.01) = [{:.3}, {:.3}]; λ-invariant: {invariant}",
            near[0], near[1]
        ),
    ))
}

fn lansing() -> Result<Outcome> {
    const CHAINS: usize = 2;
    const ITERS: usize = 150;
    const BURN: usize = 150;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/lansing_maple_hickory.csv");
    let dom = Domain::unit_square();
    let data = load_csv(&path, &dom, Some("species"), false)?;
    let priors = Priors::default_for(&dom);
    let controls = GibbsControls::default();
    let mut draws = Vec::new();
    for c in 0..CHAINS {
        let mut rng = Rng::with_stream(1010, c as u64);
        let trace = fit(&mut rng, &data.patterns, &dom, &priors, &controls, ITERS, BURN)?;
        for rec in &trace.records {
            draws.push(rec.lmc()?);
        }
    }
    let radii = [0.02, 0.05, 0.1, 0.2, 0.4];
    let thinned: Vec<LmcParams> = draws.iter().step_by(3).cloned().collect();
    let table = pcf(&thinned, &radii, 10_000, 1010)?;
    let cross: Vec<String> = radii
        .iter()
        .map(|&r| {
            let pt = table.get(1, 2, r).expect("radius present");
            format!("{r}: {:.3} [{:.3}, {:.3}]", pt.mean, pt.lo95, pt.hi95)
        })
        .collect();
    let small = table.get(1, 2, 0.02).expect("radius present").mean;
    let far = table.get(1, 2, 0.4).expect("radius present").mean;
    Ok(Outcome {
        verdict: Verdict::Report,
        summary: format!(
            "{CHAINS} chains × {ITERS} iterations after {BURN} burn-in, counts {:?}; γ_12(r): {}; \
             below 1 at small r: {}, within 0.05 of 1 at r = 0.4: {}",
            data.counts(),
            cross.join(", "),
            small < 1.0,
            (far - 1.0).abs() < 0.05
        ),
    })
}

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| filter.is_empty() || filter.contains(&n);

    let mut matern_report = None;
    let mut matern_time = Duration::ZERO;
    if wanted(6) || wanted(7) {
        let start = Instant::now();
        matern_report = Some(verify_matern3(&mut Rng::new(6006), &Matern3CheckConfig::default()));
        matern_time = start.elapsed();
    }

    type Check<'a> = (usize, &'a str, Duration, Box<dyn FnOnce() -> Result<Outcome> + 'a>);
    let matern_ref = &matern_report;
    let shared = |density: bool| -> Box<dyn FnOnce() -> Result<Outcome> + '_> {
        Box::new(move || match matern_ref.as_ref().expect("run above") {
            Ok(r) => Ok(matern3(r, density)),
            Err(e) => Ok(Outcome { verdict: Verdict::Fail, summary: format!("error: {e}") }),
        })
    };
    let checks: Vec<Check> = vec![
        (1, "colouring oracle", Duration::from_secs(30), Box::new(colouring)),
        (2, "thinning vs grid Cox", Duration::from_secs(300), Box::new(appendix_b)),
        (3, "void identities", Duration::from_secs(600), Box::new(appendix_c)),
        (4, "sampler forensics", Duration::from_secs(1200), Box::new(sampler_forensics)),
        (5, "detailed balance", Duration::from_secs(60), Box::new(detailed_balance)),
        (6, "Matern III density chain", Duration::from_secs(120), shared(true)),
        (7, "Matern III conditional law", Duration::from_secs(120), shared(false)),
        (8, "multitype Gibbs (Geweke)", Duration::from_secs(3600), Box::new(geweke)),
        (9, "PCF estimator", Duration::from_secs(300), Box::new(pcf_properties)),
        (10, "Lansing worked example", Duration::from_secs(8 * 3600), Box::new(lansing)),
    ];

    let mut failures = 0;
    for (n, name, budget, check) in checks {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        // both Matern III criteria come from one run, timed once
        let elapsed = if n == 6 || n == 7 { matern_time } else { start.elapsed() };
        let (verdict, summary) = match result {
            Ok(o) => (o.verdict, o.summary),
            Err(e) => (Verdict::Fail, format!("error: {e}")),
        };
        let in_budget = elapsed <= budget;
        let label = match (verdict, in_budget) {
            (Verdict::Report, _) => "REPORT",
            (Verdict::Pass, true) => "PASS",
            (Verdict::Pass, false) => "FAIL (over time budget)",
            (Verdict::Fail, _) => "FAIL",
        };
        if verdict == Verdict::Fail || (verdict == Verdict::Pass && !in_budget) {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {label:<6} {name}: {summary} [{:.1}s, budget {}s]",
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("acceptance: {failures} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all asserted criteria passed");
}
