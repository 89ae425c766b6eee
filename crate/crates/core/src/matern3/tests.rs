use std::collections::BTreeMap;
use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::*;
use crate::stats::{mean_se, poisson_gof, two_sample_chi_square, z_test, Estimate};

fn unit() -> Domain {
    Domain::unit_square()
}

fn line() -> Domain {
    Domain::interval(0.0, 1.0).unwrap()
}

fn timed(dom: &Domain, pts: &[(Point, f64)]) -> TimedPattern {
    TimedPattern::new(dom, pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect()).unwrap()
}

/// Label probability written in time order: each point only looks at the
/// kept points that precede it.
fn time_ordered_label_density(pattern: &TimedPattern, sh: &Shadow) -> f64 {
    let labels = pattern.labels().unwrap();
    let mut order: Vec<usize> = (0..pattern.len()).collect();
    order.sort_by(|&a, &b| pattern.times()[a].total_cmp(&pattern.times()[b]));
    let mut log_p = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        let free: f64 = order[..pos]
            .iter()
            .filter(|&&j| labels[j] == 1)
            .map(|&j| 1.0 - sh.kernel(&pattern.points()[i], &pattern.points()[j]))
            .product();
        log_p += if labels[i] == 1 { free.ln() } else { (1.0 - free).ln() };
    }
    log_p
}

#[test]
fn shadow_examples() {
    let sh = Shadow::disc(0.2).unwrap();
    assert_eq!(shadow_eval(&sh, &[0.5, 0.5], 0.3, &[0.5, 0.55], 0.3), 0.0);
    assert_eq!(shadow_eval(&sh, &[0.5, 0.5], 0.2, &[0.5, 0.55], 0.3), 0.0);
    assert_eq!(shadow_eval(&sh, &[0.5, 0.5], 0.4, &[0.5, 0.55], 0.3), 1.0);
    assert_eq!(shadow_eval(&sh, &[0.25, 0.0], 0.9, &[0.0, 0.0], 0.1), 0.0);
    let bump = Shadow::bump(0.8, 0.1).unwrap();
    assert_eq!(shadow_eval(&bump, &[0.3, 0.3], 0.5, &[0.3, 0.3], 0.5), 0.0);
    assert_eq!(shadow_eval(&sh, &[0.3, 0.3], 0.5, &[0.3, 0.3], 0.5), 0.0);
    assert!(Shadow::bump(1.5, 0.1).is_err());
    assert!(Shadow::disc(-0.1).is_err());
}

#[test]
fn combined_shadow_examples() {
    let dom = unit();
    let sh = Shadow::disc(0.2).unwrap();
    assert_eq!(combined_shadow_h(&[0.5, 0.5], 0.9, &TimedPattern::empty(), &sh), 0.0);
    let one = timed(&dom, &[([0.5, 0.5], 0.1)]);
    assert_eq!(combined_shadow_h(&[0.55, 0.5], 0.9, &one, &sh), 1.0);
    // Two bumps each worth 0.5 at the query point.
    let scale = 0.1;
    let d = scale * (2.0 * 2f64.ln()).sqrt();
    let bump = Shadow::bump(1.0, scale).unwrap();
    let two = timed(&dom, &[([0.5 - d, 0.5], 0.1), ([0.5 + d, 0.5], 0.2)]);
    assert_abs_diff_eq!(combined_shadow_h(&[0.5, 0.5], 0.9, &two, &bump), 0.75, epsilon = 1e-12);
}

#[test]
fn time_ties_are_rejected() {
    let dom = unit();
    assert!(TimedPattern::new(&dom, vec![[0.1, 0.1], [0.2, 0.2]], vec![0.5, 0.5]).is_err());
    assert!(TimedPattern::new(&dom, vec![[0.1, 0.1]], vec![1.5]).is_err());
    let a = timed(&dom, &[([0.1, 0.1], 0.5)]);
    let b = timed(&dom, &[([0.7, 0.7], 0.5)]);
    assert!(matches!(
        log_joint_density_m3(&a, &b, &dom, 1.0, &Shadow::disc(0.1).unwrap()),
        Err(Error::DuplicateTime(_))
    ));
}

#[test]
fn combine_and_split_round_trip() {
    let dom = unit();
    let (thinned, kept) = simulate_matern3(&mut Rng::new(3), &dom, 30.0, &Shadow::disc(0.15).unwrap()).unwrap();
    let both = TimedPattern::combine(&dom, &thinned, &kept).unwrap();
    let (t2, k2) = both.split(&dom).unwrap();
    assert_eq!((t2, k2), (thinned, kept));
}

#[test]
fn later_point_within_radius_is_thinned() {
    let sh = Shadow::disc(0.2).unwrap();
    let pts = [[0.5, 0.5], [0.6, 0.5]];
    assert_eq!(label_in_time_order(&mut Rng::new(0), &pts, &[0.7, 0.2], &sh), vec![false, true]);
    assert_eq!(label_in_time_order(&mut Rng::new(0), &pts, &[0.2, 0.7], &sh), vec![true, false]);
    // A thinned point casts no shadow.
    let chain = [[0.5, 0.5], [0.65, 0.5], [0.8, 0.5]];
    assert_eq!(
        label_in_time_order(&mut Rng::new(0), &chain, &[0.1, 0.2, 0.3], &sh),
        vec![true, false, true]
    );
}

#[test]
fn zero_radius_thins_nothing() {
    let dom = unit();
    let mut rng = Rng::new(9);
    for _ in 0..50 {
        let (thinned, kept) = simulate_matern3(&mut rng, &dom, 40.0, &Shadow::disc(0.0).unwrap()).unwrap();
        assert!(thinned.is_empty());
        assert!(kept.len() < 200);
    }
}

#[test]
fn hard_core_holds_in_simulation() {
    let dom = unit();
    let sh = Shadow::disc(0.1).unwrap();
    let mut rng = Rng::new(10);
    for _ in 0..2000 {
        let (thinned, kept) = simulate_matern3(&mut rng, &dom, 20.0, &sh).unwrap();
        for (i, a) in kept.points().iter().enumerate() {
            for b in &kept.points()[i + 1..] {
                assert!(distance(a, b) >= 0.1);
            }
        }
        for (s, t) in thinned.iter() {
            assert_eq!(combined_shadow_h(s, t, &kept, &sh), 1.0);
        }
    }
}

#[test]
fn simulated_labels_have_probability_one() {
    let dom = unit();
    let sh = Shadow::disc(0.12).unwrap();
    let mut rng = Rng::new(11);
    for _ in 0..100 {
        let (thinned, kept) = simulate_matern3(&mut rng, &dom, 25.0, &sh).unwrap();
        let both = TimedPattern::combine(&dom, &thinned, &kept).unwrap();
        assert_eq!(log_label_scatter(&both, &sh).unwrap(), 0.0);
        if both.len() > 1 {
            let mut labels = both.labels().unwrap().to_vec();
            // The latest point can be relabelled without touching anyone else.
            let last = (0..both.len()).max_by(|&a, &b| both.times()[a].total_cmp(&both.times()[b])).unwrap();
            labels[last] = 1 - labels[last];
            let flipped =
                TimedPattern::labelled(&dom, both.points().to_vec(), both.times().to_vec(), labels).unwrap();
            assert_eq!(log_label_scatter(&flipped, &sh).unwrap(), f64::NEG_INFINITY);
        }
    }
}

#[test]
fn label_density_is_order_free() {
    let dom = unit();
    let mut rng = Rng::new(12);
    let shadows = [Shadow::disc(0.3).unwrap(), Shadow::bump(0.9, 0.2).unwrap()];
    for case in 0..200 {
        let sh = shadows[case % 2];
        let n = 1 + case % 8;
        let points: Vec<Point> = (0..n).map(|_| dom.sample_uniform(&mut rng)).collect();
        let times: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let labels: Vec<u32> = if sh.is_deterministic() && case % 4 == 0 {
            label_in_time_order(&mut rng, &points, &times, &sh).into_iter().map(u32::from).collect()
        } else {
            (0..n).map(|_| rng.random_range(0..2)).collect()
        };
        let original = TimedPattern::labelled(&dom, points.clone(), times.clone(), labels.clone()).unwrap();
        let oracle = time_ordered_label_density(&original, &sh);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let shuffled = TimedPattern::labelled(
            &dom,
            perm.iter().map(|&i| points[i]).collect(),
            perm.iter().map(|&i| times[i]).collect(),
            perm.iter().map(|&i| labels[i]).collect(),
        )
        .unwrap();
        for p in [&original, &shuffled] {
            let got = log_label_scatter(p, &sh).unwrap();
            if oracle.is_finite() {
                // the oracle's plain ln(1 − Π) loses digits when a shadow is tiny
                assert!((got - oracle).abs() < 1e-8, "case {case}: {got} vs {oracle}");
            } else {
                assert_eq!(got, oracle, "case {case}");
            }
        }
    }
}

#[test]
fn joint_density_examples() {
    let dom = unit();
    let sh = Shadow::disc(0.1).unwrap();
    let e = TimedPattern::empty();
    assert_abs_diff_eq!(log_joint_density_m3(&e, &e, &dom, 7.0, &sh).unwrap(), -7.0, epsilon = 1e-15);
    let kept = timed(&dom, &[([0.2, 0.2], 0.3)]);
    let far = timed(&dom, &[([0.8, 0.8], 0.9)]);
    assert_eq!(log_joint_density_m3(&far, &kept, &dom, 7.0, &sh).unwrap(), f64::NEG_INFINITY);
    let near = timed(&dom, &[([0.25, 0.2], 0.9)]);
    let expected = -7.0 + 2.0 * 7f64.ln();
    assert_abs_diff_eq!(log_joint_density_m3(&near, &kept, &dom, 7.0, &sh).unwrap(), expected, epsilon = 1e-14);
}

#[test]
fn marginal_density_examples() {
    let dom = Domain::rectangle(0.0, 2.0, 0.0, 1.5).unwrap();
    let e = TimedPattern::empty();
    for sh in [Shadow::disc(0.3).unwrap(), Shadow::bump(0.5, 0.1).unwrap()] {
        let v = log_marginal_density_m3(&e, &dom, 4.0, &sh, Quadrature::Auto).unwrap();
        assert_abs_diff_eq!(v, -12.0, epsilon = 1e-14);
        let tiny = log_marginal_density_m3(&e, &dom, 1e-14, &sh, Quadrature::Auto).unwrap();
        assert!(tiny.exp() > 1.0 - 1e-12);
    }
}

#[test]
fn shadow_integral_closed_forms() {
    let dom = unit();
    // One kept disc at time 0.25 shadows its area for three quarters of the time.
    let one = timed(&dom, &[([0.5, 0.5], 0.25)]);
    let disc = Shadow::disc(0.2).unwrap();
    let exact = shadow_integral(&one, &dom, &disc, Quadrature::Auto).unwrap();
    assert_abs_diff_eq!(exact, 0.75 * PI * 0.04, epsilon = 1e-14);
    let grid = shadow_integral(&one, &dom, &disc, Quadrature::Midpoint { res: 1024 }).unwrap();
    assert!((grid - exact).abs() < 1e-4);
    // A narrow bump far from the border integrates to height · 2πℓ².
    let at_zero = timed(&dom, &[([0.5, 0.5], 0.0)]);
    let bump = Shadow::bump(0.5, 0.05).unwrap();
    let v = shadow_integral(&at_zero, &dom, &bump, Quadrature::Auto).unwrap();
    assert_abs_diff_eq!(v, 0.5 * 2.0 * PI * 0.0025, epsilon = 1e-9);
}

#[test]
fn exact_and_grid_integrals_agree_on_simulated_patterns() {
    let dom = unit();
    let sh = Shadow::disc(0.1).unwrap();
    let mut rng = Rng::new(13);
    for _ in 0..10 {
        let (_, kept) = simulate_matern3(&mut rng, &dom, 20.0, &sh).unwrap();
        let exact = shadow_integral(&kept, &dom, &sh, Quadrature::Auto).unwrap();
        let grid = shadow_integral(&kept, &dom, &sh, Quadrature::Midpoint { res: 1024 }).unwrap();
        assert!((exact - grid).abs() < 5e-4, "{exact} vs {grid}");
    }
}

#[test]
fn density_chain_on_random_configurations() {
    let dom = unit();
    let mut rng = Rng::new(14);
    for sh in [Shadow::disc(0.1).unwrap(), Shadow::bump(0.7, 0.05).unwrap()] {
        for case in 0..20 {
            let (sim_thinned, kept) = simulate_matern3(&mut rng, &dom, 20.0, &sh).unwrap();
            let thinned = if case % 2 == 0 {
                sim_thinned
            } else {
                sample_conditional_thinned_m3(&mut rng, &kept, &dom, 20.0, &sh).unwrap()
            };
            let joint = log_joint_density_m3(&thinned, &kept, &dom, 20.0, &sh).unwrap();
            let marginal = log_marginal_density_m3(&kept, &dom, 20.0, &sh, Quadrature::Auto).unwrap();
            let cond = log_conditional_density_m3(&thinned, &kept, &dom, 20.0, &sh, Quadrature::Auto).unwrap();
            assert!(joint.is_finite() && marginal.is_finite());
            assert!((joint - marginal - cond).abs() < 1e-10, "{sh:?} case {case}");
        }
    }
}

#[test]
fn joint_over_conditional_is_constant() {
    let dom = unit();
    let sh = Shadow::bump(0.8, 0.08).unwrap();
    let mut rng = Rng::new(15);
    let (_, kept) = simulate_matern3(&mut rng, &dom, 20.0, &sh).unwrap();
    let marginal = log_marginal_density_m3(&kept, &dom, 20.0, &sh, Quadrature::Auto).unwrap();
    for _ in 0..100 {
        let thinned = sample_conditional_thinned_m3(&mut rng, &kept, &dom, 20.0, &sh).unwrap();
        let ratio = log_joint_density_m3(&thinned, &kept, &dom, 20.0, &sh).unwrap()
            - log_conditional_density_m3(&thinned, &kept, &dom, 20.0, &sh, Quadrature::Auto).unwrap();
        assert!((ratio - marginal).abs() < 1e-10);
    }
}

#[test]
fn conditional_sampler_examples() {
    let dom = unit();
    let sh = Shadow::disc(0.2).unwrap();
    let mut rng = Rng::new(16);
    for _ in 0..100 {
        assert!(sample_conditional_thinned_m3(&mut rng, &TimedPattern::empty(), &dom, 50.0, &sh)
            .unwrap()
            .is_empty());
    }
    let full = Shadow::disc((0.3 / PI).sqrt()).unwrap();
    let kept = timed(&dom, &[([0.5, 0.5], 0.0)]);
    let counts: Vec<usize> = (0..20_000)
        .map(|_| sample_conditional_thinned_m3(&mut rng, &kept, &dom, 10.0, &full).unwrap().len())
        .collect();
    assert!(poisson_gof(&counts, 3.0).p_value > 0.001);
}

fn count_class_frequencies(
    rng: &mut Rng,
    dom: &Domain,
    lambda: f64,
    sh: &Shadow,
    reps: usize,
) -> BTreeMap<(usize, usize), f64> {
    let mut freq = BTreeMap::new();
    for _ in 0..reps {
        let (t, k) = simulate_matern3(rng, dom, lambda, sh).unwrap();
        *freq.entry((t.len(), k.len())).or_insert(0.0) += 1.0;
    }
    freq
}

fn uniform_timed(rng: &mut Rng, dom: &Domain, n: usize) -> TimedPattern {
    let p = (0..n).map(|_| dom.sample_uniform(rng)).collect();
    let t = (0..n).map(|_| rng.random()).collect();
    TimedPattern::new(dom, p, t).unwrap()
}

fn frequency_estimate(count: f64, reps: usize) -> Estimate {
    let p = count / reps as f64;
    Estimate {
        mean: p,
        se: (p * (1.0 - p) / reps as f64).sqrt(),
    }
}

/// Probabilities of count classes from forward simulation against the
/// densities integrated by plain Monte Carlo over uniform configurations.
#[test]
fn densities_match_forward_simulation_on_a_line() {
    let dom = line();
    let lambda = 1.5;
    let reps = 200_000;
    let draws = 50_000;
    let mut rng = Rng::new(17);
    for sh in [Shadow::disc(0.3).unwrap(), Shadow::bump(0.8, 0.2).unwrap()] {
        let freq = count_class_frequencies(&mut rng, &dom, lambda, &sh, reps);
        for n in 0..=3 {
            for n1 in 0..=n {
                let n0 = n - n1;
                let vals: Vec<f64> = (0..draws)
                    .map(|_| {
                        let t = uniform_timed(&mut rng, &dom, n0);
                        let k = uniform_timed(&mut rng, &dom, n1);
                        log_joint_density_m3(&t, &k, &dom, lambda, &sh).unwrap().exp()
                    })
                    .collect();
                let sim = frequency_estimate(freq.get(&(n0, n1)).copied().unwrap_or(0.0), reps);
                let z = z_test(sim, mean_se(&vals)).statistic;
                assert!(z.abs() < 4.5, "{sh:?} joint ({n0},{n1}): z = {z}");
            }
            let kept_class: f64 = freq.iter().filter(|((_, k), _)| *k == n).map(|(_, c)| c).sum();
            let vals: Vec<f64> = (0..draws)
                .map(|_| {
                    let k = uniform_timed(&mut rng, &dom, n);
                    log_marginal_density_m3(&k, &dom, lambda, &sh, Quadrature::Auto).unwrap().exp()
                })
                .collect();
            let z = z_test(frequency_estimate(kept_class, reps), mean_se(&vals)).statistic;
            assert!(z.abs() < 4.5, "{sh:?} marginal {n}: z = {z}");
        }
    }
}

/// Thinned counts from forward runs with two kept points against
/// conditional draws given the same kept points.
#[test]
fn conditional_sampler_agrees_with_forward_runs() {
    let dom = line();
    let mut rng = Rng::new(18);
    for sh in [Shadow::disc(0.2).unwrap(), Shadow::bump(0.9, 0.1).unwrap()] {
        let mut forward = Vec::new();
        let mut backward = Vec::new();
        while forward.len() < 20_000 {
            let (t, k) = simulate_matern3(&mut rng, &dom, 4.0, &sh).unwrap();
            if k.len() == 2 {
                forward.push(t.len());
                backward.push(sample_conditional_thinned_m3(&mut rng, &k, &dom, 4.0, &sh).unwrap().len());
            }
        }
        let test = two_sample_chi_square(&forward, &backward);
        assert!(test.p_value > 0.001, "{sh:?}: {test:?}");
    }
}

#[test]
fn shadow_config_round_trips_through_json() {
    let sh = Shadow::bump(0.5, 0.1).unwrap();
    let text = serde_json::to_string(&sh).unwrap();
    assert_eq!(text, r#"{"kind":"bump","height":0.5,"scale":0.1}"#);
    assert_eq!(serde_json::from_str::<Shadow>(&text).unwrap(), sh);
    assert!(serde_json::from_str::<Shadow>(r#"{"kind":"disc","radius":0.1,"extra":1}"#).is_err());
}
