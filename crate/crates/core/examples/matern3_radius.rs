//! Posterior for the hard-core radius of a Matern III pattern.
//!
//! Simulates kept points with known birth times, then runs a random-walk
//! Metropolis chain on the radius under a uniform prior, with the intensity
//! held at its true value. Prints the posterior mean and a 95% interval.
//!
//!     cargo run --release -p coxthin --example matern3_radius

use coxthin::matern3::{log_marginal_density_m3, simulate_matern3, Quadrature, Shadow};
use coxthin::{Domain, Result, Rng};
use rand::Rng as _;

const TRUE_RADIUS: f64 = 0.08;
const LAMBDA: f64 = 60.0;
const PRIOR: (f64, f64) = (0.01, 0.3);

fn main() -> Result<()> {
    let dom = Domain::unit_square();
    let mut rng = Rng::new(42);
    let (_, kept) = simulate_matern3(&mut rng, &dom, LAMBDA, &Shadow::disc(TRUE_RADIUS)?)?;
    println!("{} kept points, true radius {TRUE_RADIUS}", kept.len());

    let log_post = |r: f64| -> f64 {
        if !(PRIOR.0..PRIOR.1).contains(&r) {
            return f64::NEG_INFINITY;
        }
        Shadow::disc(r)
            .and_then(|sh| log_marginal_density_m3(&kept, &dom, LAMBDA, &sh, Quadrature::Auto))
            .unwrap_or(f64::NEG_INFINITY)
    };

    let (n_iter, n_burn, step) = (4_000, 1_000, 0.01);
    let mut r = 0.05;
    let mut current = log_post(r);
    let mut accepted = 0;
    let mut draws = Vec::with_capacity(n_iter);
    for it in 0..n_burn + n_iter {
        let proposal = r + step * (2.0 * rng.random::<f64>() - 1.0);
        let candidate = log_post(proposal);
        if rng.random::<f64>().ln() < candidate - current {
            r = proposal;
            current = candidate;
            accepted += 1;
        }
        if it >= n_burn {
            draws.push(r);
        }
    }
    draws.sort_by(f64::total_cmp);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let q = |p: f64| draws[((draws.len() - 1) as f64 * p) as usize];
    println!(
        "posterior mean {mean:.4}, 95% interval [{:.4}, {:.4}], acceptance {:.2}",
        q(0.025),
        q(0.975),
        accepted as f64 / (n_burn + n_iter) as f64
    );
    Ok(())
}
