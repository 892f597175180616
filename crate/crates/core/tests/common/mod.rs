//! Shared oracles for the integration tests.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Printed critical values: rows α = .1, .05, .01; columns ρ = 0.8 … 1.0.
pub const TABLE1_PRINTED: [[f64; 7]; 3] = [
    [1.28, 1.29, 1.31, 1.36, 1.44, 1.54, 1.64],
    [1.64, 1.65, 1.65, 1.70, 1.76, 1.81, 1.96],
    [2.33, 2.33, 2.33, 2.34, 2.40, 2.43, 2.58],
];
pub const TABLE1_RHOS: [f64; 7] = [0.8, 0.85, 0.9, 0.95, 0.98, 0.99, 1.0];
pub const TABLE1_ALPHAS: [f64; 3] = [0.1, 0.05, 0.01];

/// One simulated design: true bounds `[0, delta]`, true value `lambda·delta`.
#[derive(Debug, Clone, Copy)]
pub struct Design {
    pub delta: f64,
    pub lambda: f64,
    pub c: f64,
    pub sigma_l: f64,
    pub sigma_u: f64,
    pub rho: f64,
    pub alpha: f64,
}

fn inv_normal_975(alpha: f64) -> f64 {
    // bisection on erfc so the oracle does not share the crate's quantile
    let target = 1.0 - alpha / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * libm::erfc(-mid / std::f64::consts::SQRT_2) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Coverage of the adaptive interval estimated by building it on each draw.
/// Returns `(estimate, standard error)`.
pub fn simulated_coverage(d: &Design, draws: u64, seed: u64) -> (f64, f64) {
    let z = inv_normal_975(d.alpha);
    let theta = d.lambda * d.delta;
    let w = d.sigma_l / (d.sigma_l + d.sigma_u);
    let s_star =
        d.sigma_l * d.sigma_u * (2.0 + 2.0 * d.rho).max(0.0).sqrt() / (d.sigma_l + d.sigma_u);
    let chunks = 64u64;
    let per = draws / chunks;
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(k));
            let tail = (1.0 - d.rho * d.rho).max(0.0).sqrt();
            let mut h = 0u64;
            for _ in 0..per {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let z1 = e1;
                let z2 = d.rho * e1 + tail * e2;
                let tl = d.sigma_l * z1;
                let tu = d.delta + d.sigma_u * z2;
                let in_set = tl - d.c * d.sigma_l <= theta && theta <= tu + d.c * d.sigma_u;
                let center = tl + w * (tu - tl);
                let in_pseudo = (theta - center).abs() <= z * s_star;
                h += (in_set || in_pseudo) as u64;
            }
            h
        })
        .sum();
    let n = (per * chunks) as f64;
    let p = hits as f64 / n;
    (p, (p * (1.0 - p) / n).sqrt())
}
