//! Seeded sampling helpers. All randomness in the crate flows through
//! [`Rng`], so a fixed seed reproduces every check bit for bit.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Domain;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in the cube `[-r, r]^n`.
pub fn cube(rng: &mut Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..=r)).collect()
}

/// Uniform in the closed ball of radius `r`.
pub fn ball(rng: &mut Rng, n: usize, r: f64) -> Vec<f64> {
    loop {
        let v = cube(rng, n, 1.0);
        let n2: f64 = v.iter().map(|a| a * a).sum();
        if n2 <= 1.0 && n2 > 0.0 {
            return v.into_iter().map(|a| a * r).collect();
        }
    }
}

/// Uniform direction on the unit sphere in `ℝ^n`.
pub fn direction(rng: &mut Rng, n: usize) -> Vec<f64> {
    let v = ball(rng, n, 1.0);
    let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / len).collect()
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..=hi)
}

/// A point of `domain` with margin at least `min_margin`, by rejection
/// from a box that covers it (radius `search` for unbounded domains).
pub fn in_domain(rng: &mut Rng, domain: &Domain, dim: usize, min_margin: f64, search: f64) -> Option<Vec<f64>> {
    let (center, half) = match domain {
        Domain::Ball { center, radius } => (center.clone(), vec![*radius; dim]),
        Domain::Box { center, half_widths } => (center.clone(), half_widths.clone()),
        Domain::Whole | Domain::Custom(_) => (vec![0.0; dim], vec![search; dim]),
    };
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..dim).map(|i| center[i] + rng.gen_range(-1.0..=1.0) * half[i].min(search)).collect();
        if domain.margin(&x) >= min_margin {
            return Some(x);
        }
    }
    None
}
