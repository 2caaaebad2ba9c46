#![allow(dead_code)]

use chemoblow_core::{RadialField, RadialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth positive random profile: a few cosine modes on top of a floor.
pub fn smooth_positive(grid: &RadialGrid, rng: &mut ChaCha8Rng, floor: f64) -> RadialField {
    let r_max = grid.radius();
    let coeffs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let raw = RadialField::from_fn(grid, |r| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * (k as f64 * std::f64::consts::PI * r / r_max).cos())
            .sum()
    });
    let lo = raw.min();
    raw.map(|x| x - lo + floor)
}

/// Cellwise independent positive values in `[lo, hi)`.
pub fn rough_positive(grid: &RadialGrid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> RadialField {
    RadialField::new((0..grid.cells()).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Composite Simpson rule for `∫_a^b f` with `2 * half` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, half: usize) -> f64 {
    let n = 2 * half;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// `log2(e_i / e_{i+1})` for successive halvings.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect()
}

pub fn assert_close(a: f64, b: f64, rel: f64) {
    let scale = a.abs().max(b.abs()).max(1e-300);
    assert!((a - b).abs() <= rel * scale, "{a} vs {b} (rel tol {rel})");
}
