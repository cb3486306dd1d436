//! Deterministic probe sets: directions on the sphere and points in shells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::norm;

/// `count` pseudo-random unit vectors in `R^n` from a fixed seed.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-8 {
            out.push(v.into_iter().map(|x| x / r).collect());
        }
    }
    out
}

/// Coordinate axes `±e_i` followed by `count` pseudo-random directions.
pub fn directions_with_axes(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * n + count);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            out.push(e);
        }
    }
    out.extend(sphere_directions(n, count, seed));
    out
}

/// Directions closed under `v -> -v`.
pub fn antipodal_directions(n: usize, pairs: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * pairs);
    for d in sphere_directions(n, pairs, seed) {
        out.push(d.iter().map(|x| -x).collect());
        out.push(d);
    }
    out
}

/// Radii spaced geometrically in `[r_min, r_max]`.
pub fn log_radii(r_min: f64, r_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![r_min];
    }
    let (a, b) = (r_min.ln(), r_max.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Points with log-uniform radius in `[r_min, r_max]` and random direction.
pub fn shell_points(n: usize, count: usize, r_min: f64, r_max: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    sphere_directions(n, count, seed)
        .into_iter()
        .map(|d| {
            let t: f64 = rng.gen();
            let r = (r_min.ln() + t * (r_max.ln() - r_min.ln())).exp();
            d.into_iter().map(|x| r * x).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_unit_and_reproducible() {
        let a = sphere_directions(5, 32, 7);
        let b = sphere_directions(5, 32, 7);
        assert_eq!(a, b);
        for d in &a {
            assert!((norm(d) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn radii_span_interval() {
        let r = log_radii(1e-3, 1e3, 7);
        assert!((r[0] - 1e-3).abs() < 1e-15);
        assert!((r[6] - 1e3).abs() < 1e-9);
        assert!((r[3] - 1.0).abs() < 1e-12);
    }
}
