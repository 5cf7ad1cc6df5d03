// SPDX-License-Identifier: Apache-2.0

//! Low-discrepancy point sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Randomly shifted Halton sequence in the unit cube.
///
/// The shift is drawn from the seed, so identical seeds give identical sets.
#[derive(Clone, Debug)]
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton: at most {} dimensions", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        Halton { dim, shift }
    }

    /// The i-th point (0-based); coordinates lie in [0, 1).
    pub fn point(&self, i: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|d| {
                let v = radical_inverse(i as u64 + 1, PRIMES[d]) + self.shift[d];
                v - v.floor()
            })
            .collect()
    }

    pub fn points(&self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|i| self.point(i)).collect()
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p.clamp(1e-15, 1.0 - 1e-15))
}

/// Number of cube coordinates consumed by [`unit_sphere`] for S^{n−1} ⊂ R^n.
pub fn sphere_params(n: usize) -> usize {
    match n {
        0 | 1 => 0,
        2 => 1,
        _ => n,
    }
}

/// Maps a point of the unit cube (with [`sphere_params`] coordinates) to the
/// unit sphere S^{n−1} ⊂ R^n.
pub fn unit_sphere(u: &[f64], n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![1.0],
        2 => {
            let t = 2.0 * std::f64::consts::PI * u[0];
            vec![t.cos(), t.sin()]
        }
        _ => {
            let v: Vec<f64> = (0..n).map(|i| normal_quantile(u[i])).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                let mut e = vec![0.0; n];
                e[0] = 1.0;
                return e;
            }
            v.iter().map(|x| x / norm).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_is_reproducible_and_in_cube() {
        let a = Halton::new(3, 7).points(100);
        let b = Halton::new(3, 7).points(100);
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&x| (0.0..1.0).contains(&x)));
        assert_ne!(Halton::new(3, 8).point(0), a[0]);
    }

    #[test]
    fn halton_mean_is_near_half() {
        let pts = Halton::new(2, 1).points(4096);
        for d in 0..2 {
            let m: f64 = pts.iter().map(|p| p[d]).sum::<f64>() / 4096.0;
            assert!((m - 0.5).abs() < 2e-3);
        }
    }

    #[test]
    fn normal_quantile_symmetric_values() {
        assert!(normal_quantile(0.5).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((normal_quantile(0.01) + 2.326_347_874_040_841).abs() < 1e-8);
    }

    #[test]
    fn sphere_points_are_unit() {
        let h = Halton::new(6, 3);
        for i in 0..50 {
            let s = unit_sphere(&h.point(i), 6);
            let n: f64 = s.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
