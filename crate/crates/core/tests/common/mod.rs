//! Instance generators and straightforward reference computations shared by
//! the integration tests.
#![allow(dead_code)]

use optql_core::{LocationSet, Mechanism, Metric, Point, Prior};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` random points in a `side × side` km square.
pub fn random_locations(rng: &mut impl Rng, n: usize, side: f64) -> LocationSet {
    loop {
        let pts = (0..n)
            .map(|_| Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
            .collect();
        if let Ok(l) = LocationSet::new(pts) {
            return l;
        }
    }
}

pub fn random_prior(rng: &mut impl Rng, n: usize) -> Prior {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    Prior::from_counts(&w).unwrap()
}

pub fn random_stochastic(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let r: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
                .collect();
            let s: f64 = r.iter().sum();
            if s == 0.0 {
                let mut e = vec![0.0; n];
                e[rng.random_range(0..n)] = 1.0;
                e
            } else {
                r.iter().map(|v| v / s).collect()
            }
        })
        .collect()
}

/// `Σ_x π_x Σ_z k[x][z] d(x, z)` computed directly.
pub fn ref_expected_distance(k: &[Vec<f64>], pi: &[f64], d: &Metric) -> f64 {
    let mut total = 0.0;
    for (x, row) in k.iter().enumerate() {
        for (z, &p) in row.iter().enumerate() {
            total += pi[x] * p * d.distance(x, z).unwrap();
        }
    }
    total
}

/// Largest `k[x][z] - e^{eps d(x,x')} k[x'][z]` over all ordered triples.
pub fn ref_privacy_violation(k: &[Vec<f64>], d: &Metric, eps: f64) -> f64 {
    let n = k.len();
    let mut worst = f64::NEG_INFINITY;
    for x in 0..n {
        for xp in 0..n {
            if x == xp {
                continue;
            }
            let c = (eps * d.distance(x, xp).unwrap()).exp();
            for z in 0..n {
                worst = worst.max(k[x][z] - c * k[xp][z]);
            }
        }
    }
    worst
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| (0..m).map(|j| (0..b.len()).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

pub fn mechanism(locs: &LocationSet, rows: Vec<Vec<f64>>) -> Mechanism {
    Mechanism::new(locs.clone(), rows, optql_core::Provenance::external()).unwrap()
}
