//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use cramer_gmm::gmm_nd::GmmN;
use cramer_gmm::Gmm1;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Up to five components, means in `[-5, 5]`, deviations in `[0, 3]`. About
/// one mixture in five is made only of point masses and a further share of
/// single components are point masses.
pub fn gmm1<R: Rng>(rng: &mut R) -> Gmm1 {
    let n = rng.random_range(1..=5);
    let all_delta = rng.random_bool(0.2);
    let means = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let stds = (0..n)
        .map(|_| {
            if all_delta || rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0.0..3.0)
            }
        })
        .collect();
    Gmm1::new(weights(rng, n), means, stds).unwrap()
}

/// Like [`gmm1`] but every deviation is at least `min_std`.
pub fn smooth_gmm1<R: Rng>(rng: &mut R, min_std: f64) -> Gmm1 {
    let n = rng.random_range(1..=5);
    let means = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let stds = (0..n).map(|_| rng.random_range(min_std..3.0)).collect();
    Gmm1::new(weights(rng, n), means, stds).unwrap()
}

/// `n` components in `dim` dimensions with general (non-triangular) scales.
pub fn gmm_nd<R: Rng>(rng: &mut R, dim: usize, n: usize) -> GmmN {
    let means = (0..n)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0)))
        .collect();
    let scales = (0..n)
        .map(|_| {
            DMatrix::from_fn(dim, dim, |r, c| {
                if r == c {
                    rng.random_range(0.3..1.5)
                } else {
                    rng.random_range(-0.5..0.5)
                }
            })
        })
        .collect();
    GmmN::new(weights(rng, n), means, scales).unwrap()
}
