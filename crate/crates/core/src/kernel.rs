//! Scalar building blocks: the standard normal CDF and density, the GELU-like
//! antiderivative `U`, its symmetrisation `V`, and the pairwise cross term.
//!
//! Every closed-form loss in this crate reduces to sums of `z * V(h / z)` over
//! component pairs, so these functions sit on the hot path.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Softening constant added under the square root of the pairwise scale so that
/// two point masses do not produce `0 / 0`.
pub const EPS_SOFT: f64 = 1e-20;

/// `1 / sqrt(2 pi)`
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF, computed through `erfc` so both tails keep full
/// relative precision.
#[inline]
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn phi_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Phi(x) - 1/2`, evaluated through `erf` to avoid cancellation near zero.
#[inline]
pub fn phi_cdf_centered(x: f64) -> f64 {
    0.5 * libm::erf(x * FRAC_1_SQRT_2)
}

/// `U(x) = x Phi(x) + phi(x)`, the antiderivative of `Phi` with `U(-inf) = 0`.
///
/// Equals `GELU(x) + phi(x)` exactly.
#[inline]
pub fn u_fn(x: f64) -> f64 {
    x * phi_cdf(x) + phi_pdf(x)
}

/// `V(x) = (U(x) + U(-x)) / 2 = x (Phi(x) - 1/2) + phi(x)`.
///
/// Evaluated on `|x|` so that `V(x)` and `V(-x)` are bitwise equal.
#[inline]
pub fn v_fn(x: f64) -> f64 {
    let a = x.abs();
    a * phi_cdf_centered(a) + phi_pdf(a)
}

/// Softened pairwise scale `sqrt(s1^2 + s2^2 + EPS_SOFT)`.
#[inline]
pub fn pair_scale(s1: f64, s2: f64) -> f64 {
    (s1 * s1 + s2 * s2 + EPS_SOFT).sqrt()
}

/// `integral (1 - Phi_{m1,s1^2}(x)) Phi_{m2,s2^2}(x) dx = z U((m1 - m2) / z)`.
///
/// With both scales zero this is `max(m1 - m2, 0)` up to `O(sqrt(EPS_SOFT))`.
#[inline]
pub fn cross_term(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let z = pair_scale(s1, s2);
    z * u_fn((m1 - m2) / z)
}

/// Symmetrised pair term `z V(h / z)` together with its partial derivatives
/// with respect to `h` and `z`.
///
/// `d/dh = V'(x) = Phi(x) - 1/2` and `d/dz = V(x) - x V'(x) = phi(x)`, where
/// `x = h / z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub value: f64,
    pub d_h: f64,
    pub d_z: f64,
}

#[inline]
pub fn pair_term(h: f64, z: f64) -> PairTerm {
    let x = h / z;
    let dv = phi_cdf_centered(x);
    let pdf = phi_pdf(x);
    PairTerm {
        value: z * (x.abs() * dv.abs() + pdf),
        d_h: dv,
        d_z: pdf,
    }
}

/// `z V(h / z)` without derivatives.
#[inline]
pub fn pair_value(h: f64, z: f64) -> f64 {
    z * v_fn(h / z)
}

/// Surface area of the unit sphere in `R^m`: `2 pi^{m/2} / Gamma(m/2)`.
pub fn sphere_area(m: usize) -> f64 {
    let half = m as f64 / 2.0;
    2.0 * PI.powf(half) / libm::tgamma(half)
}
