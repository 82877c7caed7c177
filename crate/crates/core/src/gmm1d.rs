//! Univariate Gaussian mixtures and the closed-form Cramér 2-distance between
//! them.
//!
//! The squared distance is evaluated in its symmetric form
//!
//! ```text
//! C2^2(G, G') = 2 sum_jk p_j p'_k z V(dmu / z) - sum_jk p_j p_k z V(..) - sum_jk p'_j p'_k z V(..)
//! ```
//!
//! with `z = sqrt(s_j^2 + s_k^2 + EPS_SOFT)`. Components with zero standard
//! deviation are point masses and are allowed everywhere except in the density
//! and the likelihood.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{self, pair_scale, pair_term, pair_value, EPS_SOFT, INV_SQRT_2PI};

/// Tolerance on the weight sum accepted by the validating constructors.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Mixture size above which an all-point-mass self term switches to the
/// sorted `O(n log n)` evaluation.
const SORTED_SELF_TERM_MIN: usize = 32;

/// Univariate Gaussian mixture `sum_j p_j N(mu_j, sigma_j^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm1 {
    weights: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

/// Gradient of a loss with respect to the parameters of a [`Gmm1`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grad1 {
    pub d_weights: Vec<f64>,
    pub d_means: Vec<f64>,
    pub d_stds: Vec<f64>,
}

impl Grad1 {
    pub fn zeros(n: usize) -> Self {
        Self {
            d_weights: vec![0.0; n],
            d_means: vec![0.0; n],
            d_stds: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.d_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_means.is_empty()
    }
}

/// Borrowed parameter view used by the loss kernels.
///
/// Unlike [`Gmm1`] this does not validate anything: training code evaluates
/// losses at raw parameters where a standard deviation may have drifted below
/// zero. Only `sigma^2` enters the distance, and the gradient with respect to
/// `sigma` carries the correct sign either way.
#[derive(Debug, Clone, Copy)]
pub struct Mix1<'a> {
    pub weights: &'a [f64],
    pub means: &'a [f64],
    pub stds: &'a [f64],
}

impl<'a> Mix1<'a> {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

impl Gmm1 {
    /// Validating constructor.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidMixture("no components".into()));
        }
        if means.len() != n || stds.len() != n {
            return Err(Error::InvalidMixture(format!(
                "length mismatch: {} weights, {} means, {} stds",
                n,
                means.len(),
                stds.len()
            )));
        }
        if let Some(j) = weights.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidMixture(format!(
                "weight {j} is {}",
                weights[j]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        if let Some(j) = means.iter().position(|m| !m.is_finite()) {
            return Err(Error::InvalidMixture(format!("mean {j} is {}", means[j])));
        }
        if let Some(j) = stds.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidMixture(format!(
                "standard deviation {j} is {}",
                stds[j]
            )));
        }
        Ok(Self {
            weights,
            means,
            stds,
        })
    }

    /// Single Gaussian `N(mean, std^2)`; `std = 0` gives a point mass.
    pub fn single(mean: f64, std: f64) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![mean],
            stds: vec![std.abs()],
        }
    }

    /// Point mass at `x`.
    pub fn delta(x: f64) -> Self {
        Self::single(x, 0.0)
    }

    /// Equal-weight mixture of point masses at the given locations. Duplicates
    /// are kept as separate atoms.
    pub fn from_points(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("points"));
        }
        let w = 1.0 / xs.len() as f64;
        Self::new(vec![w; xs.len()], xs.to_vec(), vec![0.0; xs.len()])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn view(&self) -> Mix1<'_> {
        Mix1 {
            weights: &self.weights,
            means: &self.means,
            stds: &self.stds,
        }
    }

    /// Expectation `sum_j p_j mu_j`.
    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(p, m)| p * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(p, (m, s))| p * (s * s + (m - mu) * (m - mu)))
            .sum()
    }

    pub fn has_point_mass(&self) -> bool {
        self.stds.contains(&0.0)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        if let Some(j) = self.stds.iter().position(|&s| s == 0.0) {
            return Err(Error::DegenerateComponent(j));
        }
        Ok(self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(p, (m, s))| p * kernel::phi_pdf((x - m) / s) / s)
            .sum())
    }

    /// Mixture CDF. Point masses contribute a right-continuous step.
    pub fn cdf(&self, x: f64) -> f64 {
        let v: f64 = self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(p, (m, s))| p * component_cdf(*m, *s, x))
            .sum();
        v.clamp(0.0, 1.0)
    }

    /// Distribution of `r + gamma X`.
    pub fn affine(&self, r: f64, gamma: f64) -> Self {
        Self {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| r + gamma * m).collect(),
            stds: self.stds.iter().map(|s| gamma.abs() * s).collect(),
        }
    }

    /// Replaces every standard deviation `s` with `sqrt(s^2 + tau^2)`: the
    /// distribution of `X + A` for an independent `A ~ N(0, tau^2)`.
    pub fn convolve_gaussian(&self, tau: f64) -> Self {
        Self {
            weights: self.weights.clone(),
            means: self.means.clone(),
            stds: self.stds.iter().map(|s| (s * s + tau * tau).sqrt()).collect(),
        }
    }

    /// Distribution of `c X` for `c > 0`.
    pub fn scale(&self, c: f64) -> Self {
        self.affine(0.0, c)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let j = pick_component(&self.weights, rng);
        let z: f64 = StandardNormal.sample(rng);
        self.means[j] + self.stds[j] * z
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

pub(crate) fn pick_component<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in weights.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left the cumulative sum just below one.
    weights.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn component_cdf(mean: f64, std: f64, x: f64) -> f64 {
    if std == 0.0 {
        if x >= mean {
            1.0
        } else {
            0.0
        }
    } else {
        kernel::phi_cdf((x - mean) / std)
    }
}

/// `sum_jk a_j b_k z V((mu_j - mu'_k) / z)`.
fn cross_sum(a: Mix1<'_>, b: Mix1<'_>) -> f64 {
    let mut total = 0.0;
    for j in 0..a.len() {
        let mut row = 0.0;
        for k in 0..b.len() {
            let z = pair_scale(a.stds[j], b.stds[k]);
            row += b.weights[k] * pair_value(a.means[j] - b.means[k], z);
        }
        total += a.weights[j] * row;
    }
    total
}

/// `sum_jk p_j p_k z V((mu_j - mu_k) / z)` of a mixture with itself.
pub fn self_term(g: Mix1<'_>) -> f64 {
    if g.len() >= SORTED_SELF_TERM_MIN && g.stds.iter().all(|&s| s == 0.0) {
        return point_mass_self_term(g.weights, g.means);
    }
    let n = g.len();
    let mut total = 0.0;
    for j in 0..n {
        let mut row = 0.5 * g.weights[j] * pair_value(0.0, pair_scale(g.stds[j], g.stds[j]));
        for k in (j + 1)..n {
            let z = pair_scale(g.stds[j], g.stds[k]);
            row += g.weights[k] * pair_value(g.means[j] - g.means[k], z);
        }
        total += g.weights[j] * row;
    }
    2.0 * total
}

/// Self term of a pure point-mass mixture in `O(n log n)`.
///
/// For two atoms `z = sqrt(EPS_SOFT)` and `z V(d / z) = |d| / 2` to double
/// precision unless `d` is within a few `z` of zero; coincident atoms
/// contribute `z phi(0)`.
fn point_mass_self_term(weights: &[f64], means: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    let z = EPS_SOFT.sqrt();

    let mut abs_sum = 0.0; // sum_{j<k} p_j p_k |x_k - x_j|
    let mut w_before = 0.0;
    let mut wx_before = 0.0;
    let mut tie_sq = 0.0;
    let mut group_w = 0.0;
    let mut group_x = f64::NAN;
    for &i in &order {
        let (p, x) = (weights[i], means[i]);
        abs_sum += p * (x * w_before - wx_before);
        w_before += p;
        wx_before += p * x;
        if x == group_x {
            group_w += p;
        } else {
            tie_sq += group_w * group_w;
            group_w = p;
            group_x = x;
        }
    }
    tie_sq += group_w * group_w;
    abs_sum + z * INV_SQRT_2PI * tie_sq
}

/// Squared Cramér 2-distance between two mixture views, clamped at zero.
pub fn c2_squared_view(a: Mix1<'_>, b: Mix1<'_>) -> f64 {
    if a.weights == b.weights && a.means == b.means && a.stds == b.stds {
        return 0.0;
    }
    // Summing the cross term in a fixed argument order makes the result
    // bitwise symmetric.
    let cross = match canonical_order(a, b) {
        std::cmp::Ordering::Greater => cross_sum(b, a),
        _ => cross_sum(a, b),
    };
    let v = 2.0 * cross - (self_term(a) + self_term(b));
    v.max(0.0)
}

fn canonical_order(a: Mix1<'_>, b: Mix1<'_>) -> std::cmp::Ordering {
    let key = |m: Mix1<'_>| {
        m.weights
            .iter()
            .chain(m.means)
            .chain(m.stds)
            .map(|x| x.to_bits())
            .collect::<Vec<u64>>()
    };
    a.len().cmp(&b.len()).then_with(|| key(a).cmp(&key(b)))
}

/// Squared Cramér 2-distance `integral |F_1 - F_2|^2 dx`.
pub fn c2_squared(a: &Gmm1, b: &Gmm1) -> f64 {
    c2_squared_view(a.view(), b.view())
}

/// Loss and gradient with respect to the first argument; the second is a
/// constant target.
pub fn c2_squared_grad_view(a: Mix1<'_>, b: Mix1<'_>) -> (f64, Grad1) {
    let n = a.len();
    let mut grad = Grad1::zeros(n);
    let mut cross = 0.0;
    let mut own = 0.0;
    for j in 0..n {
        let (pj, mj, sj) = (a.weights[j], a.means[j], a.stds[j]);
        let mut dm = 0.0;
        let mut ds = 0.0;
        let mut dp = 0.0;
        for k in 0..b.len() {
            let z = pair_scale(sj, b.stds[k]);
            let t = pair_term(mj - b.means[k], z);
            let qk = b.weights[k];
            dm += qk * t.d_h;
            ds += qk * t.d_z * (sj / z);
            dp += qk * t.value;
        }
        cross += pj * dp;
        let mut own_row = 0.0;
        let mut own_dm = 0.0;
        let mut own_ds = 0.0;
        for k in 0..n {
            let z = pair_scale(sj, a.stds[k]);
            let t = pair_term(mj - a.means[k], z);
            let pk = a.weights[k];
            own_row += pk * t.value;
            own_dm += pk * t.d_h;
            // d z_jk / d s_j is s_j / z for k != j and 2 s_j / z on the
            // diagonal, which the factor 2 below already accounts for.
            own_ds += pk * t.d_z * (sj / z);
        }
        own += pj * own_row;
        grad.d_means[j] = 2.0 * pj * (dm - own_dm);
        grad.d_stds[j] = 2.0 * pj * (ds - own_ds);
        grad.d_weights[j] = 2.0 * (dp - own_row);
    }
    let loss = (2.0 * cross - own - self_term(b)).max(0.0);
    (loss, grad)
}

pub fn c2_squared_grad(a: &Gmm1, b: &Gmm1) -> (f64, Grad1) {
    c2_squared_grad_view(a.view(), b.view())
}

/// Negative log-likelihood of `xs` and its gradient, evaluated in log space.
///
/// Standard deviations enter through `|sigma|`; a zero standard deviation is an
/// error. Returns `+inf` when the likelihood of some point is zero or the
/// parameters are not finite.
pub fn nll_grad_view(g: Mix1<'_>, xs: &[f64]) -> Result<(f64, Grad1)> {
    if let Some(j) = g.stds.iter().position(|&s| s == 0.0) {
        return Err(Error::DegenerateComponent(j));
    }
    let n = g.len();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut grad = Grad1::zeros(n);
    let mut total = 0.0;
    let mut log_dens = vec![0.0; n];
    let mut log_terms = vec![0.0; n];
    for &x in xs {
        for j in 0..n {
            let s = g.stds[j].abs();
            let u = (x - g.means[j]) / s;
            log_dens[j] = -half_log_2pi - s.ln() - 0.5 * u * u;
            log_terms[j] = g.weights[j].ln() + log_dens[j];
        }
        let lse = log_sum_exp(&log_terms);
        if !lse.is_finite() {
            return Ok((f64::INFINITY, grad));
        }
        total -= lse;
        for j in 0..n {
            let s = g.stds[j].abs();
            let sign = g.stds[j].signum();
            let u = (x - g.means[j]) / s;
            let resp = (log_terms[j] - lse).exp();
            grad.d_means[j] -= resp * u / s;
            grad.d_stds[j] -= sign * resp * (u * u - 1.0) / s;
            grad.d_weights[j] -= (log_dens[j] - lse).exp();
        }
    }
    if !total.is_finite() {
        return Ok((f64::INFINITY, grad));
    }
    Ok((total, grad))
}

pub fn nll(g: &Gmm1, xs: &[f64]) -> Result<f64> {
    nll_grad_view(g.view(), xs).map(|(v, _)| v)
}

pub fn nll_grad(g: &Gmm1, xs: &[f64]) -> Result<(f64, Grad1)> {
    nll_grad_view(g.view(), xs)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bump() -> Gmm1 {
        Gmm1::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(Gmm1::new(vec![], vec![], vec![]).is_err());
        assert!(Gmm1::new(vec![0.5, 0.4], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Gmm1::new(vec![1.0], vec![0.0], vec![-1.0]).is_err());
        assert!(Gmm1::new(vec![1.0], vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Gmm1::new(vec![-0.5, 1.5], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn pdf_examples() {
        let g = Gmm1::single(0.0, 1.0);
        assert!((g.pdf(0.0).unwrap() - 0.398_942_280_4).abs() < 1e-10);
        // average of two N(0,1) densities at distance one
        assert!((two_bump().pdf(0.0).unwrap() - 0.241_970_724_5).abs() < 1e-10);
        assert!(matches!(
            Gmm1::delta(0.0).pdf(0.0),
            Err(Error::DegenerateComponent(0))
        ));
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(Gmm1::single(0.0, 1.0).cdf(0.0), 0.5);
        let d = Gmm1::delta(0.0);
        assert_eq!(d.cdf(-0.5), 0.0);
        assert_eq!(d.cdf(0.0), 1.0);
        let mixed = Gmm1::new(vec![0.5, 0.5], vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(mixed.cdf(0.0), 0.75);
    }

    #[test]
    fn c2_examples() {
        let n01 = Gmm1::single(0.0, 1.0);
        assert!(c2_squared(&n01, &n01) < 1e-15);
        assert!((c2_squared(&Gmm1::delta(0.0), &Gmm1::delta(1.0)) - 1.0).abs() < 1e-8);
        // mpmath quadrature of |Phi - H|^2: 0.2336949772551...; the point
        // mass self term carries the sqrt(EPS_SOFT) phi(0) softening bias.
        assert!((c2_squared(&n01, &Gmm1::delta(0.0)) - 0.233_694_977_255_109).abs() < 1e-10);
        // mpmath quadrature of |Phi(x) - Phi(x - 1)|^2: 0.2709032896529...
        let n11 = Gmm1::single(1.0, 1.0);
        assert!((c2_squared(&n01, &n11) - 0.270_903_289_652_978_8).abs() < 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let n01 = Gmm1::single(0.0, 1.0);
        let (loss, g) = c2_squared_grad(&n01, &n01);
        assert!(loss < 1e-15);
        assert!(g.d_means[0].abs() < 1e-15);
        assert!(g.d_stds[0].abs() < 1e-15);

        let (_, g) = c2_squared_grad(&n01, &Gmm1::delta(5.0));
        assert!(g.d_means[0] < 0.0);
    }

    #[test]
    fn grad_loss_matches_plain_loss() {
        let a = Gmm1::new(vec![0.2, 0.3, 0.5], vec![-1.0, 0.5, 2.0], vec![0.3, 0.0, 1.2]).unwrap();
        let b = Gmm1::new(vec![0.6, 0.4], vec![0.0, 1.0], vec![1.0, 0.4]).unwrap();
        let (l, _) = c2_squared_grad(&a, &b);
        assert!((l - c2_squared(&a, &b)).abs() < 1e-14);
    }

    #[test]
    fn nll_examples() {
        let g = Gmm1::single(0.0, 1.0);
        let half_log_2pi = 0.918_938_533_204_672_7;
        assert!((nll(&g, &[0.0]).unwrap() - half_log_2pi).abs() < 1e-14);
        assert!((nll(&g, &[0.0, 0.0]).unwrap() - 2.0 * half_log_2pi).abs() < 1e-14);
        assert!(nll(&Gmm1::delta(0.0), &[0.0]).is_err());
    }

    #[test]
    fn nll_far_point_stays_finite() {
        let g = Gmm1::single(0.0, 1e-3);
        let v = nll(&g, &[100.0]).unwrap();
        assert!(v.is_finite() && v > 1e9);
    }

    #[test]
    fn affine_examples() {
        let g = Gmm1::single(0.0, 1.0).affine(1.0, 0.99);
        assert_eq!(g.means(), &[1.0]);
        assert_eq!(g.stds(), &[0.99]);
        let a = two_bump();
        assert_eq!(a.affine(0.0, 1.0), a);
        let d = Gmm1::delta(2.0).affine(3.0, 0.5);
        assert_eq!(d, Gmm1::delta(4.0));
    }

    #[test]
    fn from_points_examples() {
        let g = Gmm1::from_points(&[0.0, 1.0]).unwrap();
        assert_eq!(g.weights(), &[0.5, 0.5]);
        assert_eq!(g.means(), &[0.0, 1.0]);
        assert_eq!(g.stds(), &[0.0, 0.0]);
        assert_eq!(Gmm1::from_points(&[5.0]).unwrap(), Gmm1::delta(5.0));
        let t = Gmm1::from_points(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.weights().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-16));
        assert!(matches!(Gmm1::from_points(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn sorted_self_term_matches_pairwise_sum() {
        let xs: Vec<f64> = (0..200)
            .map(|i| ((i as f64) * 0.618_033_988_7).fract() * 10.0 - 5.0)
            .chain([1.25, 1.25, 1.25])
            .collect();
        let g = Gmm1::from_points(&xs).unwrap();
        let fast = self_term(g.view());
        let mut brute = 0.0;
        for j in 0..g.len() {
            for k in 0..g.len() {
                let z = pair_scale(0.0, 0.0);
                brute += g.weights()[j] * g.weights()[k] * pair_value(xs[j] - xs[k], z);
            }
        }
        assert!((fast - brute).abs() < 1e-12, "{fast} vs {brute}");
    }
}
