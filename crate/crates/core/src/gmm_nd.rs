//! Multivariate mixtures with covariances `Sigma_j = S_j^T S_j`, projection
//! onto unit directions, and the sliced Cramér 2-distance.
//!
//! The sliced estimator is normalised as `(B_{m-1} / t) sum_i C2^2(G_nu_i, G'_nu_i)`
//! so that it converges to the integral over the sphere as `t` grows. The raw
//! sum is available through [`DirectionSet::raw_sum`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gmm1d::{self, pick_component, Gmm1, WEIGHT_SUM_TOL};
use crate::kernel::sphere_area;

/// Accepted deviation from unit norm for a projection direction.
pub const UNIT_TOL: f64 = 1e-9;

/// Multivariate Gaussian mixture `sum_j p_j N(mu_j, S_j^T S_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmN {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    scales: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradN {
    pub d_weights: Vec<f64>,
    pub d_means: Vec<DVector<f64>>,
    pub d_scales: Vec<DMatrix<f64>>,
}

impl GradN {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            d_weights: vec![0.0; n],
            d_means: vec![DVector::zeros(dim); n],
            d_scales: vec![DMatrix::zeros(dim, dim); n],
        }
    }
}

impl GmmN {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        scales: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidMixture("no components".into()));
        }
        if means.len() != n || scales.len() != n {
            return Err(Error::InvalidMixture(format!(
                "length mismatch: {} weights, {} means, {} scales",
                n,
                means.len(),
                scales.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidMixture("zero dimension".into()));
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
        for (j, (m, s)) in means.iter().zip(&scales).enumerate() {
            if m.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
            if s.nrows() != dim || s.ncols() != dim {
                return Err(Error::InvalidMixture(format!(
                    "scale {j} is {}x{}, expected {dim}x{dim}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            if m.iter().chain(s.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidMixture(format!(
                    "component {j} has non-finite entries"
                )));
            }
        }
        Ok(Self {
            dim,
            weights,
            means,
            scales,
        })
    }

    /// Equal-weight point masses at the given points.
    pub fn from_points(points: &[DVector<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("points"));
        }
        let dim = points[0].len();
        let w = 1.0 / points.len() as f64;
        Self::new(
            vec![w; points.len()],
            points.to_vec(),
            vec![DMatrix::zeros(dim, dim); points.len()],
        )
    }

    /// Embeds a univariate mixture as a one-dimensional `GmmN`.
    pub fn from_gmm1(g: &Gmm1) -> Self {
        Self {
            dim: 1,
            weights: g.weights().to_vec(),
            means: g.means().iter().map(|&m| DVector::from_element(1, m)).collect(),
            scales: g.stds().iter().map(|&s| DMatrix::from_element(1, 1, s)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn scales(&self) -> &[DMatrix<f64>] {
        &self.scales
    }

    pub fn covariance(&self, j: usize) -> DMatrix<f64> {
        self.scales[j].transpose() * &self.scales[j]
    }

    pub fn mean(&self) -> DVector<f64> {
        self.weights
            .iter()
            .zip(&self.means)
            .fold(DVector::zeros(self.dim), |acc, (p, m)| acc + m * *p)
    }

    /// Distribution of `A X`: means map to `A mu`, scales to `S A^T`.
    pub fn linear_map(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.ncols(),
            });
        }
        Self::new(
            self.weights.clone(),
            self.means.iter().map(|m| a * m).collect(),
            self.scales.iter().map(|s| s * a.transpose()).collect(),
        )
    }

    /// Distribution of `c X`.
    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| m * c).collect(),
            scales: self.scales.iter().map(|s| s * c).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let j = pick_component(&self.weights, rng);
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        &self.means[j] + self.scales[j].tr_mul(&z)
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Univariate mixture of `<X, nu>`: means `mu_j . nu`, standard deviations
    /// `|S_j nu|`.
    pub fn project(&self, nu: &DVector<f64>) -> Result<Gmm1> {
        if nu.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: nu.len(),
            });
        }
        let norm = nu.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NonUnitDirection(norm));
        }
        Ok(self.project_unchecked(nu).0)
    }

    /// Projection without the unit-norm check; also returns `S_j nu`.
    fn project_unchecked(&self, nu: &DVector<f64>) -> (Gmm1, Vec<DVector<f64>>) {
        let means = self.means.iter().map(|m| m.dot(nu)).collect();
        let s_nu: Vec<DVector<f64>> = self.scales.iter().map(|s| s * nu).collect();
        let stds = s_nu.iter().map(|v| v.norm()).collect();
        let g = Gmm1::new(self.weights.clone(), means, stds)
            .expect("projection of a valid mixture is valid");
        (g, s_nu)
    }

    fn check_same_dim(&self, other: &GmmN, dirs: &DirectionSet) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if dirs.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dirs.dim,
            });
        }
        Ok(())
    }
}

/// A finite set of unit directions with the quadrature weight that turns the
/// per-direction sum into an estimate of the integral over the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dim: usize,
    dirs: Vec<DVector<f64>>,
    weight: f64,
}

impl DirectionSet {
    /// Directions are normalised; the weight is `B_{m-1} / t`.
    pub fn from_directions(dim: usize, dirs: Vec<DVector<f64>>) -> Result<Self> {
        if dirs.is_empty() {
            return Err(Error::Empty("directions"));
        }
        let mut out = Vec::with_capacity(dirs.len());
        for d in dirs {
            if d.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: d.len(),
                });
            }
            let n = d.norm();
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::NonUnitDirection(n));
            }
            out.push(d / n);
        }
        let weight = sphere_area(dim) / out.len() as f64;
        Ok(Self {
            dim,
            dirs: out,
            weight,
        })
    }

    /// `t` i.i.d. uniform directions on the sphere in `R^m`, deterministic in
    /// `seed`.
    pub fn uniform(m: usize, t: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::uniform_with(m, t, false, &mut rng)
    }

    /// Uniform directions drawn from `rng`. With `hemisphere` set each
    /// direction is reflected so that its first coordinate is non-negative.
    pub fn uniform_with<R: Rng + ?Sized>(
        m: usize,
        t: usize,
        hemisphere: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidConfig(format!(
                "uniform directions need dimension >= 2, got {m}"
            )));
        }
        if t == 0 {
            return Err(Error::InvalidConfig("need at least one direction".into()));
        }
        let dirs = (0..t)
            .map(|_| {
                let mut v: DVector<f64>;
                loop {
                    v = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
                    let n = v.norm();
                    if n > 1e-12 {
                        v /= n;
                        break;
                    }
                }
                if hemisphere && v[0] < 0.0 {
                    v = -v;
                }
                v
            })
            .collect();
        Ok(Self {
            dim: m,
            dirs,
            weight: sphere_area(m) / t as f64,
        })
    }

    /// `t` equally spaced directions on the unit circle starting at
    /// `offset_angle`.
    pub fn equidistant_2d(t: usize, offset_angle: f64) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidConfig("need at least one direction".into()));
        }
        let dirs = (0..t)
            .map(|i| {
                let a = offset_angle + std::f64::consts::TAU * i as f64 / t as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect();
        Ok(Self {
            dim: 2,
            dirs,
            weight: sphere_area(2) / t as f64,
        })
    }

    /// Equidistant directions for a mixture of dimension `dim`; only the
    /// plane is supported.
    pub fn equidistant(dim: usize, t: usize, offset_angle: f64) -> Result<Self> {
        if dim != 2 {
            return Err(Error::InvalidConfig(format!(
                "equidistant directions are defined for dimension 2 only, got {dim}"
            )));
        }
        Self::equidistant_2d(t, offset_angle)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn directions(&self) -> &[DVector<f64>] {
        &self.dirs
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Converts a normalised sliced value back to the plain per-direction sum.
    pub fn raw_sum(&self, normalized: f64) -> f64 {
        normalized / self.weight
    }
}

/// Per-direction values `C2^2(G_nu_i, G'_nu_i)` in direction order.
pub fn per_direction_c2(g1: &GmmN, g2: &GmmN, dirs: &DirectionSet) -> Result<Vec<f64>> {
    g1.check_same_dim(g2, dirs)?;
    Ok(dirs
        .dirs
        .iter()
        .map(|nu| {
            let (a, _) = g1.project_unchecked(nu);
            let (b, _) = g2.project_unchecked(nu);
            gmm1d::c2_squared(&a, &b)
        })
        .collect())
}

/// Sliced squared Cramér 2-distance estimate `(B_{m-1}/t) sum_i C2^2`.
pub fn sliced_c2_squared(g1: &GmmN, g2: &GmmN, dirs: &DirectionSet) -> Result<f64> {
    let per = per_direction_c2(g1, g2, dirs)?;
    Ok(dirs.weight * per.iter().sum::<f64>())
}

/// Sliced loss and its gradient with respect to `g1`.
///
/// Where `S_j nu = 0` the scale gradient for that slice is taken to be zero.
#[allow(clippy::needless_range_loop)]
pub fn sliced_c2_squared_grad(
    g1: &GmmN,
    g2: &GmmN,
    dirs: &DirectionSet,
) -> Result<(f64, GradN)> {
    g1.check_same_dim(g2, dirs)?;
    let mut grad = GradN::zeros(g1.len(), g1.dim);
    let mut total = 0.0;
    for nu in &dirs.dirs {
        let (a, s_nu) = g1.project_unchecked(nu);
        let (b, _) = g2.project_unchecked(nu);
        let (loss, g) = gmm1d::c2_squared_grad_view(a.view(), b.view());
        total += loss;
        for j in 0..g1.len() {
            grad.d_weights[j] += g.d_weights[j];
            grad.d_means[j].axpy(g.d_means[j], nu, 1.0);
            let sigma = a.stds()[j];
            if sigma > 0.0 {
                grad.d_scales[j].ger(g.d_stds[j] / sigma, &s_nu[j], nu, 1.0);
            }
        }
    }
    let w = dirs.weight;
    grad.d_weights.iter_mut().for_each(|v| *v *= w);
    grad.d_means.iter_mut().for_each(|v| *v *= w);
    grad.d_scales.iter_mut().for_each(|v| *v *= w);
    Ok((w * total, grad))
}

/// Negative log-likelihood of `points` and its gradient.
///
/// Every `S_j` must be invertible. Returns `+inf` if the likelihood of some
/// point is zero.
pub fn nll_nd_grad(g: &GmmN, points: &[DVector<f64>]) -> Result<(f64, GradN)> {
    let m = g.dim;
    let n = g.len();
    let mut inv = Vec::with_capacity(n);
    let mut log_det = Vec::with_capacity(n);
    for (j, s) in g.scales.iter().enumerate() {
        let det = s.determinant();
        if !(det.is_finite() && det != 0.0) {
            return Err(Error::SingularScale(j));
        }
        let si = s.clone().try_inverse().ok_or(Error::SingularScale(j))?;
        log_det.push(det.abs().ln());
        inv.push(si);
    }
    let inv_t: Vec<DMatrix<f64>> = inv.iter().map(|s| s.transpose()).collect();
    let half_m_log_2pi = 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();

    let mut grad = GradN::zeros(n, m);
    let mut total = 0.0;
    let mut log_dens = vec![0.0; n];
    let mut log_terms = vec![0.0; n];
    let mut ws = vec![DVector::zeros(m); n];
    for x in points {
        if x.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: x.len(),
            });
        }
        for j in 0..n {
            let w = &inv_t[j] * (x - &g.means[j]);
            log_dens[j] = -half_m_log_2pi - log_det[j] - 0.5 * w.norm_squared();
            log_terms[j] = g.weights[j].ln() + log_dens[j];
            ws[j] = w;
        }
        let lse = gmm1d::log_sum_exp(&log_terms);
        if !lse.is_finite() {
            return Ok((f64::INFINITY, grad));
        }
        total -= lse;
        for j in 0..n {
            let r = (log_terms[j] - lse).exp();
            let v = &inv[j] * &ws[j];
            grad.d_means[j].axpy(-r, &v, 1.0);
            // d log N / d S = -S^{-T} + w v^T
            grad.d_scales[j] += &inv_t[j] * r;
            grad.d_scales[j].ger(-r, &ws[j], &v, 1.0);
            grad.d_weights[j] -= (log_dens[j] - lse).exp();
        }
    }
    if !total.is_finite() {
        return Ok((f64::INFINITY, grad));
    }
    Ok((total, grad))
}

pub fn nll_nd(g: &GmmN, points: &[DVector<f64>]) -> Result<f64> {
    nll_nd_grad(g, points).map(|(v, _)| v)
}
