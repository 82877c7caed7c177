//! Lion with per-group learning rates, the softmax reparameterisation of the
//! mixture weights, and the penalty that keeps univariate standard deviations
//! from going negative.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gmm1d::{Gmm1, Grad1, Mix1};
use crate::gmm_nd::{GmmN, GradN};

/// Coefficient of the `ReLU(-sigma)` penalty.
pub const SIGMA_PENALTY_COEF: f64 = 10.0;

pub fn softmax_weights(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Pulls a gradient with respect to the probabilities back to the logits:
/// `d_logit_i = p_i (g_i - sum_j p_j g_j)`.
pub fn softmax_backprop(probs: &[f64], d_weights: &[f64]) -> Vec<f64> {
    let mean: f64 = probs.iter().zip(d_weights).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(d_weights)
        .map(|(p, g)| p * (g - mean))
        .collect()
}

/// `10 sum_j max(-sigma_j, 0)` and its gradient.
pub fn sigma_penalty(sigmas: &[f64]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let grad = sigmas
        .iter()
        .map(|&s| {
            if s < 0.0 {
                value -= SIGMA_PENALTY_COEF * s;
                -SIGMA_PENALTY_COEF
            } else {
                0.0
            }
        })
        .collect();
    (value, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub weights: f64,
    pub means: f64,
    pub spread: f64,
}

impl LearningRates {
    pub fn new(weights: f64, means: f64, spread: f64) -> Self {
        Self {
            weights,
            means,
            spread,
        }
    }
}

/// Trainable mixture parameters in three groups, each flattened row-major:
///
/// * `logits`: `n` weight logits,
/// * `means`: `n * dim` mean coordinates,
/// * `spread`: `n` standard deviations when `dim == 1`, otherwise `n` scale
///   matrices `S_j` of size `dim * dim`.
///
/// The univariate standard deviations are unconstrained raw values; the
/// penalty in [`sigma_penalty`] pushes them back above zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroups {
    pub dim: usize,
    pub logits: Vec<f64>,
    pub means: Vec<f64>,
    pub spread: Vec<f64>,
    pub lr: LearningRates,
}

/// Gradient aligned with [`ParamGroups`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub logits: Vec<f64>,
    pub means: Vec<f64>,
    pub spread: Vec<f64>,
}

impl ParamGroups {
    pub fn components(&self) -> usize {
        self.logits.len()
    }

    pub fn from_gmm1(g: &Gmm1, lr: LearningRates) -> Self {
        Self {
            dim: 1,
            logits: g.weights().iter().map(|p| p.max(1e-300).ln()).collect(),
            means: g.means().to_vec(),
            spread: g.stds().to_vec(),
            lr,
        }
    }

    pub fn from_gmm_nd(g: &GmmN, lr: LearningRates) -> Self {
        let dim = g.dim();
        let mut means = Vec::with_capacity(g.len() * dim);
        let mut spread = Vec::with_capacity(g.len() * dim * dim);
        for (m, s) in g.means().iter().zip(g.scales()) {
            means.extend(m.iter());
            for r in 0..dim {
                for c in 0..dim {
                    spread.push(s[(r, c)]);
                }
            }
        }
        Self {
            dim,
            logits: g.weights().iter().map(|p| p.max(1e-300).ln()).collect(),
            means,
            spread,
            lr,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax_weights(&self.logits)
    }

    /// Raw univariate parameters. Standard deviations may be negative.
    pub fn raw_1d(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        debug_assert_eq!(self.dim, 1);
        (self.weights(), self.means.clone(), self.spread.clone())
    }

    /// Univariate mixture with `|sigma|` in place of the raw standard
    /// deviations.
    pub fn to_gmm1(&self) -> Result<Gmm1> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim,
            });
        }
        Gmm1::new(
            self.weights(),
            self.means.clone(),
            self.spread.iter().map(|s| s.abs()).collect(),
        )
    }

    pub fn to_gmm_nd(&self) -> Result<GmmN> {
        let d = self.dim;
        let n = self.components();
        let means = (0..n)
            .map(|j| DVector::from_column_slice(&self.means[j * d..(j + 1) * d]))
            .collect();
        let scales = if d == 1 {
            self.spread
                .iter()
                .map(|&s| DMatrix::from_element(1, 1, s))
                .collect()
        } else {
            (0..n)
                .map(|j| DMatrix::from_row_slice(d, d, &self.spread[j * d * d..(j + 1) * d * d]))
                .collect()
        };
        GmmN::new(self.weights(), means, scales)
    }

    /// Applies `f` to every parameter with the group's learning rate.
    fn for_each_group<F>(&mut self, grads: &ParamGrads, momentum: &mut ParamGrads, mut f: F)
    where
        F: FnMut(&mut f64, f64, &mut f64, f64),
    {
        let lr = self.lr;
        for (p, (g, m)) in self
            .logits
            .iter_mut()
            .zip(grads.logits.iter().zip(momentum.logits.iter_mut()))
        {
            f(p, *g, m, lr.weights);
        }
        for (p, (g, m)) in self
            .means
            .iter_mut()
            .zip(grads.means.iter().zip(momentum.means.iter_mut()))
        {
            f(p, *g, m, lr.means);
        }
        for (p, (g, m)) in self
            .spread
            .iter_mut()
            .zip(grads.spread.iter().zip(momentum.spread.iter_mut()))
        {
            f(p, *g, m, lr.spread);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.logits
            .iter()
            .chain(&self.means)
            .chain(&self.spread)
            .all(|v| v.is_finite())
    }
}

impl ParamGrads {
    pub fn zeros_like(p: &ParamGroups) -> Self {
        Self {
            logits: vec![0.0; p.logits.len()],
            means: vec![0.0; p.means.len()],
            spread: vec![0.0; p.spread.len()],
        }
    }

    /// Converts a univariate mixture gradient, pulling the weight part back
    /// through the softmax.
    pub fn from_grad1(g: &Grad1, probs: &[f64]) -> Self {
        Self {
            logits: softmax_backprop(probs, &g.d_weights),
            means: g.d_means.clone(),
            spread: g.d_stds.clone(),
        }
    }

    pub fn from_grad_nd(g: &GradN, probs: &[f64]) -> Self {
        let dim = g.d_means.first().map_or(0, |m| m.len());
        let mut means = Vec::new();
        let mut spread = Vec::new();
        for (m, s) in g.d_means.iter().zip(&g.d_scales) {
            means.extend(m.iter());
            for r in 0..dim {
                for c in 0..dim {
                    spread.push(s[(r, c)]);
                }
            }
        }
        Self {
            logits: softmax_backprop(probs, &g.d_weights),
            means,
            spread,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.logits
            .iter()
            .chain(&self.means)
            .chain(&self.spread)
            .all(|v| v.is_finite())
    }

    fn same_shape(&self, p: &ParamGroups) -> bool {
        self.logits.len() == p.logits.len()
            && self.means.len() == p.means.len()
            && self.spread.len() == p.spread.len()
    }
}

/// Borrowed univariate view of the raw parameters.
pub fn view_1d<'a>(weights: &'a [f64], p: &'a ParamGroups) -> Mix1<'a> {
    Mix1 {
        weights,
        means: &p.means,
        stds: &p.spread,
    }
}

/// Lion: `u = sign(beta1 m + (1 - beta1) g)`, `theta -= lr u`,
/// `m = beta2 m + (1 - beta2) g`. No weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct LionState {
    pub beta1: f64,
    pub beta2: f64,
    momentum: ParamGrads,
}

impl LionState {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.99;

    pub fn new(params: &ParamGroups) -> Self {
        Self::with_betas(params, Self::DEFAULT_BETA1, Self::DEFAULT_BETA2)
    }

    pub fn with_betas(params: &ParamGroups, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            momentum: ParamGrads::zeros_like(params),
        }
    }

    pub fn momentum(&self) -> &ParamGrads {
        &self.momentum
    }

    pub fn step(&mut self, params: &mut ParamGroups, grads: &ParamGrads) -> Result<()> {
        if !grads.same_shape(params) || !self.momentum.same_shape(params) {
            return Err(Error::ShapeMismatch(
                "gradient, momentum and parameters differ in shape".into(),
            ));
        }
        let (b1, b2) = (self.beta1, self.beta2);
        params.for_each_group(grads, &mut self.momentum, |theta, g, m, lr| {
            let u = sign(b1 * *m + (1.0 - b1) * g);
            *theta -= lr * u;
            *m = b2 * *m + (1.0 - b2) * g;
        });
        Ok(())
    }

    /// Mirrors every negative univariate standard deviation to `-sigma` and
    /// negates its momentum, returning how many were flipped.
    ///
    /// The univariate losses depend on `sigma` only through `sigma^2`, so the
    /// mirrored state follows exactly the trajectory Lion would take on the
    /// positive branch. Without this, crossing zero lets the large sigma
    /// penalty gradient flood the momentum, and the coordinate then
    /// overshoots by hundreds of steps once the penalty switches off.
    /// Multivariate scales are left alone.
    pub fn reflect_negative_stds(&mut self, params: &mut ParamGroups) -> usize {
        if params.dim != 1 {
            return 0;
        }
        let mut flipped = 0;
        for (s, m) in params.spread.iter_mut().zip(self.momentum.spread.iter_mut()) {
            if *s < 0.0 {
                *s = -*s;
                *m = -*m;
                flipped += 1;
            }
        }
        flipped
    }
}

/// Convenience wrapper over [`LionState::step`].
pub fn lion_step(state: &mut LionState, params: &mut ParamGroups, grads: &ParamGrads) -> Result<()> {
    state.step(params, grads)
}

/// Plain gradient descent with the group learning rates.
pub fn sgd_step(params: &mut ParamGroups, grads: &ParamGrads) -> Result<()> {
    if !grads.same_shape(params) {
        return Err(Error::ShapeMismatch("gradient and parameters differ in shape".into()));
    }
    let mut scratch = ParamGrads::zeros_like(params);
    params.for_each_group(grads, &mut scratch, |theta, g, _, lr| *theta -= lr * g);
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
