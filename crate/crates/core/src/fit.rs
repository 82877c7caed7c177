//! Training loops: fit a mixture to a point cloud or to another mixture with
//! the (sliced) Cramér loss, the negative log-likelihood, or the Cramér loss
//! followed by a likelihood fine-tuning phase.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gmm1d::{c2_squared_grad_view, nll_grad_view, Gmm1};
use crate::gmm_nd::{nll_nd_grad, sliced_c2_squared_grad, DirectionSet, GmmN};
use crate::optim::{sigma_penalty, view_1d, LearningRates, LionState, ParamGrads, ParamGroups};

/// Smallest standard deviation (or singular value of `S_j`) allowed when the
/// likelihood phase starts.
pub const NLL_MIN_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Sc2,
    Nll,
    Sc2ThenNll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMode {
    Uniform,
    Equidistant2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Steps of the first phase (Cramér for `Sc2`/`Sc2ThenNll`, likelihood for
    /// `Nll`).
    pub steps: usize,
    pub loss_kind: LossKind,
    /// Likelihood steps after the Cramér phase of `Sc2ThenNll`.
    pub nll_steps: usize,
    pub t_slices: usize,
    pub direction_mode: DirectionMode,
    pub offset_angle: f64,
    /// Fold uniform directions onto one hemisphere.
    pub hemisphere: bool,
    pub lr: LearningRates,
    pub seed: u64,
    /// Draw fresh uniform directions every step; otherwise draw once. Ignored
    /// for equidistant directions, which are always fixed.
    pub resample_directions_every_step: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 1200,
            loss_kind: LossKind::Sc2,
            nll_steps: 200,
            t_slices: 7,
            direction_mode: DirectionMode::Uniform,
            offset_angle: 0.0,
            hemisphere: false,
            lr: LearningRates::new(5e-6, 2e-2, 3e-3),
            seed: 0,
            resample_directions_every_step: true,
        }
    }
}

impl FitConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if self.t_slices == 0 {
            return Err(Error::InvalidConfig("t_slices must be at least 1".into()));
        }
        if dim >= 2 && self.direction_mode == DirectionMode::Equidistant2d && dim != 2 {
            return Err(Error::InvalidConfig(format!(
                "equidistant directions need dimension 2, data has {dim}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Cramér steps skipped because the loss or gradient was not finite.
    pub non_finite_sc2: usize,
    /// Likelihood steps skipped for the same reason (or a singular scale).
    pub non_finite_nll: usize,
    /// Steps where the negative-sigma penalty was non-zero (univariate only).
    pub sigma_penalty_activations: usize,
    /// `det(Sigma_j)` after training over its initial value, per component.
    pub determinant_ratios: Vec<f64>,
}

impl Diagnostics {
    pub fn non_finite_events(&self) -> usize {
        self.non_finite_sc2 + self.non_finite_nll
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub initial_model: GmmN,
    pub model: GmmN,
    /// Loss per step, both phases concatenated. Cramér steps record the
    /// (normalised sliced) distance plus any sigma penalty; likelihood steps
    /// record the negative log-likelihood.
    pub loss_history: Vec<f64>,
    /// Number of leading entries of `loss_history` from the Cramér phase.
    pub sc2_steps: usize,
    pub diagnostics: Diagnostics,
}

impl FitReport {
    /// The fitted model as a univariate mixture when `dim == 1`.
    pub fn model_1d(&self) -> Option<Gmm1> {
        gmm_nd_to_1d(&self.model)
    }
}

/// Univariate view of a one-dimensional `GmmN` (`sigma = |S|`).
pub fn gmm_nd_to_1d(g: &GmmN) -> Option<Gmm1> {
    if g.dim() != 1 {
        return None;
    }
    Gmm1::new(
        g.weights().to_vec(),
        g.means().iter().map(|m| m[0]).collect(),
        g.scales().iter().map(|s| s[(0, 0)].abs()).collect(),
    )
    .ok()
}

enum Target<'a> {
    Points(&'a [DVector<f64>], GmmN),
    Mixture(&'a GmmN),
}

impl Target<'_> {
    fn mixture(&self) -> &GmmN {
        match self {
            Target::Points(_, g) => g,
            Target::Mixture(g) => g,
        }
    }
}

/// Fits `k` components to a point cloud; the Cramér target is the equal-weight
/// point-mass mixture of the points, the likelihood uses the points directly.
pub fn fit_gmm_to_points(points: &[DVector<f64>], k: usize, cfg: &FitConfig) -> Result<FitReport> {
    let target = GmmN::from_points(points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = init_from_points(points, k, &mut rng)?;
    run(init, Target::Points(points, target), cfg, &mut rng)
}

pub fn fit_gmm_to_points_1d(points: &[f64], k: usize, cfg: &FitConfig) -> Result<FitReport> {
    let pts: Vec<DVector<f64>> = points.iter().map(|&x| DVector::from_element(1, x)).collect();
    fit_gmm_to_points(&pts, k, cfg)
}

/// Fits `k` components directly to another mixture, without sampling. Only
/// the Cramér loss is available.
pub fn fit_gmm_to_gmm(target: &GmmN, k: usize, cfg: &FitConfig) -> Result<FitReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = init_from_mixture(target, k, &mut rng)?;
    run(init, Target::Mixture(target), cfg, &mut rng)
}

pub fn fit_gmm1_to_gmm1(target: &Gmm1, k: usize, cfg: &FitConfig) -> Result<FitReport> {
    fit_gmm_to_gmm(&GmmN::from_gmm1(target), k, cfg)
}

/// Like [`fit_gmm_to_gmm`] but starting from an explicit model.
pub fn fit_gmm_to_gmm_from(init: &GmmN, target: &GmmN, cfg: &FitConfig) -> Result<FitReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run(init.clone(), Target::Mixture(target), cfg, &mut rng)
}

/// Like [`fit_gmm_to_points`] but starting from an explicit model.
pub fn fit_gmm_to_points_from(
    init: &GmmN,
    points: &[DVector<f64>],
    cfg: &FitConfig,
) -> Result<FitReport> {
    let target = GmmN::from_points(points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run(init.clone(), Target::Points(points, target), cfg, &mut rng)
}

/// Means uniform in the bounding box of the data; scales `std / 2` times the
/// identity, where `std` is the root-mean-square coordinate standard
/// deviation (1 if the data has no spread); equal weights.
fn init_from_points<R: Rng + ?Sized>(
    points: &[DVector<f64>],
    k: usize,
    rng: &mut R,
) -> Result<GmmN> {
    if points.is_empty() {
        return Err(Error::Empty("points"));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let mut mean = vec![0.0; dim];
    for p in points {
        for d in 0..dim {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
            mean[d] += p[d] / points.len() as f64;
        }
    }
    let mut var = 0.0;
    for p in points {
        for d in 0..dim {
            var += (p[d] - mean[d]).powi(2);
        }
    }
    var /= (points.len() * dim) as f64;
    init_in_box(&lo, &hi, var.sqrt(), k, rng)
}

/// Means uniform in the per-coordinate envelope `mu_j +- 2 sigma_j`, scales
/// from the mixture's own root-mean-square coordinate spread.
fn init_from_mixture<R: Rng + ?Sized>(target: &GmmN, k: usize, rng: &mut R) -> Result<GmmN> {
    let dim = target.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let center = target.mean();
    let mut var = 0.0;
    for (j, (p, m)) in target.weights().iter().zip(target.means()).enumerate() {
        let cov = target.covariance(j);
        for d in 0..dim {
            let sd = cov[(d, d)].sqrt();
            lo[d] = lo[d].min(m[d] - 2.0 * sd);
            hi[d] = hi[d].max(m[d] + 2.0 * sd);
            var += p * (cov[(d, d)] + (m[d] - center[d]).powi(2));
        }
    }
    var /= dim as f64;
    init_in_box(&lo, &hi, var.sqrt(), k, rng)
}

fn init_in_box<R: Rng + ?Sized>(
    lo: &[f64],
    hi: &[f64],
    std: f64,
    k: usize,
    rng: &mut R,
) -> Result<GmmN> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one component".into()));
    }
    let dim = lo.len();
    let std = if std > 0.0 && std.is_finite() { std } else { 1.0 };
    let means = (0..k)
        .map(|_| {
            DVector::from_fn(dim, |d, _| {
                if hi[d] > lo[d] {
                    rng.random_range(lo[d]..hi[d])
                } else {
                    lo[d]
                }
            })
        })
        .collect();
    let scales = vec![DMatrix::identity(dim, dim) * (std / 2.0); k];
    GmmN::new(vec![1.0 / k as f64; k], means, scales)
}

fn run<R: Rng + ?Sized>(
    init: GmmN,
    target: Target<'_>,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<FitReport> {
    let dim = init.dim();
    if target.mixture().dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: target.mixture().dim(),
        });
    }
    cfg.validate(dim)?;
    let (sc2_steps, nll_steps) = match cfg.loss_kind {
        LossKind::Sc2 => (cfg.steps, 0),
        LossKind::Nll => (0, cfg.steps),
        LossKind::Sc2ThenNll => (cfg.steps, cfg.nll_steps),
    };
    let points = match (&target, nll_steps) {
        (_, 0) => None,
        (Target::Points(p, _), _) => Some(*p),
        (Target::Mixture(_), _) => {
            return Err(Error::InvalidConfig(
                "the likelihood loss needs data points, not a mixture target".into(),
            ))
        }
    };

    let mut params = ParamGroups::from_gmm_nd(&init, cfg.lr);
    let mut lion = LionState::new(&params);
    let mut diag = Diagnostics::default();
    let mut history = Vec::with_capacity(sc2_steps + nll_steps);

    let target_1d = if dim == 1 {
        gmm_nd_to_1d(target.mixture())
    } else {
        None
    };
    let mut fixed_dirs = if dim >= 2 {
        match cfg.direction_mode {
            DirectionMode::Equidistant2d => {
                Some(DirectionSet::equidistant(dim, cfg.t_slices, cfg.offset_angle)?)
            }
            DirectionMode::Uniform if !cfg.resample_directions_every_step => Some(
                DirectionSet::uniform_with(dim, cfg.t_slices, cfg.hemisphere, rng)?,
            ),
            DirectionMode::Uniform => None,
        }
    } else {
        None
    };

    for _ in 0..sc2_steps {
        let step = if let Some(t1) = &target_1d {
            let w = params.weights();
            let (loss, g) = c2_squared_grad_view(view_1d(&w, &params), t1.view());
            let mut grads = ParamGrads::from_grad1(&g, &w);
            let pen = apply_sigma_penalty(&params, &mut grads, &mut diag);
            Some((loss + pen, grads))
        } else {
            let dirs = match &mut fixed_dirs {
                Some(d) => d.clone(),
                None => DirectionSet::uniform_with(dim, cfg.t_slices, cfg.hemisphere, rng)?,
            };
            match params.to_gmm_nd() {
                Ok(model) => {
                    let (loss, g) = sliced_c2_squared_grad(&model, target.mixture(), &dirs)?;
                    Some((loss, ParamGrads::from_grad_nd(&g, model.weights())))
                }
                Err(_) => None,
            }
        };
        match step {
            Some((loss, grads)) if loss.is_finite() && grads.is_finite() => {
                history.push(loss);
                lion.step(&mut params, &grads)?;
                lion.reflect_negative_stds(&mut params);
            }
            other => {
                history.push(other.map_or(f64::NAN, |(l, _)| l));
                diag.non_finite_sc2 += 1;
            }
        }
    }

    if let Some(points) = points {
        inflate_scales(&mut params);
        let xs_1d: Vec<f64> = if dim == 1 {
            points.iter().map(|p| p[0]).collect()
        } else {
            Vec::new()
        };
        for _ in 0..nll_steps {
            let step = if dim == 1 {
                let w = params.weights();
                nll_grad_view(view_1d(&w, &params), &xs_1d).ok().map(|(loss, g)| {
                    let mut grads = ParamGrads::from_grad1(&g, &w);
                    let pen = apply_sigma_penalty(&params, &mut grads, &mut diag);
                    (loss + pen, grads)
                })
            } else {
                params.to_gmm_nd().ok().and_then(|model| {
                    nll_nd_grad(&model, points)
                        .ok()
                        .map(|(loss, g)| (loss, ParamGrads::from_grad_nd(&g, model.weights())))
                })
            };
            match step {
                Some((loss, grads)) if loss.is_finite() && grads.is_finite() => {
                    history.push(loss);
                    lion.step(&mut params, &grads)?;
                    lion.reflect_negative_stds(&mut params);
                }
                other => {
                    history.push(other.map_or(f64::NAN, |(l, _)| l));
                    diag.non_finite_nll += 1;
                }
            }
        }
    }

    let model = params.to_gmm_nd()?;
    diag.determinant_ratios = (0..model.len())
        .map(|j| model.covariance(j).determinant() / init.covariance(j).determinant())
        .collect();
    Ok(FitReport {
        initial_model: init,
        model,
        loss_history: history,
        sc2_steps,
        diagnostics: diag,
    })
}

fn apply_sigma_penalty(params: &ParamGroups, grads: &mut ParamGrads, diag: &mut Diagnostics) -> f64 {
    let (pen, pen_grad) = sigma_penalty(&params.spread);
    if pen > 0.0 {
        diag.sigma_penalty_activations += 1;
        for (g, p) in grads.spread.iter_mut().zip(pen_grad) {
            *g += p;
        }
    }
    pen
}

/// Makes every component non-degenerate before the likelihood phase: a
/// univariate `|sigma|` below [`NLL_MIN_SCALE`] is raised to it, and an `S_j`
/// whose smallest singular value is below it is replaced by the Cholesky
/// factor of `S_j^T S_j + NLL_MIN_SCALE^2 I`.
fn inflate_scales(params: &mut ParamGroups) {
    let d = params.dim;
    if d == 1 {
        for s in &mut params.spread {
            if s.abs() < NLL_MIN_SCALE {
                *s = NLL_MIN_SCALE;
            }
        }
        return;
    }
    for block in params.spread.chunks_mut(d * d) {
        let s = DMatrix::from_row_slice(d, d, block);
        let smallest = s.singular_values().min();
        if smallest >= NLL_MIN_SCALE {
            continue;
        }
        let cov = s.transpose() * &s + DMatrix::identity(d, d) * NLL_MIN_SCALE.powi(2);
        if let Some(chol) = cov.cholesky() {
            let upper = chol.l().transpose();
            for r in 0..d {
                for c in 0..d {
                    block[r * d + c] = upper[(r, c)];
                }
            }
        }
    }
}
