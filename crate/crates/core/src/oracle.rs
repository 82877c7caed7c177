//! Verification oracles that share no code path with the closed-form losses:
//! CDF quadrature, the energy-distance identity, central finite differences,
//! and exhaustive enumeration of return distributions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distq::ToyMdp;
use crate::error::{Error, Result};
use crate::gmm1d::Gmm1;
use crate::kernel::phi_cdf;

/// Composite Simpson rule over `[lower, upper]` with `panels` panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    pub lower: f64,
    pub upper: f64,
    pub panels: usize,
}

impl QuadratureGrid {
    /// Default truncation in effective standard deviations.
    pub const TAIL_SDS: f64 = 12.0;

    /// Integration window `[min mu - 12 max(sigma, 1), max mu + 12 max(sigma, 1)]`
    /// over the components of both mixtures.
    pub fn covering(g1: &Gmm1, g2: &Gmm1, panels: usize) -> Self {
        let mut lower = f64::INFINITY;
        let mut upper = f64::NEG_INFINITY;
        for g in [g1, g2] {
            for (m, s) in g.means().iter().zip(g.stds()) {
                let half = Self::TAIL_SDS * s.max(1.0);
                lower = lower.min(m - half);
                upper = upper.max(m + half);
            }
        }
        Self {
            lower,
            upper,
            panels,
        }
    }
}

/// Simpson's rule for `f` on `[a, b]` with an even number of panels. The
/// right endpoint is evaluated through `f_right_end`, which lets callers supply
/// a left limit at a jump.
fn simpson<F, G>(f: F, f_right_end: G, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let panels = panels.max(2) + panels % 2;
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f_right_end(b);
    for i in 1..panels {
        let x = a + h * i as f64;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    sum * h / 3.0
}

fn cdf_left(g: &Gmm1, x: f64) -> f64 {
    g.weights()
        .iter()
        .zip(g.means().iter().zip(g.stds()))
        .map(|(p, (m, s))| {
            p * if *s == 0.0 {
                if x > *m {
                    1.0
                } else {
                    0.0
                }
            } else {
                phi_cdf((x - m) / s)
            }
        })
        .sum()
}

/// `integral |F_1 - F_2|^2 dx` by composite Simpson.
///
/// The window is split at every atom and around every component (at
/// `mu +- {0, 1/2, 1, 2, 4, 8} sigma`) so that steps fall on panel boundaries
/// and narrow components are resolved; panels are distributed over the pieces
/// in proportion to their length with at least 16 per piece.
pub fn c2_squared_quadrature(g1: &Gmm1, g2: &Gmm1, grid: QuadratureGrid) -> f64 {
    let mut cuts = vec![grid.lower, grid.upper];
    for g in [g1, g2] {
        for (m, s) in g.means().iter().zip(g.stds()) {
            cuts.push(*m);
            if *s > 0.0 {
                for c in [0.5, 1.0, 2.0, 4.0, 8.0] {
                    cuts.push(m - c * s);
                    cuts.push(m + c * s);
                }
            }
        }
    }
    cuts.retain(|c| *c >= grid.lower && *c <= grid.upper);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let width = grid.upper - grid.lower;
    let f = |x: f64| {
        let d = g1.cdf(x) - g2.cdf(x);
        d * d
    };
    let f_left = |x: f64| {
        let d = cdf_left(g1, x) - cdf_left(g2, x);
        d * d
    };
    cuts.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let share = ((b - a) / width * grid.panels as f64).ceil() as usize;
            simpson(f, f_left, a, b, share.max(16))
        })
        .sum()
}

/// Monte-Carlo estimate of `C2^2` through `2 C2^2 = 2E|Z-W| - E|Z-Z'| - E|W-W'|`
/// with a jackknife standard error.
///
/// Each sample draws independent `Z, Z' ~ g1` and `W, W' ~ g2` by picking a
/// component and then a Gaussian draw.
pub fn energy_mc(g1: &Gmm1, g2: &Gmm1, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if samples < 10_000 {
        return Err(Error::InvalidConfig(format!(
            "energy estimate needs at least 10000 samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z = g1.sample(&mut rng);
        let z2 = g1.sample(&mut rng);
        let w = g2.sample(&mut rng);
        let w2 = g2.sample(&mut rng);
        terms.push((z - w).abs() - 0.5 * (z - z2).abs() - 0.5 * (w - w2).abs());
    }
    Ok(jackknife_mean(&terms))
}

/// Mean and jackknife standard error from leave-one-out means.
pub fn jackknife_mean(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    let mean = total / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let loo_mean = |x: f64| (total - x) / (n - 1.0);
    let loo_avg = xs.iter().map(|&x| loo_mean(x)).sum::<f64>() / n;
    let var = (n - 1.0) / n
        * xs
            .iter()
            .map(|&x| {
                let d = loo_mean(x) - loo_avg;
                d * d
            })
            .sum::<f64>();
    (mean, var.sqrt())
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` with
/// `h = step * max(1, |x_i|)`; `step` defaults to `1e-5`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], step: Option<f64>) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let step = step.unwrap_or(1e-5);
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Componentwise relative error `|a - b| / max(|a|, |b|, floor)`, maximised
/// over the vector.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Trajectory budget for [`mdp_return_distribution`].
pub const MAX_TRAJECTORIES: usize = 1_000_000;

/// Atoms closer than this are merged.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Exact discounted-return distribution of every `(s, a)` under a
/// deterministic `policy` (one action per state), by enumerating all
/// trajectories of at most `horizon` rewards.
///
/// Result is indexed `[state][action]`; each entry is a point-mass mixture
/// with duplicate atoms merged.
pub fn mdp_return_distribution(mdp: &ToyMdp, policy: &[usize]) -> Result<Vec<Vec<Gmm1>>> {
    mdp.validate()?;
    if policy.len() != mdp.states() {
        return Err(Error::ShapeMismatch(format!(
            "policy has {} entries for {} states",
            policy.len(),
            mdp.states()
        )));
    }
    if let Some(s) = policy.iter().position(|&a| a >= mdp.actions()) {
        return Err(Error::IndexOutOfRange(format!("policy action at state {s}")));
    }
    let mut budget = MAX_TRAJECTORIES;
    let mut table = Vec::with_capacity(mdp.states());
    for s in 0..mdp.states() {
        let mut row = Vec::with_capacity(mdp.actions());
        for a in 0..mdp.actions() {
            let mut atoms = Vec::new();
            enumerate(mdp, policy, s, a, 0, 0.0, 1.0, 1.0, &mut atoms, &mut budget)?;
            row.push(merge_atoms(atoms)?);
        }
        table.push(row);
    }
    Ok(table)
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    mdp: &ToyMdp,
    policy: &[usize],
    s: usize,
    a: usize,
    depth: usize,
    acc: f64,
    discount: f64,
    prob: f64,
    atoms: &mut Vec<(f64, f64)>,
    budget: &mut usize,
) -> Result<()> {
    let reward = mdp.reward(s, a);
    for (r, pr) in reward.atoms().iter().zip(reward.probs()) {
        if *pr == 0.0 {
            continue;
        }
        let value = acc + discount * r;
        for &(next, pt) in mdp.transitions(s, a) {
            if pt == 0.0 {
                continue;
            }
            let p = prob * pr * pt;
            match next {
                Some(ns) if depth + 1 < mdp.horizon() => enumerate(
                    mdp,
                    policy,
                    ns,
                    policy[ns],
                    depth + 1,
                    value,
                    discount * mdp.gamma(),
                    p,
                    atoms,
                    budget,
                )?,
                _ => {
                    if *budget == 0 {
                        return Err(Error::TooManyTrajectories {
                            limit: MAX_TRAJECTORIES,
                        });
                    }
                    *budget -= 1;
                    atoms.push((value, p));
                }
            }
        }
    }
    Ok(())
}

fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Gmm1> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (v, p) in atoms {
        match merged.last_mut() {
            Some(last) if (v - last.0).abs() <= ATOM_MERGE_TOL => last.1 += p,
            _ => merged.push((v, p)),
        }
    }
    let (means, weights): (Vec<f64>, Vec<f64>) = merged.into_iter().unzip();
    let n = means.len();
    Gmm1::new(weights, means, vec![0.0; n])
}

/// Greedy policy with respect to exact expected returns, by backward
/// induction over the remaining horizon. Ties go to the lowest action.
///
/// For the acyclic chains used in the demos the greedy action does not depend
/// on the remaining horizon; the returned policy is the one for a full
/// horizon.
pub fn optimal_policy(mdp: &ToyMdp) -> Result<Vec<usize>> {
    mdp.validate()?;
    let (ns, na) = (mdp.states(), mdp.actions());
    let mut value = vec![0.0; ns];
    let mut policy = vec![0; ns];
    for _ in 0..mdp.horizon() {
        let mut next_value = vec![0.0; ns];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let q = mdp.reward(s, a).mean()
                    + mdp.gamma()
                        * mdp
                            .transitions(s, a)
                            .iter()
                            .map(|&(n, p)| p * n.map_or(0.0, |n| value[n]))
                            .sum::<f64>();
                if q > best {
                    best = q;
                    policy[s] = a;
                }
            }
            next_value[s] = best;
        }
        value = next_value;
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distq::DiscreteDist;

    #[test]
    fn quadrature_examples() {
        let n01 = Gmm1::single(0.0, 1.0);
        let grid = QuadratureGrid::covering(&n01, &n01, 2000);
        assert!(c2_squared_quadrature(&n01, &n01, grid).abs() < 1e-15);

        let (a, b) = (Gmm1::delta(0.0), Gmm1::delta(1.0));
        let grid = QuadratureGrid::covering(&a, &b, 2000);
        assert!((c2_squared_quadrature(&a, &b, grid) - 1.0).abs() < 1e-9);

        // mpmath reference values
        let d0 = Gmm1::delta(0.0);
        let grid = QuadratureGrid::covering(&n01, &d0, 200_000);
        assert!((c2_squared_quadrature(&n01, &d0, grid) - 0.233_694_977_255_109).abs() < 1e-10);
        let n11 = Gmm1::single(1.0, 1.0);
        let grid = QuadratureGrid::covering(&n01, &n11, 200_000);
        assert!((c2_squared_quadrature(&n01, &n11, grid) - 0.270_903_289_652_978_8).abs() < 1e-10);
    }

    #[test]
    fn quadrature_converges_on_smooth_inputs() {
        let a = Gmm1::new(vec![0.3, 0.7], vec![-1.0, 2.0], vec![0.4, 1.5]).unwrap();
        let b = Gmm1::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![1.0, 0.2]).unwrap();
        let coarse = c2_squared_quadrature(&a, &b, QuadratureGrid::covering(&a, &b, 20_000));
        let fine = c2_squared_quadrature(&a, &b, QuadratureGrid::covering(&a, &b, 40_000));
        assert!((coarse - fine).abs() <= 1e-8);
    }

    #[test]
    fn energy_examples() {
        let (est, se) = energy_mc(&Gmm1::delta(0.0), &Gmm1::delta(1.0), 10_000, 1).unwrap();
        assert_eq!(est, 1.0);
        assert_eq!(se, 0.0);

        let n01 = Gmm1::single(0.0, 1.0);
        let (est, se) = energy_mc(&n01, &n01, 100_000, 2).unwrap();
        assert!(est.abs() <= 3.0 * se, "{est} {se}");

        assert!(energy_mc(&n01, &n01, 10, 0).is_err());
    }

    #[test]
    fn energy_matches_reference_value() {
        let (est, se) = energy_mc(&Gmm1::single(0.0, 1.0), &Gmm1::delta(0.0), 1_000_000, 3).unwrap();
        assert!((est - 0.233_694_977_255_109).abs() <= 4.0 * se, "{est} {se}");
    }

    #[test]
    fn jackknife_of_mean_is_classical_stderr() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let (m, se) = jackknife_mean(&xs);
        let n = xs.len() as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        assert!((se - (var / n).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[1.0], None).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        let g = finite_diff_grad(|_| 3.0, &[1.0, -4.0], None).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(matches!(
            finite_diff_grad(|x| if x[0] > 1.0 { f64::NAN } else { 0.0 }, &[1.0], None),
            Err(Error::NonFinite(0))
        ));
    }

    fn coin() -> DiscreteDist {
        DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn return_distribution_single_step() {
        let mdp = ToyMdp::new(1, 1, 1, vec![vec![vec![(None, 1.0)]]], vec![vec![coin()]], 0.9).unwrap();
        let z = mdp_return_distribution(&mdp, &[0]).unwrap();
        assert_eq!(z[0][0], Gmm1::from_points(&[0.0, 1.0]).unwrap());
    }

    #[test]
    fn return_distribution_deterministic_two_steps() {
        let one = DiscreteDist::point(1.0);
        let mdp = ToyMdp::new(
            2,
            1,
            2,
            vec![vec![vec![(Some(1), 1.0)]], vec![vec![(None, 1.0)]]],
            vec![vec![one.clone()], vec![one]],
            0.5,
        )
        .unwrap();
        let z = mdp_return_distribution(&mdp, &[0, 0]).unwrap();
        assert_eq!(z[0][0], Gmm1::delta(1.5));
    }

    #[test]
    fn return_distribution_coin_chain() {
        let gamma = 0.9;
        let mdp = ToyMdp::new(
            3,
            1,
            3,
            vec![
                vec![vec![(Some(1), 1.0)]],
                vec![vec![(Some(2), 1.0)]],
                vec![vec![(None, 1.0)]],
            ],
            vec![vec![coin()], vec![coin()], vec![coin()]],
            gamma,
        )
        .unwrap();
        let z = mdp_return_distribution(&mdp, &[0, 0, 0]).unwrap();
        let g = &z[0][0];
        assert_eq!(g.len(), 8);
        let mut expected = Vec::new();
        for r0 in [0.0, 1.0] {
            for r1 in [0.0, 1.0] {
                for r2 in [0.0, 1.0] {
                    expected.push(r0 + gamma * r1 + gamma * gamma * r2);
                }
            }
        }
        expected.sort_by(f64::total_cmp);
        for (m, e) in g.means().iter().zip(&expected) {
            assert!((m - e).abs() < 1e-12);
        }
        assert!(g.weights().iter().all(|&w| (w - 0.125).abs() < 1e-15));
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn return_distribution_rejects_explosion() {
        let wide = DiscreteDist::new((0..10).map(f64::from).collect(), vec![0.1; 10]).unwrap();
        let mdp = ToyMdp::new(1, 1, 7, vec![vec![vec![(Some(0), 1.0)]]], vec![vec![wide]], 0.5).unwrap();
        assert!(matches!(
            mdp_return_distribution(&mdp, &[0]),
            Err(Error::TooManyTrajectories { .. })
        ));
    }
}
