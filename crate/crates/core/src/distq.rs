//! Tabular distributional Q-learning with mixture-valued table entries and the
//! closed-form Cramér loss against double-estimator Bellman targets.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gmm1d::{c2_squared_grad_view, Gmm1, Grad1, Mix1};
use crate::optim::{sigma_penalty, LearningRates, LionState, ParamGrads, ParamGroups};

const PROB_SUM_TOL: f64 = 1e-12;

/// Finite distribution over real atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::InvalidConfig(format!(
                "{} atoms with {} probabilities",
                atoms.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidConfig("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidConfig(format!("probabilities sum to {total}")));
        }
        Ok(Self { atoms, probs })
    }

    pub fn point(x: f64) -> Self {
        Self {
            atoms: vec![x],
            probs: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(a, p)| a * p).sum()
    }

    pub fn to_gmm(&self) -> Gmm1 {
        Gmm1::new(self.probs.clone(), self.atoms.clone(), vec![0.0; self.atoms.len()])
            .expect("validated distribution")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.atoms[sample_index(&self.probs, rng)]
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Next-state distribution; `None` is the terminal state.
pub type Transitions = Vec<(Option<usize>, f64)>;

/// Small episodic MDP. Every trajectory is cut after `horizon` rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMdp {
    states: usize,
    actions: usize,
    horizon: usize,
    transition: Vec<Vec<Transitions>>,
    reward: Vec<Vec<DiscreteDist>>,
    gamma: f64,
}

impl ToyMdp {
    pub fn new(
        states: usize,
        actions: usize,
        horizon: usize,
        transition: Vec<Vec<Transitions>>,
        reward: Vec<Vec<DiscreteDist>>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self {
            states,
            actions,
            horizon,
            transition,
            reward,
            gamma,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig(
                "states, actions and horizon must be positive".into(),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        let shape_ok = |n: usize| n == self.states;
        if !shape_ok(self.transition.len()) || !shape_ok(self.reward.len()) {
            return Err(Error::InvalidConfig("tables must have one row per state".into()));
        }
        for s in 0..self.states {
            if self.transition[s].len() != self.actions || self.reward[s].len() != self.actions {
                return Err(Error::InvalidConfig(format!(
                    "state {s} must have one entry per action"
                )));
            }
            for (a, tr) in self.transition[s].iter().enumerate() {
                let total: f64 = tr.iter().map(|(_, p)| p).sum();
                if (total - 1.0).abs() > PROB_SUM_TOL || tr.iter().any(|(_, p)| *p < 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "transition ({s}, {a}) sums to {total}"
                    )));
                }
                if let Some(n) = tr.iter().filter_map(|(n, _)| *n).find(|&n| n >= self.states) {
                    return Err(Error::InvalidConfig(format!(
                        "transition ({s}, {a}) points to state {n}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transitions(&self, s: usize, a: usize) -> &[(Option<usize>, f64)] {
        &self.transition[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> &DiscreteDist {
        &self.reward[s][a]
    }

    /// Same dynamics with a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut m = self.clone();
        m.gamma = gamma;
        m.validate()?;
        Ok(m)
    }

    fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> (f64, Option<usize>) {
        let r = self.reward[s][a].sample(rng);
        let tr = &self.transition[s][a];
        let probs: Vec<f64> = tr.iter().map(|(_, p)| *p).collect();
        (r, tr[sample_index(&probs, rng)].0)
    }
}

/// Default demo MDP: a three-state chain `0 -> 1 -> 2 -> end` with two
/// actions per state and discrete rewards.
///
/// Action 0 always pays a fair coin in `{0, 1}`. Action 1 pays `4` with
/// probability 1/4 (else `0`) in states 0 and 2, and `{-2, 1}` with equal odds
/// in state 1, so the greedy policy is `[1, 0, 1]` and the return
/// distributions are multimodal.
pub fn default_chain_mdp(gamma: f64) -> Result<ToyMdp> {
    let coin = DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5])?;
    let jackpot = DiscreteDist::new(vec![0.0, 4.0], vec![0.75, 0.25])?;
    let gamble = DiscreteDist::new(vec![-2.0, 1.0], vec![0.5, 0.5])?;
    let next = |s: usize| -> Transitions {
        if s + 1 < 3 {
            vec![(Some(s + 1), 1.0)]
        } else {
            vec![(None, 1.0)]
        }
    };
    ToyMdp::new(
        3,
        2,
        3,
        (0..3).map(|s| vec![next(s), next(s)]).collect(),
        vec![
            vec![coin.clone(), jackpot.clone()],
            vec![coin.clone(), gamble],
            vec![coin, jackpot],
        ],
        gamma,
    )
}

/// One environment transition; `next = None` marks a terminal transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: Option<usize>,
}

/// Table of trainable univariate mixtures, one per `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    states: usize,
    actions: usize,
    entries: Vec<ParamGroups>,
}

impl TabularQ {
    /// Every entry starts with equal weights, means spread evenly over
    /// `[-1, 1]` and unit standard deviations.
    pub fn new(states: usize, actions: usize, components: usize, lr: LearningRates) -> Self {
        let means: Vec<f64> = if components == 1 {
            vec![0.0]
        } else {
            (0..components)
                .map(|j| -1.0 + 2.0 * j as f64 / (components - 1) as f64)
                .collect()
        };
        let init = Gmm1::new(
            vec![1.0 / components as f64; components],
            means,
            vec![1.0; components],
        )
        .expect("valid initial mixture");
        let entry = ParamGroups::from_gmm1(&init, lr);
        Self {
            states,
            actions,
            entries: vec![entry; states * actions],
        }
    }

    /// Table whose every entry is `g`.
    pub fn filled(states: usize, actions: usize, g: &Gmm1, lr: LearningRates) -> Self {
        Self {
            states,
            actions,
            entries: vec![ParamGroups::from_gmm1(g, lr); states * actions],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    fn index(&self, s: usize, a: usize) -> Result<usize> {
        if s >= self.states || a >= self.actions {
            return Err(Error::IndexOutOfRange(format!(
                "(state {s}, action {a}) in a {}x{} table",
                self.states, self.actions
            )));
        }
        Ok(s * self.actions + a)
    }

    pub fn params(&self, s: usize, a: usize) -> Result<&ParamGroups> {
        Ok(&self.entries[self.index(s, a)?])
    }

    pub fn params_mut(&mut self, s: usize, a: usize) -> Result<&mut ParamGroups> {
        let i = self.index(s, a)?;
        Ok(&mut self.entries[i])
    }

    pub fn set(&mut self, s: usize, a: usize, g: &Gmm1) -> Result<()> {
        let i = self.index(s, a)?;
        let lr = self.entries[i].lr;
        self.entries[i] = ParamGroups::from_gmm1(g, lr);
        Ok(())
    }

    /// Stored mixture at `(s, a)`, with `|sigma|` standard deviations.
    pub fn entry(&self, s: usize, a: usize) -> Result<Gmm1> {
        self.params(s, a)?.to_gmm1()
    }

    /// Expected return `sum_j p_j mu_j` at `(s, a)`.
    pub fn q_value(&self, s: usize, a: usize) -> Result<f64> {
        let p = self.params(s, a)?;
        Ok(p.weights().iter().zip(&p.means).map(|(w, m)| w * m).sum())
    }

    /// Greedy action at `s`; ties go to the lowest index.
    pub fn greedy_action(&self, s: usize) -> Result<usize> {
        let mut best = 0;
        let mut best_q = f64::NEG_INFINITY;
        for a in 0..self.actions {
            let q = self.q_value(s, a)?;
            if q > best_q {
                best_q = q;
                best = a;
            }
        }
        Ok(best)
    }
}

/// Double-estimator target `r + gamma Z_target(s', argmax_a Q_online(s', a))`.
/// Terminal transitions and `gamma = 0` give a point mass at `r`.
pub fn bellman_target(
    target: &TabularQ,
    online: &TabularQ,
    tr: &Transition,
    gamma: f64,
) -> Result<Gmm1> {
    match tr.next {
        Some(next) if gamma != 0.0 => {
            let a0 = online.greedy_action(next)?;
            Ok(target.entry(next, a0)?.affine(tr.reward, gamma))
        }
        _ => Ok(Gmm1::delta(tr.reward)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub components: usize,
    pub lr: LearningRates,
    /// Online-to-target copy period, in updates.
    pub target_update_interval: usize,
    pub epsilon: f64,
    pub replay_capacity: usize,
    pub start_state: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            batch_size: 64,
            components: 3,
            lr: LearningRates::new(5e-4, 1e-3, 2e-3),
            target_update_interval: 200,
            epsilon: 0.2,
            replay_capacity: 100_000,
            start_state: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    pub online: TabularQ,
    /// Batch loss per update (mean Cramér loss plus the sigma penalty).
    pub loss_history: Vec<f64>,
    pub updates: usize,
}

/// Epsilon-greedy rollouts into a replay buffer with one batched Lion update
/// of the touched entries per environment step once the buffer holds a full
/// batch. The target table is refreshed every `target_update_interval`
/// updates.
pub fn train_demo(mdp: &ToyMdp, cfg: &DemoConfig, seed: u64) -> Result<DemoOutcome> {
    mdp.validate()?;
    if cfg.batch_size == 0 || cfg.components == 0 || cfg.target_update_interval == 0 {
        return Err(Error::InvalidConfig(
            "batch size, components and target interval must be positive".into(),
        ));
    }
    if cfg.start_state >= mdp.states() {
        return Err(Error::InvalidConfig(format!("start state {}", cfg.start_state)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut online = TabularQ::new(mdp.states(), mdp.actions(), cfg.components, cfg.lr);
    let mut target = online.clone();
    let mut lion: Vec<LionState> = online.entries.iter().map(LionState::new).collect();
    let mut replay: VecDeque<Transition> = VecDeque::with_capacity(cfg.replay_capacity.min(1 << 16));
    let mut history = Vec::new();
    let mut updates = 0;

    for _ in 0..cfg.episodes {
        let mut s = cfg.start_state;
        for t in 0..mdp.horizon() {
            let a = if rng.random::<f64>() < cfg.epsilon {
                rng.random_range(0..mdp.actions())
            } else {
                online.greedy_action(s)?
            };
            let (reward, mut next) = mdp.step(s, a, &mut rng);
            if t + 1 == mdp.horizon() {
                next = None;
            }
            if replay.len() == cfg.replay_capacity {
                replay.pop_front();
            }
            replay.push_back(Transition {
                state: s,
                action: a,
                reward,
                next,
            });

            if replay.len() >= cfg.batch_size {
                let loss = update(&mut online, &target, &mut lion, &replay, cfg, mdp.gamma(), &mut rng)?;
                history.push(loss);
                updates += 1;
                if updates % cfg.target_update_interval == 0 {
                    target = online.clone();
                }
            }
            match next {
                Some(n) => s = n,
                None => break,
            }
        }
    }
    Ok(DemoOutcome {
        online,
        loss_history: history,
        updates,
    })
}

fn update<R: Rng + ?Sized>(
    online: &mut TabularQ,
    target: &TabularQ,
    lion: &mut [LionState],
    replay: &VecDeque<Transition>,
    cfg: &DemoConfig,
    gamma: f64,
    rng: &mut R,
) -> Result<f64> {
    let n_entries = online.entries.len();
    let mut grads: Vec<Option<Grad1>> = vec![None; n_entries];
    let scale = 1.0 / cfg.batch_size as f64;
    let mut loss = 0.0;
    for _ in 0..cfg.batch_size {
        let tr = replay[rng.random_range(0..replay.len())];
        let goal = bellman_target(target, online, &tr, gamma)?;
        let i = online.index(tr.state, tr.action)?;
        let p = &online.entries[i];
        let w = p.weights();
        let view = Mix1 {
            weights: &w,
            means: &p.means,
            stds: &p.spread,
        };
        let (l, g) = c2_squared_grad_view(view, goal.view());
        loss += scale * l;
        let acc = grads[i].get_or_insert_with(|| Grad1::zeros(p.components()));
        for j in 0..g.len() {
            acc.d_weights[j] += scale * g.d_weights[j];
            acc.d_means[j] += scale * g.d_means[j];
            acc.d_stds[j] += scale * g.d_stds[j];
        }
    }
    for (i, g) in grads.into_iter().enumerate() {
        let Some(mut g) = g else { continue };
        let p = &mut online.entries[i];
        let (pen, pen_grad) = sigma_penalty(&p.spread);
        loss += pen;
        for (d, pg) in g.d_stds.iter_mut().zip(pen_grad) {
            *d += pg;
        }
        let pg = ParamGrads::from_grad1(&g, &p.weights());
        lion[i].step(p, &pg)?;
        lion[i].reflect_negative_stds(p);
    }
    Ok(loss)
}

/// `C2^2` between every learned entry and the matching exact distribution.
pub fn ground_truth_gaps(online: &TabularQ, truth: &[Vec<Gmm1>]) -> Result<Vec<Vec<f64>>> {
    (0..online.states())
        .map(|s| {
            (0..online.actions())
                .map(|a| Ok(crate::gmm1d::c2_squared(&online.entry(s, a)?, &truth[s][a])))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr() -> LearningRates {
        LearningRates::new(1e-3, 2e-3, 2e-3)
    }

    #[test]
    fn q_value_examples() {
        let mut t = TabularQ::new(1, 1, 3, lr());
        t.set(0, 0, &Gmm1::delta(2.0)).unwrap();
        assert!((t.q_value(0, 0).unwrap() - 2.0).abs() < 1e-12);
        let two = Gmm1::new(vec![0.5, 0.5], vec![0.0, 4.0], vec![1.0, 1.0]).unwrap();
        t.set(0, 0, &two).unwrap();
        assert!((t.q_value(0, 0).unwrap() - 2.0).abs() < 1e-12);
        t.set(0, 0, &Gmm1::single(-1.5, 7.0)).unwrap();
        assert!((t.q_value(0, 0).unwrap() + 1.5).abs() < 1e-12);
        assert!(matches!(t.q_value(1, 0), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(t.q_value(0, 1), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn bellman_target_examples() {
        let table = TabularQ::filled(2, 2, &Gmm1::single(0.0, 1.0), lr());
        let terminal = Transition {
            state: 0,
            action: 0,
            reward: 1.0,
            next: None,
        };
        assert_eq!(bellman_target(&table, &table, &terminal, 0.99).unwrap(), Gmm1::delta(1.0));

        let cont = Transition {
            next: Some(1),
            ..terminal
        };
        assert_eq!(bellman_target(&table, &table, &cont, 0.0).unwrap(), Gmm1::delta(1.0));

        let mut online = table.clone();
        online.set(1, 1, &Gmm1::single(5.0, 1.0)).unwrap();
        let mut target = table.clone();
        target.set(1, 0, &Gmm1::single(9.0, 1.0)).unwrap();
        // online argmax at s'=1 is action 1; the target table supplies N(0, 1)
        let z = bellman_target(&target, &online, &cont, 0.99).unwrap();
        assert_eq!(z.means(), &[1.0]);
        assert!((z.stds()[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_pick_lowest_action() {
        let t = TabularQ::filled(1, 3, &Gmm1::single(1.0, 1.0), lr());
        assert_eq!(t.greedy_action(0).unwrap(), 0);
    }

    #[test]
    fn default_mdp_shape() {
        let mdp = default_chain_mdp(0.9).unwrap();
        assert_eq!((mdp.states(), mdp.actions(), mdp.horizon()), (3, 2, 3));
        assert_eq!(crate::oracle::optimal_policy(&mdp).unwrap(), vec![1, 0, 1]);
    }

    #[test]
    fn invalid_mdp_rejected() {
        let coin = DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(ToyMdp::new(1, 1, 1, vec![vec![vec![(None, 0.9)]]], vec![vec![coin.clone()]], 0.9).is_err());
        assert!(ToyMdp::new(1, 1, 1, vec![vec![vec![(Some(3), 1.0)]]], vec![vec![coin]], 0.9).is_err());
        assert!(DiscreteDist::new(vec![0.0], vec![0.5]).is_err());
    }

    #[test]
    fn zero_episodes_leaves_table_untouched() {
        let mdp = default_chain_mdp(0.9).unwrap();
        let cfg = DemoConfig {
            episodes: 0,
            ..DemoConfig::default()
        };
        let out = train_demo(&mdp, &cfg, 1).unwrap();
        assert_eq!(out.updates, 0);
        assert!(out.loss_history.is_empty());
        assert_eq!(out.online, TabularQ::new(3, 2, 3, cfg.lr));
    }
}
