//! Comparison behavior strategies: round robin over the targets, their
//! mixture, uniform sampling, successor-representation curiosity and
//! REINFORCE-style behavior policy search.

use crate::behavior::{floor_row, mixture_row, BehaviorPolicy};
use crate::env::Transition;
use crate::error::{Error, Result};
use crate::gvf::TargetPolicy;
use crate::policy::{PolicyTable, StochasticPolicy};
use crate::td::FeatureMap;

/// Follows one target policy per episode, cycling through them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRobinState {
    pub episode_counter: u64,
    pub n_policies: usize,
}

impl RoundRobinState {
    pub fn new(n_policies: usize) -> Result<Self> {
        if n_policies == 0 {
            return Err(Error::InvalidConfig("round robin needs at least one policy".into()));
        }
        Ok(Self {
            episode_counter: 0,
            n_policies,
        })
    }

    pub fn active(&self) -> usize {
        (self.episode_counter % self.n_policies as u64) as usize
    }

    pub fn end_episode(&mut self) {
        self.episode_counter += 1;
    }
}

pub fn round_robin_policy<'a>(state: &RoundRobinState, policies: &'a [TargetPolicy]) -> Result<&'a TargetPolicy> {
    if policies.is_empty() {
        return Err(Error::InvalidConfig("round robin needs at least one policy".into()));
    }
    Ok(&policies[(state.episode_counter % policies.len() as u64) as usize])
}

/// Normalized sum of the target policies in every state.
pub fn mixture_policy(policies: &[TargetPolicy], epsilon_floor: f64, rho_cap: f64) -> Result<BehaviorPolicy> {
    let first = policies
        .first()
        .ok_or_else(|| Error::InvalidConfig("mixture needs at least one policy".into()))?;
    let (n_states, n_actions) = (first.n_states(), first.n_actions());
    let mut flat = vec![0.0; n_states * n_actions];
    for (s, row) in flat.chunks_mut(n_actions).enumerate() {
        mixture_row(policies, s, row);
        floor_row(row, epsilon_floor);
    }
    BehaviorPolicy::new(
        PolicyTable::from_flat_unchecked(n_actions, flat),
        epsilon_floor,
        rho_cap,
    )
}

pub fn uniform_policy(n_states: usize, n_actions: usize, epsilon_floor: f64, rho_cap: f64) -> Result<BehaviorPolicy> {
    BehaviorPolicy::new(PolicyTable::uniform(n_states, n_actions), epsilon_floor, rho_cap)
}

/// Numerically stable `softmax(prefs / temperature)` into `out`.
pub fn softmax_into(prefs: &[f64], temperature: f64, out: &mut [f64]) {
    let max = prefs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &p) in out.iter_mut().zip(prefs) {
        *o = ((p - max) / temperature).exp();
        total += *o;
    }
    out.iter_mut().for_each(|v| *v /= total);
}

/// Successor representation, per-feature reward model and the intrinsic
/// Q function driven by how much both of them change.
#[derive(Clone, Debug)]
pub struct SrState {
    n_features: usize,
    n_actions: usize,
    gamma: f64,
    /// Row `f` is the discounted expected future occupancy from feature `f`.
    pub sr: Vec<f64>,
    /// `[gvf × feature]` estimate of the cumulant observed on entering a feature.
    pub reward_weights: Vec<f64>,
    /// `[feature × action]`.
    pub q_intrinsic: Vec<f64>,
    pub temperature: f64,
}

impl SrState {
    pub fn new(n_features: usize, n_actions: usize, n_gvfs: usize, gamma: f64, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "SR temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self {
            n_features,
            n_actions,
            gamma,
            sr: vec![0.0; n_features * n_features],
            reward_weights: vec![0.0; n_gvfs * n_features],
            q_intrinsic: vec![0.0; n_features * n_actions],
            temperature,
        })
    }

    fn q_row(&self, feature: usize) -> &[f64] {
        &self.q_intrinsic[feature * self.n_actions..(feature + 1) * self.n_actions]
    }

    /// Boltzmann distribution over the intrinsic Q values of `feature`.
    pub fn behavior_row(&self, feature: usize, out: &mut [f64]) {
        softmax_into(self.q_row(feature), self.temperature, out);
    }

    /// Learns from one transition and returns the intrinsic reward: the
    /// total absolute change of the SR and reward weights.
    pub fn step(&mut self, trans: &Transition, features: &FeatureMap, lr: f64) -> f64 {
        let f = features.feature(trans.state);
        let nf = features.feature(trans.next_state);
        let n = self.n_features;

        let mut change = 0.0;
        for j in 0..n {
            let boot = if trans.terminated { 0.0 } else { self.sr[nf * n + j] };
            let target = if j == f { 1.0 } else { 0.0 } + self.gamma * boot;
            let cell = &mut self.sr[f * n + j];
            let delta = lr * (target - *cell);
            *cell += delta;
            change += delta.abs();
        }
        for (i, &c) in trans.cumulant_values.iter().enumerate() {
            let w = &mut self.reward_weights[i * n + nf];
            let delta = lr * (c - *w);
            *w += delta;
            change += delta.abs();
        }

        // Expected Sarsa under the Boltzmann behavior itself.
        let boot = if trans.terminated {
            0.0
        } else {
            let mut probs = vec![0.0; self.n_actions];
            self.behavior_row(nf, &mut probs);
            probs.iter().zip(self.q_row(nf)).map(|(p, q)| p * q).sum()
        };
        let target = change + self.gamma * boot;
        let q = &mut self.q_intrinsic[f * self.n_actions + trans.action];
        *q += lr * (target - *q);
        change
    }
}

/// Free-function form of [`SrState::step`].
pub fn sr_step(state: &mut SrState, trans: &Transition, features: &FeatureMap, lr: f64) -> f64 {
    state.step(trans, features, lr)
}

/// Softmax-parameterized behavior updated once per episode with the
/// squared trajectory importance-sampling return as the REINFORCE weight.
#[derive(Clone, Debug)]
pub struct BpsState {
    n_actions: usize,
    /// `[state × action]` preferences.
    pub theta: Vec<f64>,
    pub alpha: f64,
    /// Preferences are clamped to `±theta_limit` after every update.
    pub theta_limit: f64,
}

/// Largest exponent used when turning a log-space weight back into a number.
const MAX_LOG_WEIGHT: f64 = 700.0;

impl BpsState {
    pub const DEFAULT_THETA_LIMIT: f64 = 50.0;

    pub fn new(n_states: usize, n_actions: usize, alpha: f64) -> Self {
        Self {
            n_actions,
            theta: vec![0.0; n_states * n_actions],
            alpha,
            theta_limit: Self::DEFAULT_THETA_LIMIT,
        }
    }

    pub fn prefs(&self, state: usize) -> &[f64] {
        &self.theta[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn behavior_row(&self, state: usize, out: &mut [f64]) {
        softmax_into(self.prefs(state), 1.0, out);
    }

    /// `ln Σ_i IS(τ, π_i)²` where `IS(τ, π) = G(τ) Π_t π(a_t|s_t)/μ(a_t|s_t)`.
    /// `None` when every term is zero.
    pub fn log_squared_is_weight(
        trajectory: &[Transition],
        behavior_probs: &[f64],
        policies: &[TargetPolicy],
        gamma: f64,
    ) -> Option<f64> {
        let mut terms = Vec::with_capacity(policies.len());
        for (i, pi) in policies.iter().enumerate() {
            let mut ret = 0.0;
            let mut discount = 1.0;
            let mut log_ratio = 0.0;
            let mut support = true;
            for (t, &mu) in trajectory.iter().zip(behavior_probs) {
                ret += discount * t.cumulant_values[i];
                discount *= gamma;
                let p = pi.prob(t.state, t.action);
                if p == 0.0 {
                    support = false;
                    break;
                }
                log_ratio += p.ln() - mu.ln();
            }
            if support && ret != 0.0 {
                terms.push(2.0 * (ret.abs().ln() + log_ratio));
            }
        }
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return None;
        }
        Some(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
    }

    /// `θ ← θ + α Σ_i IS(τ,π_i)² Σ_t ∇_θ log μ_θ(a_t|s_t)`.
    pub fn episode_update(
        &mut self,
        trajectory: &[Transition],
        behavior_probs: &[f64],
        policies: &[TargetPolicy],
        gamma: f64,
    ) {
        let Some(log_w) = Self::log_squared_is_weight(trajectory, behavior_probs, policies, gamma) else {
            return;
        };
        let coef = self.alpha * log_w.min(MAX_LOG_WEIGHT).exp();
        let n = self.n_actions;
        let mut grad = vec![0.0; n];
        for t in trajectory {
            log_softmax_grad(self.prefs(t.state), t.action, &mut grad);
            let limit = self.theta_limit;
            for (th, g) in self.theta[t.state * n..(t.state + 1) * n].iter_mut().zip(&grad) {
                *th = (*th + coef * g).clamp(-limit, limit);
            }
        }
    }
}

pub fn bps_episode_update(
    state: &mut BpsState,
    trajectory: &[Transition],
    behavior_probs: &[f64],
    policies: &[TargetPolicy],
    gamma: f64,
) {
    state.episode_update(trajectory, behavior_probs, policies, gamma);
}

/// `∂/∂θ_b log softmax(θ)_a = 1[a = b] − softmax(θ)_b`.
pub fn log_softmax_grad(prefs: &[f64], action: usize, out: &mut [f64]) {
    softmax_into(prefs, 1.0, out);
    for (b, g) in out.iter_mut().enumerate() {
        *g = if b == action { 1.0 } else { 0.0 } - *g;
    }
}
