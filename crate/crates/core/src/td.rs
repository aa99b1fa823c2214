//! Off-policy Expected-Sarsa learning of per-GVF value (Q) and variance (M)
//! tables, plus the importance-weighted variant used for comparison.

use serde::{Deserialize, Serialize};

use crate::behavior::{is_ratio, BehaviorPolicy};
use crate::env::{ActionId, GridLayout, StateId, Transition};
use crate::error::{Error, Result};
use crate::gvf::{GvfBundle, GvfSpec, TargetPolicy};
use crate::policy::StochasticPolicy;

/// Maps states to table rows. Grouping merges `grouping_factor` adjacent
/// columns of a grid into one feature.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    grouping_factor: usize,
    mapping: Vec<usize>,
    n_features: usize,
}

impl FeatureMap {
    pub fn identity(n_states: usize) -> Self {
        Self {
            grouping_factor: 1,
            mapping: (0..n_states).collect(),
            n_features: n_states,
        }
    }

    /// Aggregates grid columns in blocks of `factor`; a 20×20 grid with
    /// factor 2 becomes a 20×10 feature grid.
    pub fn grouped(layout: &GridLayout, n_states: usize, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidConfig("grouping factor must be positive".into()));
        }
        if factor == 1 {
            return Ok(Self::identity(n_states));
        }
        let cols = layout.width.div_ceil(factor);
        let mapping = (0..n_states)
            .map(|s| {
                let (r, c) = layout.cell(s);
                r * cols + c / factor
            })
            .collect();
        Ok(Self {
            grouping_factor: factor,
            mapping,
            n_features: layout.height * cols,
        })
    }

    #[inline]
    pub fn feature(&self, state: StateId) -> usize {
        self.mapping[state]
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn grouping_factor(&self) -> usize {
        self.grouping_factor
    }
}

/// Dense `[gvf × feature × action]` table.
#[derive(Clone, Debug, PartialEq)]
struct Table {
    n_features: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl Table {
    fn filled(n_gvfs: usize, n_features: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_features,
            n_actions,
            data: vec![value; n_gvfs * n_features * n_actions],
        }
    }

    #[inline]
    fn index(&self, gvf: usize, feature: usize, action: usize) -> usize {
        (gvf * self.n_features + feature) * self.n_actions + action
    }

    #[inline]
    fn row(&self, gvf: usize, feature: usize) -> &[f64] {
        let start = self.index(gvf, feature, 0);
        &self.data[start..start + self.n_actions]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable(Table);

impl ValueTable {
    pub fn zeros(n_gvfs: usize, n_features: usize, n_actions: usize) -> Self {
        Self(Table::filled(n_gvfs, n_features, n_actions, 0.0))
    }

    #[inline]
    pub fn get(&self, gvf: usize, feature: usize, action: ActionId) -> f64 {
        self.0.data[self.0.index(gvf, feature, action)]
    }

    pub fn set(&mut self, gvf: usize, feature: usize, action: ActionId, value: f64) {
        let i = self.0.index(gvf, feature, action);
        self.0.data[i] = value;
    }

    #[inline]
    pub fn row(&self, gvf: usize, feature: usize) -> &[f64] {
        self.0.row(gvf, feature)
    }

    pub fn values(&self) -> &[f64] {
        &self.0.data
    }
}

/// Non-negative second-moment table. Every write is clamped at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceTable(Table);

impl VarianceTable {
    pub fn new(n_gvfs: usize, n_features: usize, n_actions: usize, init: f64) -> Result<Self> {
        if !(init > 0.0 && init.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "M must start strictly positive, got {init}"
            )));
        }
        Ok(Self(Table::filled(n_gvfs, n_features, n_actions, init)))
    }

    #[inline]
    pub fn get(&self, gvf: usize, feature: usize, action: ActionId) -> f64 {
        self.0.data[self.0.index(gvf, feature, action)]
    }

    pub fn set(&mut self, gvf: usize, feature: usize, action: ActionId, value: f64) {
        let i = self.0.index(gvf, feature, action);
        self.0.data[i] = value.max(0.0);
    }

    #[inline]
    pub fn row(&self, gvf: usize, feature: usize) -> &[f64] {
        self.0.row(gvf, feature)
    }

    pub fn values(&self) -> &[f64] {
        &self.0.data
    }
}

/// Linear decay from `alpha_start` to `alpha_min` over `decay_steps`, then flat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub alpha_start: f64,
    pub alpha_min: f64,
    pub decay_steps: u64,
}

impl LrSchedule {
    pub const DEFAULT_DECAY_STEPS: u64 = 500_000;

    pub fn decaying_to(alpha_min: f64) -> Self {
        Self {
            alpha_start: 1.0,
            alpha_min,
            decay_steps: Self::DEFAULT_DECAY_STEPS,
        }
    }

    pub fn alpha(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.alpha_min;
        }
        let frac = step as f64 / self.decay_steps as f64;
        (self.alpha_start + (self.alpha_min - self.alpha_start) * frac).max(self.alpha_min)
    }
}

/// `c + γ Σ_a' π(a'|s') Q(s', a')`, with no bootstrap on termination.
pub fn q_target(trans: &Transition, gvf_index: usize, gvf: &GvfSpec, q: &ValueTable, features: &FeatureMap) -> f64 {
    let c = trans.cumulant_values[gvf_index];
    if trans.terminated {
        return c;
    }
    let next = features.feature(trans.next_state);
    c + gvf.gamma * expect(gvf.policy.row(trans.next_state), q.row(gvf_index, next))
}

/// `δ_Q² + γ² Σ_a' π(a'|s') M(s', a')` with `δ_Q` taken against the
/// current `q` entry for `(s, a)`.
pub fn m_target(
    trans: &Transition,
    gvf_index: usize,
    gvf: &GvfSpec,
    q: &ValueTable,
    m: &VarianceTable,
    features: &FeatureMap,
) -> f64 {
    let delta =
        q_target(trans, gvf_index, gvf, q, features) - q.get(gvf_index, features.feature(trans.state), trans.action);
    m_target_from_delta(trans, gvf_index, gvf, delta, m, features)
}

fn m_target_from_delta(
    trans: &Transition,
    gvf_index: usize,
    gvf: &GvfSpec,
    delta: f64,
    m: &VarianceTable,
    features: &FeatureMap,
) -> f64 {
    if trans.terminated {
        return delta * delta;
    }
    let next = features.feature(trans.next_state);
    delta * delta + gvf.gamma * gvf.gamma * expect(gvf.policy.row(trans.next_state), m.row(gvf_index, next))
}

#[inline]
pub fn td_update(entry: f64, target: f64, alpha: f64) -> f64 {
    entry + alpha * (target - entry)
}

/// Variance-table form of [`td_update`]: the result never goes below zero.
#[inline]
pub fn td_update_nonneg(entry: f64, target: f64, alpha: f64) -> f64 {
    td_update(entry, target, alpha).max(0.0)
}

#[inline]
fn expect(probs: &[f64], values: &[f64]) -> f64 {
    probs.iter().zip(values).map(|(p, v)| p * v).sum()
}

/// The next action actually drawn by the behavior at `s'`, needed by the
/// importance-weighted targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NextAction {
    pub action: ActionId,
    /// Probability with which the behavior drew `action`.
    pub behavior_prob: f64,
}

/// `(Q target, δ_Q, M target)` for the importance-weighted update:
/// `c + γ ρ' Q(s',a')` and `δ_Q² + γ² ρ'² M(s',a')`.
pub fn is_corrected_targets(
    trans: &Transition,
    gvf_index: usize,
    gvf: &GvfSpec,
    next: Option<NextAction>,
    rho_cap: f64,
    q: &ValueTable,
    m: Option<&VarianceTable>,
    features: &FeatureMap,
) -> (f64, f64, f64) {
    let c = trans.cumulant_values[gvf_index];
    let f = features.feature(trans.state);
    let (q_tar, m_boot) = match (trans.terminated, next) {
        (true, _) => (c, 0.0),
        (false, None) => panic!("importance-weighted update needs the next action"),
        (false, Some(na)) => {
            let pi = gvf.policy.prob(trans.next_state, na.action);
            let rho = is_ratio(pi, na.behavior_prob, rho_cap);
            let nf = features.feature(trans.next_state);
            let m_next = m.map_or(0.0, |m| m.get(gvf_index, nf, na.action));
            (
                c + gvf.gamma * rho * q.get(gvf_index, nf, na.action),
                gvf.gamma * gvf.gamma * rho * rho * m_next,
            )
        }
    };
    let delta = q_tar - q.get(gvf_index, f, trans.action);
    (q_tar, delta, delta * delta + m_boot)
}

/// In-place importance-weighted Q update for one GVF.
pub fn is_corrected_q_update(
    trans: &Transition,
    gvf_index: usize,
    gvf: &GvfSpec,
    next: Option<NextAction>,
    rho_cap: f64,
    q: &mut ValueTable,
    features: &FeatureMap,
    alpha: f64,
) {
    let (q_tar, _, _) = is_corrected_targets(trans, gvf_index, gvf, next, rho_cap, q, None, features);
    let f = features.feature(trans.state);
    let old = q.get(gvf_index, f, trans.action);
    q.set(gvf_index, f, trans.action, td_update(old, q_tar, alpha));
}

/// In-place importance-weighted M update for one GVF, using `q` for `δ_Q`.
pub fn is_corrected_m_update(
    trans: &Transition,
    gvf_index: usize,
    gvf: &GvfSpec,
    next: Option<NextAction>,
    rho_cap: f64,
    q: &ValueTable,
    m: &mut VarianceTable,
    features: &FeatureMap,
    alpha: f64,
) {
    let (_, _, m_tar) = is_corrected_targets(trans, gvf_index, gvf, next, rho_cap, q, Some(m), features);
    let f = features.feature(trans.state);
    let old = m.get(gvf_index, f, trans.action);
    m.set(gvf_index, f, trans.action, td_update_nonneg(old, m_tar, alpha));
}

/// `V(s) = Σ_a π(a|s) Q(s,a)` for every state.
pub fn state_value(q: &ValueTable, policy: &TargetPolicy, gvf_index: usize, features: &FeatureMap) -> Vec<f64> {
    (0..policy.n_states())
        .map(|s| expect(policy.row(s), q.row(gvf_index, features.feature(s))))
        .collect()
}

/// `M(s) = Σ_a μ(a|s) ρ(s,a)² M(s,a)` with ρ clipped at the behavior's cap.
pub fn state_variance(
    m: &VarianceTable,
    behavior: &BehaviorPolicy,
    policy: &TargetPolicy,
    gvf_index: usize,
    features: &FeatureMap,
) -> Vec<f64> {
    (0..policy.n_states())
        .map(|s| {
            let row = m.row(gvf_index, features.feature(s));
            behavior
                .row(s)
                .iter()
                .zip(policy.row(s))
                .zip(row)
                .map(|((&mu, &pi), &mv)| {
                    if pi == 0.0 {
                        return 0.0;
                    }
                    let rho = is_ratio(pi, mu, behavior.rho_cap);
                    mu * rho * rho * mv
                })
                .sum()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    #[default]
    ExpectedSarsa,
    IsCorrected,
}

/// Which Q entry `δ_Q` in the M target is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSource {
    #[default]
    PreUpdate,
    PostUpdate,
}

/// Q (and optionally M) tables for every GVF of a bundle.
#[derive(Clone, Debug)]
pub struct GvfLearner {
    pub features: FeatureMap,
    pub q: ValueTable,
    pub m: Option<VarianceTable>,
    pub mode: UpdateMode,
    pub delta_source: DeltaSource,
    pub rho_cap: f64,
}

impl GvfLearner {
    pub fn new(
        n_gvfs: usize,
        n_actions: usize,
        features: FeatureMap,
        m_init: Option<f64>,
        mode: UpdateMode,
        rho_cap: f64,
    ) -> Result<Self> {
        let nf = features.n_features();
        let m = m_init
            .map(|init| VarianceTable::new(n_gvfs, nf, n_actions, init))
            .transpose()?;
        Ok(Self {
            q: ValueTable::zeros(n_gvfs, nf, n_actions),
            m,
            features,
            mode,
            delta_source: DeltaSource::PreUpdate,
            rho_cap,
        })
    }

    /// Applies one transition to every GVF's tables.
    pub fn update(
        &mut self,
        trans: &Transition,
        bundle: &GvfBundle,
        next: Option<NextAction>,
        alpha_q: f64,
        alpha_m: f64,
    ) {
        let f = self.features.feature(trans.state);
        for (i, gvf) in bundle.gvfs.iter().enumerate() {
            let q_old = self.q.get(i, f, trans.action);
            let (q_tar, m_tar_pre) = match self.mode {
                UpdateMode::ExpectedSarsa => {
                    let q_tar = q_target(trans, i, gvf, &self.q, &self.features);
                    let m_tar = self
                        .m
                        .as_ref()
                        .map(|m| m_target_from_delta(trans, i, gvf, q_tar - q_old, m, &self.features));
                    (q_tar, m_tar)
                }
                UpdateMode::IsCorrected => {
                    let (q_tar, _, m_tar) = is_corrected_targets(
                        trans,
                        i,
                        gvf,
                        next,
                        self.rho_cap,
                        &self.q,
                        self.m.as_ref(),
                        &self.features,
                    );
                    (q_tar, self.m.as_ref().map(|_| m_tar))
                }
            };
            let q_new = td_update(q_old, q_tar, alpha_q);
            self.q.set(i, f, trans.action, q_new);

            if let Some(m) = self.m.as_mut() {
                let m_tar = match self.delta_source {
                    DeltaSource::PreUpdate => m_tar_pre.expect("M target computed with M present"),
                    DeltaSource::PostUpdate => {
                        let delta = q_tar - q_new;
                        let boot = m_tar_pre.expect("M target computed with M present") - (q_tar - q_old).powi(2);
                        delta * delta + boot
                    }
                };
                let old = m.get(i, f, trans.action);
                m.set(i, f, trans.action, td_update_nonneg(old, m_tar, alpha_m));
            }
        }
    }

    pub fn state_values(&self, bundle: &GvfBundle) -> Vec<Vec<f64>> {
        bundle
            .gvfs
            .iter()
            .enumerate()
            .map(|(i, g)| state_value(&self.q, &g.policy, i, &self.features))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gvf::TargetPolicy;
    use crate::policy::PolicyTable;
    use proptest::prelude::*;

    fn gvf(rows: Vec<Vec<f64>>, gamma: f64) -> GvfSpec {
        GvfSpec {
            policy: TargetPolicy::from_rows(rows).unwrap(),
            cumulant: 0,
            gamma,
        }
    }

    fn trans(c: f64, terminated: bool) -> Transition {
        Transition::new(0, 0, 1, vec![c], terminated, false)
    }

    #[test]
    fn q_target_examples() {
        let g = gvf(vec![vec![0.5, 0.5], vec![0.5, 0.5]], 0.5);
        let fm = FeatureMap::identity(2);
        let mut q = ValueTable::zeros(1, 2, 2);
        assert_eq!(q_target(&trans(1.0, false), 0, &g, &q, &fm), 1.0);
        q.set(0, 1, 0, 7.0);
        assert_eq!(q_target(&trans(5.0, true), 0, &g, &q, &fm), 5.0);
        q.set(0, 1, 0, 2.0);
        q.set(0, 1, 1, 4.0);
        assert_eq!(q_target(&trans(0.0, false), 0, &g, &q, &fm), 1.5);
    }

    #[test]
    fn truncation_still_bootstraps() {
        let g = gvf(vec![vec![1.0, 0.0], vec![1.0, 0.0]], 0.5);
        let fm = FeatureMap::identity(2);
        let mut q = ValueTable::zeros(1, 2, 2);
        q.set(0, 1, 0, 4.0);
        let t = Transition::new(0, 0, 1, vec![1.0], false, true);
        assert_eq!(q_target(&t, 0, &g, &q, &fm), 3.0);
    }

    #[test]
    fn m_target_examples() {
        let fm = FeatureMap::identity(2);
        // δ = 1, M ≡ 0.
        let g = gvf(vec![vec![1.0, 0.0], vec![1.0, 0.0]], 0.5);
        let q = ValueTable::zeros(1, 2, 2);
        let mut m = VarianceTable::new(1, 2, 2, 1.0).unwrap();
        m.set(0, 1, 0, 0.0);
        m.set(0, 1, 1, 0.0);
        assert_eq!(m_target(&trans(1.0, false), 0, &g, &q, &m, &fm), 1.0);
        // δ = 0 at termination.
        assert_eq!(m_target(&trans(0.0, true), 0, &g, &q, &m, &fm), 0.0);
        // δ = 2, γ = 0.5, expected next M = 4 → 4 + 0.25·4.
        m.set(0, 1, 0, 4.0);
        assert_eq!(m_target(&trans(2.0, false), 0, &g, &q, &m, &fm), 5.0);
    }

    #[test]
    fn td_update_examples() {
        assert_eq!(td_update(0.0, 1.0, 0.5), 0.5);
        assert_eq!(td_update(3.0, 3.0, 0.7), 3.0);
        assert_eq!(td_update(1.0, 1e9, 1.0), 1e9);
        assert_eq!(td_update_nonneg(1.0, -5.0, 0.5), 0.0);
    }

    #[test]
    fn lr_schedule() {
        let lr = LrSchedule::decaying_to(0.1);
        assert_eq!(lr.alpha(0), 1.0);
        assert!((lr.alpha(250_000) - 0.55).abs() < 1e-12);
        assert_eq!(lr.alpha(500_000), 0.1);
        assert_eq!(lr.alpha(10_000_000), 0.1);
        let mut prev = f64::INFINITY;
        for t in (0..600_000).step_by(997) {
            let a = lr.alpha(t);
            assert!(a <= prev && a >= 0.1);
            prev = a;
        }
    }

    #[test]
    fn state_value_examples() {
        let fm = FeatureMap::identity(1);
        let mut q = ValueTable::zeros(1, 1, 2);
        q.set(0, 0, 0, 1.0);
        q.set(0, 0, 1, 3.0);
        let one_hot = TargetPolicy::from_rows(vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(state_value(&q, &one_hot, 0, &fm), vec![3.0]);
        let uniform = TargetPolicy::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        assert_eq!(state_value(&q, &uniform, 0, &fm), vec![2.0]);
        assert_eq!(state_value(&ValueTable::zeros(1, 1, 2), &uniform, 0, &fm), vec![0.0]);
    }

    #[test]
    fn state_variance_examples() {
        let fm = FeatureMap::identity(1);
        let mut m = VarianceTable::new(1, 1, 2, 1.0).unwrap();
        m.set(0, 0, 0, 8.0);
        m.set(0, 0, 1, 3.0);
        let pi = TargetPolicy::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let mu = BehaviorPolicy::new(PolicyTable::uniform(1, 2), 1e-3, 10.0).unwrap();
        assert_eq!(state_variance(&m, &mu, &pi, 0, &fm), vec![16.0]);

        let pi = TargetPolicy::from_rows(vec![vec![0.3, 0.7]]).unwrap();
        let mu = BehaviorPolicy::new(PolicyTable::from_rows(vec![vec![0.3, 0.7]]).unwrap(), 1e-3, 10.0).unwrap();
        let v = state_variance(&m, &mu, &pi, 0, &fm)[0];
        assert!((v - (0.3 * 8.0 + 0.7 * 3.0)).abs() < 1e-12);

        m.set(0, 0, 0, 0.0);
        m.set(0, 0, 1, 0.0);
        assert_eq!(state_variance(&m, &mu, &pi, 0, &fm), vec![0.0]);
    }

    #[test]
    fn is_update_collapses_to_sarsa_on_policy() {
        let g = gvf(vec![vec![0.4, 0.6], vec![0.4, 0.6]], 0.9);
        let fm = FeatureMap::identity(2);
        let mut q = ValueTable::zeros(1, 2, 2);
        q.set(0, 1, 1, 2.0);
        let t = trans(1.0, false);
        let next = NextAction {
            action: 1,
            behavior_prob: 0.6,
        };
        is_corrected_q_update(&t, 0, &g, Some(next), 10.0, &mut q, &fm, 1.0);
        // SARSA with sampled a' = 1: 1 + 0.9·2.
        assert!((q.get(0, 0, 0) - 2.8).abs() < 1e-12);
    }

    #[test]
    fn is_update_clips_rho() {
        let g = gvf(vec![vec![0.9, 0.1], vec![0.9, 0.1]], 0.5);
        let fm = FeatureMap::identity(2);
        let mut q = ValueTable::zeros(1, 2, 2);
        q.set(0, 1, 0, 1.0);
        let mut m = VarianceTable::new(1, 2, 2, 1.0).unwrap();
        let t = trans(0.0, false);
        let next = NextAction {
            action: 0,
            behavior_prob: 0.05,
        };
        // ρ = 18 clipped to 10.
        let (q_tar, delta, m_tar) = is_corrected_targets(&t, 0, &g, Some(next), 10.0, &q, Some(&m), &fm);
        assert_eq!(q_tar, 5.0);
        assert_eq!(delta, 5.0);
        assert_eq!(m_tar, 25.0 + 0.25 * 100.0 * 1.0);
        is_corrected_m_update(&t, 0, &g, Some(next), 10.0, &q, &mut m, &fm, 1.0);
        assert_eq!(m.get(0, 0, 0), 50.0);
    }

    #[test]
    fn variance_table_rejects_non_positive_init() {
        assert!(VarianceTable::new(1, 1, 1, 0.0).is_err());
        assert!(VarianceTable::new(1, 1, 1, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn variance_entries_stay_non_negative(
            steps in proptest::collection::vec((0usize..3, 0usize..2, 0usize..3, -50.0f64..50.0, any::<bool>()), 1..200),
            alpha_m in 0.01f64..1.0,
        ) {
            let g = gvf(vec![vec![0.3, 0.7]; 3], 0.95);
            let bundle = GvfBundle::new(vec![g], vec![crate::gvf::Cumulant::constant(0.0, [])]).unwrap();
            let mut learner = GvfLearner::new(1, 2, FeatureMap::identity(3), Some(1.0), UpdateMode::ExpectedSarsa, 10.0).unwrap();
            for (s, a, s2, c, term) in steps {
                let t = Transition::new(s, a, s2, vec![c], term, false);
                learner.update(&t, &bundle, None, 0.5, alpha_m);
                let m = learner.m.as_ref().unwrap();
                prop_assert!(m.values().iter().all(|v| *v >= 0.0 && v.is_finite()));
                prop_assert!(learner.q.values().iter().all(|v| v.is_finite()));
            }
        }
    }
}
