//! Cumulant processes, target policies and GVF bundles.

use std::collections::BTreeSet;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::StateId;
use crate::error::{Error, Result};
use crate::policy::{PolicyTable, StochasticPolicy};

/// Initial value of every drifter walk.
pub const DRIFT_START: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CumulantKind {
    Constant,
    Distractor,
    Drifter,
}

/// When a drifter's random walk advances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftClock {
    /// One increment each time an active cell is sampled.
    #[default]
    OnVisit,
    /// One increment per environment step, driven by [`Cumulant::tick`].
    EveryStep,
}

/// A scalar signal that is zero outside its active cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Cumulant {
    pub kind: CumulantKind,
    pub mean: f64,
    pub sigma: f64,
    pub drift_state: f64,
    pub drift_clock: DriftClock,
    pub active_cells: BTreeSet<StateId>,
}

impl Cumulant {
    pub fn constant(value: f64, active_cells: impl IntoIterator<Item = StateId>) -> Self {
        Self::new(CumulantKind::Constant, value, 0.0, active_cells)
    }

    pub fn distractor(mean: f64, sigma: f64, active_cells: impl IntoIterator<Item = StateId>) -> Self {
        Self::new(CumulantKind::Distractor, mean, sigma, active_cells)
    }

    pub fn drifter(mean: f64, sigma: f64, active_cells: impl IntoIterator<Item = StateId>) -> Self {
        Self::new(CumulantKind::Drifter, mean, sigma, active_cells)
    }

    fn new(kind: CumulantKind, mean: f64, sigma: f64, active_cells: impl IntoIterator<Item = StateId>) -> Self {
        assert!(sigma >= 0.0, "cumulant sigma must be non-negative");
        Self {
            kind,
            mean,
            sigma,
            drift_state: DRIFT_START,
            drift_clock: DriftClock::OnVisit,
            active_cells: active_cells.into_iter().collect(),
        }
    }

    pub fn with_drift_clock(mut self, clock: DriftClock) -> Self {
        self.drift_clock = clock;
        self
    }

    pub fn is_active(&self, state: StateId) -> bool {
        self.active_cells.contains(&state)
    }

    /// Draws the signal observed at `state`.
    pub fn sample<R: Rng + ?Sized>(&mut self, state: StateId, rng: &mut R) -> f64 {
        if !self.is_active(state) {
            return 0.0;
        }
        match self.kind {
            CumulantKind::Constant => self.mean,
            CumulantKind::Distractor => self.mean + self.sigma * rng.sample::<f64, _>(StandardNormal),
            CumulantKind::Drifter => {
                if self.drift_clock == DriftClock::OnVisit {
                    self.advance(rng);
                }
                self.drift_state
            }
        }
    }

    /// Advances a per-step drifter. No-op for every other kind or clock.
    pub fn tick<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.kind == CumulantKind::Drifter && self.drift_clock == DriftClock::EveryStep {
            self.advance(rng);
        }
    }

    fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.drift_state += self.mean + self.sigma * rng.sample::<f64, _>(StandardNormal);
    }

    /// Expected signal at `state`; drifters report their current walk value.
    pub fn expectation(&self, state: StateId) -> f64 {
        if !self.is_active(state) {
            return 0.0;
        }
        match self.kind {
            CumulantKind::Constant | CumulantKind::Distractor => self.mean,
            CumulantKind::Drifter => self.drift_state,
        }
    }

    /// Per-sample noise variance at `state` as seen by a frozen snapshot.
    pub fn noise_variance(&self, state: StateId) -> f64 {
        match self.kind {
            CumulantKind::Distractor if self.is_active(state) => self.sigma * self.sigma,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetPolicy(PolicyTable);

impl TargetPolicy {
    pub fn new(table: PolicyTable) -> Self {
        Self(table)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        PolicyTable::from_rows(rows).map(Self)
    }

    pub fn replicated(n_states: usize, row: &[f64]) -> Result<Self> {
        PolicyTable::replicated(n_states, row).map(Self)
    }

    pub fn table(&self) -> &PolicyTable {
        &self.0
    }
}

impl StochasticPolicy for TargetPolicy {
    fn n_states(&self) -> usize {
        self.0.n_states()
    }
    fn n_actions(&self) -> usize {
        self.0.n_actions()
    }
    fn row(&self, state: usize) -> &[f64] {
        self.0.row(state)
    }
}

/// One prediction question: follow `policy`, accumulate cumulant
/// `cumulant` (an index into the bundle's cumulant list), discount `gamma`.
#[derive(Clone, Debug)]
pub struct GvfSpec {
    pub policy: TargetPolicy,
    pub cumulant: usize,
    pub gamma: f64,
}

/// GVFs evaluated together from one behavior stream. Several GVFs may
/// read the same cumulant process.
#[derive(Clone, Debug)]
pub struct GvfBundle {
    pub gvfs: Vec<GvfSpec>,
    pub cumulants: Vec<Cumulant>,
    scratch: Vec<f64>,
}

impl GvfBundle {
    pub fn new(gvfs: Vec<GvfSpec>, cumulants: Vec<Cumulant>) -> Result<Self> {
        let first = gvfs
            .first()
            .ok_or_else(|| Error::InvalidConfig("a bundle needs at least one GVF".into()))?;
        let (gamma, n_states, n_actions) = (first.gamma, first.policy.n_states(), first.policy.n_actions());
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0, 1)")));
        }
        for g in &gvfs {
            if g.gamma != gamma {
                return Err(Error::InvalidConfig("all GVFs in a bundle share one discount".into()));
            }
            if g.cumulant >= cumulants.len() {
                return Err(Error::InvalidConfig(format!(
                    "GVF refers to missing cumulant {}",
                    g.cumulant
                )));
            }
            if g.policy.n_states() != n_states || g.policy.n_actions() != n_actions {
                return Err(Error::DimensionMismatch {
                    context: "target policy shape",
                    expected: n_states * n_actions,
                    actual: g.policy.n_states() * g.policy.n_actions(),
                });
            }
        }
        Ok(Self {
            gvfs,
            cumulants,
            scratch: Vec::new(),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gvfs[0].gamma
    }

    pub fn len(&self) -> usize {
        self.gvfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gvfs.is_empty()
    }

    pub fn policies(&self) -> impl Iterator<Item = &TargetPolicy> {
        self.gvfs.iter().map(|g| &g.policy)
    }

    pub fn cumulant_of(&self, gvf: usize) -> &Cumulant {
        &self.cumulants[self.gvfs[gvf].cumulant]
    }

    /// Samples every cumulant process once at `state` and returns the
    /// per-GVF values. Drifters with a per-step clock are ticked first.
    pub fn observe<R: Rng + ?Sized>(&mut self, state: StateId, rng: &mut R, out: &mut Vec<f64>) {
        self.scratch.clear();
        for c in self.cumulants.iter_mut() {
            c.tick(rng);
            self.scratch.push(c.sample(state, rng));
        }
        out.clear();
        out.extend(self.gvfs.iter().map(|g| self.scratch[g.cumulant]));
    }
}

/// Named families of fixed target policies used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySet {
    /// Two mildly biased policies shared by most settings.
    TwoPolicy,
    /// Policies leaning toward the top-left and top-right corners.
    SemiGreedy,
    /// North, East, South, West with 0.7 on the named direction.
    Cardinal,
}

impl FromStr for PolicySet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-policy" | "two_policy" => Ok(Self::TwoPolicy),
            "semi-greedy" | "semi_greedy" => Ok(Self::SemiGreedy),
            "cardinal" => Ok(Self::Cardinal),
            other => Err(Error::UnknownSetting(other.to_string())),
        }
    }
}

impl PolicySet {
    /// Action rows in `[L, R, U, D]` order.
    pub fn rows(self) -> Vec<[f64; 4]> {
        match self {
            Self::TwoPolicy => vec![[0.175, 0.175, 0.25, 0.4], [0.25, 0.15, 0.25, 0.35]],
            Self::SemiGreedy => vec![[0.4, 0.1, 0.4, 0.1], [0.1, 0.4, 0.4, 0.1]],
            Self::Cardinal => vec![
                [0.1, 0.1, 0.7, 0.1],
                [0.1, 0.7, 0.1, 0.1],
                [0.1, 0.1, 0.1, 0.7],
                [0.7, 0.1, 0.1, 0.1],
            ],
        }
    }
}

/// State-independent target policies of a named family on `n_states` states.
pub fn make_paper_policies(setting: &str, n_states: usize) -> Result<Vec<TargetPolicy>> {
    let set: PolicySet = setting.parse()?;
    set.rows()
        .iter()
        .map(|row| TargetPolicy::replicated(n_states, row))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_cumulant() {
        let mut c = Cumulant::constant(75.0, [3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(c.sample(3, &mut rng), 75.0);
        assert_eq!(c.sample(2, &mut rng), 0.0);
        assert_eq!(c.expectation(3), 75.0);
    }

    #[test]
    fn distractor_sample_mean() {
        let mut c = Cumulant::distractor(100.0, 5.0, [0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mean = (0..n).map(|_| c.sample(0, &mut rng)).sum::<f64>() / n as f64;
        // 6·σ/√n ≈ 0.095
        assert!((mean - 100.0).abs() < 0.1, "mean = {mean}");
        assert_eq!(Cumulant::distractor(50.0, 5.0, [0]).expectation(0), 50.0);
    }

    #[test]
    fn inactive_cells_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mut c in [
            Cumulant::constant(1.0, [0]),
            Cumulant::distractor(1.0, 1.0, [0]),
            Cumulant::drifter(0.0, 1.0, [0]),
        ] {
            assert_eq!(c.sample(1, &mut rng), 0.0);
            assert_eq!(c.expectation(1), 0.0);
        }
    }

    #[test]
    fn zero_variance_drifter_stays_at_start() {
        let mut c = Cumulant::drifter(0.0, 0.0, [0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(c.sample(0, &mut rng), 100.0);
        }
    }

    #[test]
    fn drifter_forced_walk() {
        let mut c = Cumulant::drifter(2.0, 0.0, [0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(c.sample(0, &mut rng), 102.0);
        assert_eq!(c.expectation(0), 102.0);
        // Visiting an inactive cell never advances the walk.
        c.sample(5, &mut rng);
        assert_eq!(c.drift_state, 102.0);
    }

    #[test]
    fn drifter_per_step_clock() {
        let mut c = Cumulant::drifter(1.0, 0.0, [0]).with_drift_clock(DriftClock::EveryStep);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        c.tick(&mut rng);
        c.tick(&mut rng);
        assert_eq!(c.sample(0, &mut rng), 102.0);
        assert_eq!(c.sample(0, &mut rng), 102.0);
    }

    #[test]
    fn drifter_is_a_martingale() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let walks = 20_000;
        let steps = 25;
        let mut total = 0.0;
        for _ in 0..walks {
            let mut c = Cumulant::drifter(0.0, 0.5, [0]);
            for _ in 0..steps {
                c.sample(0, &mut rng);
            }
            total += c.drift_state;
        }
        let mean = total / walks as f64;
        let se = 0.5 * (steps as f64).sqrt() / (walks as f64).sqrt();
        assert!((mean - 100.0).abs() < 4.0 * se, "mean = {mean}");
    }

    #[test]
    fn named_policies() {
        let two = make_paper_policies("two-policy", 3).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].row(2), &[0.175, 0.175, 0.25, 0.4]);
        assert_eq!(two[1].row(0), &[0.25, 0.15, 0.25, 0.35]);
        let sg = make_paper_policies("semi-greedy", 1).unwrap();
        assert_eq!(sg[0].row(0), &[0.4, 0.1, 0.4, 0.1]);
        assert_eq!(sg[1].row(0), &[0.1, 0.4, 0.4, 0.1]);
        let card = make_paper_policies("cardinal", 1).unwrap();
        assert_eq!(card.len(), 4);
        assert_eq!(card[0].row(0), &[0.1, 0.1, 0.7, 0.1]);
        assert_eq!(card[3].row(0), &[0.7, 0.1, 0.1, 0.1]);
        assert!(make_paper_policies("greedy", 1).is_err());
    }

    #[test]
    fn bundle_shares_cumulant_samples() {
        let policies = make_paper_policies("two-policy", 2).unwrap();
        let gvfs = policies
            .into_iter()
            .map(|policy| GvfSpec {
                policy,
                cumulant: 0,
                gamma: 0.9,
            })
            .collect();
        let mut bundle = GvfBundle::new(gvfs, vec![Cumulant::distractor(10.0, 3.0, [1])]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut out = Vec::new();
        bundle.observe(1, &mut rng, &mut out);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], out[1]);
        assert_ne!(out[0], 10.0);
    }

    #[test]
    fn bundle_validation() {
        let p = TargetPolicy::replicated(2, &[0.5, 0.5]).unwrap();
        let g = |gamma| GvfSpec {
            policy: p.clone(),
            cumulant: 0,
            gamma,
        };
        let c = || vec![Cumulant::constant(1.0, [0])];
        assert!(GvfBundle::new(vec![g(0.9), g(0.8)], c()).is_err());
        assert!(GvfBundle::new(vec![g(1.0)], c()).is_err());
        assert!(GvfBundle::new(vec![g(0.9)], vec![]).is_err());
        assert!(GvfBundle::new(vec![], c()).is_err());
    }
}
