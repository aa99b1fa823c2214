//! Variance-proportional behavior policy, importance ratios and ε mixing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gvf::TargetPolicy;
use crate::policy::{check_distribution, PolicyTable, StochasticPolicy};
use crate::td::{FeatureMap, VarianceTable};

pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-3;
pub const DEFAULT_RHO_CAP: f64 = 10.0;

/// Rows whose variance-weighted mass falls below this fall back to the
/// mixture of target policies.
pub const DEGENERATE_ROW: f64 = 1e-12;

/// The executed sampling distribution plus the safeguards applied to it.
#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorPolicy {
    table: PolicyTable,
    pub epsilon_floor: f64,
    pub rho_cap: f64,
}

impl BehaviorPolicy {
    pub fn new(table: PolicyTable, epsilon_floor: f64, rho_cap: f64) -> Result<Self> {
        if !(0.0..=1.0 / table.n_actions() as f64).contains(&epsilon_floor) {
            return Err(Error::InvalidProbability {
                name: "epsilon_floor",
                value: epsilon_floor,
            });
        }
        if !(rho_cap > 0.0) {
            return Err(Error::InvalidConfig(format!("rho_cap must be positive, got {rho_cap}")));
        }
        for s in 0..table.n_states() {
            check_distribution(table.row(s), &format!("behavior[{s}]"), 1e-9)?;
        }
        Ok(Self {
            table,
            epsilon_floor,
            rho_cap,
        })
    }

    pub fn table(&self) -> &PolicyTable {
        &self.table
    }

    /// Clipped importance ratio `π(a|s) / μ(a|s)`.
    pub fn rho(&self, pi: &TargetPolicy, state: usize, action: usize) -> f64 {
        is_ratio(pi.prob(state, action), self.prob(state, action), self.rho_cap)
    }
}

impl StochasticPolicy for BehaviorPolicy {
    fn n_states(&self) -> usize {
        self.table.n_states()
    }
    fn n_actions(&self) -> usize {
        self.table.n_actions()
    }
    fn row(&self, state: usize) -> &[f64] {
        self.table.row(state)
    }
}

/// `min(π/μ, cap)`; zero whenever `π = 0`.
///
/// # Panics
/// If `μ = 0` while `π > 0`.
#[inline]
pub fn is_ratio(pi: f64, mu: f64, rho_cap: f64) -> f64 {
    if pi == 0.0 {
        return 0.0;
    }
    assert!(
        mu > 0.0,
        "behavior gives zero probability to an action the target policy takes"
    );
    (pi / mu).min(rho_cap)
}

/// `ε_k = max(ε_min, ε_0 · decay^k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub eps_decay: f64,
    pub eps_min: f64,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self {
            eps0: 1.0,
            eps_decay: 0.99999,
            eps_min: 0.05,
        }
    }
}

impl EpsSchedule {
    pub fn epsilon(&self, step: u64) -> f64 {
        (self.eps0 * self.eps_decay.powf(step as f64)).max(self.eps_min)
    }
}

/// Raises every entry to at least `floor` and rescales the rest so the row
/// still sums to one. Entries pinned at the floor stay exactly there.
pub fn floor_row(row: &mut [f64], floor: f64) {
    if floor <= 0.0 {
        return;
    }
    let n = row.len();
    let mut pinned = vec![false; n];
    loop {
        let n_pinned = pinned.iter().filter(|p| **p).count();
        let free_mass: f64 = row.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(v, _)| *v).sum();
        let budget = 1.0 - floor * n_pinned as f64;
        let scale = if free_mass > 0.0 { budget / free_mass } else { 0.0 };
        let mut changed = false;
        for i in 0..n {
            if !pinned[i] && row[i] * scale < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            for i in 0..n {
                row[i] = if pinned[i] { floor } else { row[i] * scale };
            }
            return;
        }
    }
}

/// Per-state mixture `Σ_i π_i(a|s) / Σ_a' Σ_i π_i(a'|s)`, written into `out`.
pub fn mixture_row<'a>(policies: impl IntoIterator<Item = &'a TargetPolicy>, state: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for pi in policies {
        for (o, p) in out.iter_mut().zip(pi.row(state)) {
            *o += p;
        }
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
}

/// One state's row of the variance-proportional update:
/// `μ(a|s) ∝ sqrt(Σ_i π_i(a|s)² M_i(s,a))`, floored. Returns `false` when the
/// row was degenerate and the target mixture was used instead.
pub fn gvf_explorer_row(
    policies: &[TargetPolicy],
    variances: &VarianceTable,
    features: &FeatureMap,
    state: usize,
    epsilon_floor: f64,
    out: &mut [f64],
) -> bool {
    let f = features.feature(state);
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, pi) in policies.iter().enumerate() {
        let m = variances.row(i, f);
        for ((o, &p), &mv) in out.iter_mut().zip(pi.row(state)).zip(m) {
            *o += p * p * mv;
        }
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = o.sqrt();
        total += *o;
    }
    let regular = total >= DEGENERATE_ROW;
    if regular {
        out.iter_mut().for_each(|v| *v /= total);
    } else {
        mixture_row(policies, state, out);
    }
    floor_row(out, epsilon_floor);
    regular
}

/// Full-table form of [`gvf_explorer_row`] over every state.
pub fn gvf_explorer_update(
    policies: &[TargetPolicy],
    variances: &VarianceTable,
    features: &FeatureMap,
    n_states: usize,
    epsilon_floor: f64,
    rho_cap: f64,
) -> Result<BehaviorPolicy> {
    let n_actions = policies
        .first()
        .ok_or_else(|| Error::InvalidConfig("need at least one target policy".into()))?
        .n_actions();
    let mut flat = vec![0.0; n_states * n_actions];
    for (s, row) in flat.chunks_mut(n_actions).enumerate() {
        gvf_explorer_row(policies, variances, features, s, epsilon_floor, row);
    }
    BehaviorPolicy::new(
        PolicyTable::from_flat_unchecked(n_actions, flat),
        epsilon_floor,
        rho_cap,
    )
}

/// `𝔼_{a∼μ}[ρ(s,a)²]` per state (unclipped) and whether its maximum stays
/// below `1/γ²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExistenceMargin {
    pub per_state: Vec<f64>,
    pub bound: f64,
    pub exists: bool,
}

pub fn existence_margin<P: StochasticPolicy, M: StochasticPolicy>(pi: &P, mu: &M, gamma: f64) -> ExistenceMargin {
    margin_with(pi, mu, gamma, f64::INFINITY)
}

/// [`existence_margin`] with ρ clipped at `rho_cap`.
pub fn existence_margin_clipped<P: StochasticPolicy, M: StochasticPolicy>(
    pi: &P,
    mu: &M,
    gamma: f64,
    rho_cap: f64,
) -> ExistenceMargin {
    margin_with(pi, mu, gamma, rho_cap)
}

fn margin_with<P: StochasticPolicy, M: StochasticPolicy>(pi: &P, mu: &M, gamma: f64, cap: f64) -> ExistenceMargin {
    let per_state: Vec<f64> = (0..pi.n_states())
        .map(|s| {
            pi.row(s)
                .iter()
                .zip(mu.row(s))
                .map(|(&p, &m)| {
                    let rho = is_ratio(p, m, cap);
                    m * rho * rho
                })
                .sum()
        })
        .collect();
    let bound = if gamma == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (gamma * gamma)
    };
    let exists = per_state.iter().all(|&v| v < bound);
    ExistenceMargin {
        per_state,
        bound,
        exists,
    }
}

/// `(1 − ε) μ + ε · uniform`, keeping the behavior's safeguards.
pub fn epsilon_mix(mu: &BehaviorPolicy, eps: f64) -> Result<BehaviorPolicy> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidProbability {
            name: "eps",
            value: eps,
        });
    }
    let n_actions = mu.n_actions();
    let mut flat = mu.table.as_flat().to_vec();
    for row in flat.chunks_mut(n_actions) {
        epsilon_mix_row(row, eps);
    }
    BehaviorPolicy::new(
        PolicyTable::from_flat_unchecked(n_actions, flat),
        mu.epsilon_floor,
        mu.rho_cap,
    )
}

#[inline]
pub fn epsilon_mix_row(row: &mut [f64], eps: f64) {
    let u = eps / row.len() as f64;
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (1.0 - eps) * *v + u;
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pols(rows: &[&[f64]]) -> Vec<TargetPolicy> {
        rows.iter().map(|r| TargetPolicy::replicated(1, r).unwrap()).collect()
    }

    fn m_table(rows: &[&[f64]]) -> VarianceTable {
        let n_actions = rows[0].len();
        let mut m = VarianceTable::new(rows.len(), 1, n_actions, 1.0).unwrap();
        for (i, r) in rows.iter().enumerate() {
            for (a, v) in r.iter().enumerate() {
                m.set(i, 0, a, *v);
            }
        }
        m
    }

    fn explorer(policies: &[TargetPolicy], m: &VarianceTable, floor: f64) -> Vec<f64> {
        let mut out = vec![0.0; policies[0].n_actions()];
        gvf_explorer_row(policies, m, &FeatureMap::identity(1), 0, floor, &mut out);
        out
    }

    #[test]
    fn uniform_symmetry() {
        let out = explorer(&pols(&[&[0.25; 4]]), &m_table(&[&[3.0; 4]]), 0.0);
        for v in out {
            assert!((v - 0.25).abs() <= 1e-12);
        }
    }

    #[test]
    fn two_to_one_split() {
        let out = explorer(&pols(&[&[0.5, 0.5]]), &m_table(&[&[4.0, 1.0]]), 0.0);
        assert!((out[0] - 2.0 / 3.0).abs() <= 1e-12);
        assert!((out[1] - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn complementary_policies_split_evenly() {
        let out = explorer(
            &pols(&[&[1.0, 0.0], &[0.0, 1.0]]),
            &m_table(&[&[1.0, 0.0], &[0.0, 1.0]]),
            0.0,
        );
        assert!((out[0] - 0.5).abs() <= 1e-12);
        assert!((out[1] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_row_falls_back_to_mixture() {
        let policies = pols(&[&[0.2, 0.8], &[0.6, 0.4]]);
        let mut out = vec![0.0; 2];
        let regular = gvf_explorer_row(
            &policies,
            &m_table(&[&[0.0, 0.0], &[0.0, 0.0]]),
            &FeatureMap::identity(1),
            0,
            0.0,
            &mut out,
        );
        assert!(!regular);
        assert!((out[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn floor_pins_small_entries() {
        let mut row = [1.0, 0.0, 0.0, 0.0];
        floor_row(&mut row, 1e-3);
        assert_eq!(&row[1..], &[1e-3; 3]);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(is_ratio(0.3, 0.3, 10.0), 1.0);
        assert_eq!(is_ratio(0.9, 0.05, 10.0), 10.0);
        assert_eq!(is_ratio(0.0, 0.5, 10.0), 0.0);
        assert_eq!(is_ratio(0.0, 0.0, 10.0), 0.0);
    }

    #[test]
    #[should_panic]
    fn ratio_with_zero_behavior_mass_panics() {
        is_ratio(0.5, 0.0, 10.0);
    }

    #[test]
    fn existence_examples() {
        let pi = PolicyTable::from_rows(vec![vec![0.9, 0.1]]).unwrap();
        let on = existence_margin(&pi, &pi, 0.99);
        assert!((on.per_state[0] - 1.0).abs() < 1e-12);
        assert!(on.exists);
        assert!((on.bound - 1.0 / 0.9801).abs() < 1e-12);

        let mu = PolicyTable::from_rows(vec![vec![0.1, 0.9]]).unwrap();
        let off = existence_margin(&pi, &mu, 0.99);
        assert!((off.per_state[0] - (0.1 * 81.0 + 0.9 / 81.0)).abs() < 1e-12);
        assert!((off.per_state[0] - 8.111).abs() < 1e-3);
        assert!(!off.exists);

        assert!(existence_margin(&pi, &mu, 0.0).exists);
        assert!(existence_margin(&pi, &mu, 1e-3).exists);
    }

    #[test]
    fn epsilon_mix_examples() {
        let mu = BehaviorPolicy::new(PolicyTable::from_rows(vec![vec![1.0, 0.0]]).unwrap(), 0.0, 10.0).unwrap();
        assert_eq!(epsilon_mix(&mu, 0.0).unwrap(), mu);
        assert_eq!(epsilon_mix(&mu, 1.0).unwrap().row(0), &[0.5, 0.5]);
        assert_eq!(epsilon_mix(&mu, 0.5).unwrap().row(0), &[0.75, 0.25]);
        assert!(epsilon_mix(&mu, 1.5).is_err());
    }

    #[test]
    fn eps_schedule() {
        let e = EpsSchedule::default();
        assert_eq!(e.epsilon(0), 1.0);
        assert!((e.epsilon(100_000) - 0.99999f64.powi(100_000)).abs() < 1e-12);
        assert_eq!(e.epsilon(1_000_000), 0.05);
    }

    proptest! {
        #[test]
        fn explorer_rows_are_floored_distributions(
            n_gvfs in 1usize..4,
            seed_rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 3),
            m_vals in proptest::collection::vec(proptest::collection::vec(0.0f64..100.0, 4), 3),
            floor in 0.0f64..0.2,
            scale in 0.01f64..100.0,
        ) {
            let policies: Vec<TargetPolicy> = seed_rows[..n_gvfs].iter().map(|r| {
                let t: f64 = r.iter().sum::<f64>() + 1e-9;
                let row: Vec<f64> = r.iter().map(|v| (v + 1e-9 / 4.0) / t).collect();
                let s: f64 = row.iter().sum();
                TargetPolicy::replicated(1, &row.iter().map(|v| v / s).collect::<Vec<_>>()).unwrap()
            }).collect();
            let rows: Vec<&[f64]> = m_vals[..n_gvfs].iter().map(|r| r.as_slice()).collect();
            let m = m_table(&rows);
            let out = explorer(&policies, &m, floor);
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(out.iter().all(|&v| v >= floor - 1e-15));

            // Multiplying every M by the same constant leaves the row unchanged.
            let scaled: Vec<Vec<f64>> = m_vals[..n_gvfs].iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
            let scaled_rows: Vec<&[f64]> = scaled.iter().map(|r| r.as_slice()).collect();
            let out2 = explorer(&policies, &m_table(&scaled_rows), floor);
            for (a, b) in out.iter().zip(&out2) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn clipped_ratios_respect_cap(pi in 0.0f64..1.0, mu in 1e-6f64..1.0, cap in 0.1f64..50.0) {
            let r = is_ratio(pi, mu, cap);
            prop_assert!(r <= cap && r >= 0.0);
        }

        #[test]
        fn clipped_margin_is_bounded(p in 0.0f64..1.0, floor in 1e-4f64..0.25, cap in 1.0f64..20.0) {
            let pi = PolicyTable::from_rows(vec![vec![p, 1.0 - p]]).unwrap();
            let mut row = vec![1.0, 0.0];
            floor_row(&mut row, floor);
            let mu = PolicyTable::from_rows(vec![row]).unwrap();
            let m = existence_margin_clipped(&pi, &mu, 0.99, cap);
            prop_assert!(m.per_state[0] <= cap * cap + 1e-12);
        }
    }
}
