//! Exact ground truth: linear solves for values and return variances,
//! Monte-Carlo cross-checks, and exact behavior-policy iteration.
//!
//! Cumulants follow the simulator's convention: the signal is sampled at
//! the state entered by a transition. Terminal states carry zero value.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::behavior::gvf_explorer_update;
use crate::env::{StateId, TabularMdp};
use crate::error::{Error, Result};
use crate::gvf::{Cumulant, CumulantKind, GvfBundle, GvfSpec, TargetPolicy};
use crate::policy::{PolicyTable, StochasticPolicy};
use crate::td::{FeatureMap, VarianceTable};

/// Values, action values and (when they exist) variances for every GVF
/// of a bundle under one behavior policy.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub v_true: Vec<Vec<f64>>,
    /// Flat `[state × action]` per GVF.
    pub q_true: Vec<Vec<f64>>,
    /// Flat `[state × action]` per GVF; `None` where the variance does not exist.
    pub m_true: Vec<Option<Vec<f64>>>,
    pub exists: Vec<bool>,
}

/// `E[c(s') | s, a]` for every pair, zero from terminal states.
fn expected_cumulant(mdp: &TabularMdp, cumulant: &Cumulant) -> Vec<f64> {
    let na = mdp.n_actions();
    let mut out = vec![0.0; mdp.n_states() * na];
    for s in mdp.non_terminal_states() {
        for a in 0..na {
            out[s * na + a] = mdp.row(s, a).iter().map(|&(t, p)| p * cumulant.expectation(t)).sum();
        }
    }
    out
}

fn check_shapes<P: StochasticPolicy + ?Sized>(mdp: &TabularMdp, policy: &P) -> Result<()> {
    mdp.check_policy_shape(policy)
}

/// `I − γ P_π` with identity rows for terminal states, so that their
/// value is pinned at zero.
fn value_system(mdp: &TabularMdp, policy: &TargetPolicy, gamma: f64) -> Result<DMatrix<f64>> {
    let p = mdp.transition_matrix(policy)?;
    let n = mdp.n_states();
    let mut a = DMatrix::identity(n, n);
    for s in mdp.non_terminal_states() {
        for t in 0..n {
            a[(s, t)] -= gamma * p[(s, t)];
        }
    }
    Ok(a)
}

fn value_rhs(mdp: &TabularMdp, policy: &TargetPolicy, c_bar: &[f64]) -> DVector<f64> {
    let na = mdp.n_actions();
    DVector::from_fn(mdp.n_states(), |s, _| {
        if mdp.is_terminal(s) {
            0.0
        } else {
            policy
                .row(s)
                .iter()
                .zip(&c_bar[s * na..(s + 1) * na])
                .map(|(p, c)| p * c)
                .sum()
        }
    })
}

fn q_from_v(mdp: &TabularMdp, c_bar: &[f64], v: &[f64], gamma: f64) -> Vec<f64> {
    let na = mdp.n_actions();
    let mut q = vec![0.0; mdp.n_states() * na];
    for s in mdp.non_terminal_states() {
        for a in 0..na {
            let boot: f64 = mdp.row(s, a).iter().map(|&(t, p)| p * v[t]).sum();
            q[s * na + a] = c_bar[s * na + a] + gamma * boot;
        }
    }
    q
}

/// Solves `(I − γ P_π) V = c̄_π` and returns `(V, Q)` with `Q` flat `[state × action]`.
pub fn analytic_value(mdp: &TabularMdp, gvf: &GvfSpec, cumulant: &Cumulant) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&gvf.gamma) {
        return Err(Error::InvalidConfig(format!(
            "gamma must be in [0, 1), got {}",
            gvf.gamma
        )));
    }
    check_shapes(mdp, &gvf.policy)?;
    let c_bar = expected_cumulant(mdp, cumulant);
    let a = value_system(mdp, &gvf.policy, gvf.gamma)?;
    let v = a
        .lu()
        .solve(&value_rhs(mdp, &gvf.policy, &c_bar))
        .ok_or_else(|| Error::Singular("I − γP_π".into()))?;
    let v: Vec<f64> = v.iter().copied().collect();
    let q = q_from_v(mdp, &c_bar, &v, gvf.gamma);
    Ok((v, q))
}

/// Factorized value systems for a bundle. Re-solving after a drifter moved
/// only costs a triangular solve.
pub struct ValueOracle {
    factors: Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// Index into `factors` for every GVF; GVFs sharing a policy share a factor.
    factor_of: Vec<usize>,
}

impl ValueOracle {
    pub fn new(mdp: &TabularMdp, bundle: &GvfBundle) -> Result<Self> {
        let mut seen: Vec<&TargetPolicy> = Vec::new();
        let mut factors = Vec::new();
        let mut factor_of = Vec::with_capacity(bundle.len());
        for gvf in &bundle.gvfs {
            if let Some(idx) = seen.iter().position(|p| **p == gvf.policy) {
                factor_of.push(idx);
                continue;
            }
            check_shapes(mdp, &gvf.policy)?;
            factors.push(value_system(mdp, &gvf.policy, gvf.gamma)?.lu());
            seen.push(&gvf.policy);
            factor_of.push(factors.len() - 1);
        }
        Ok(Self { factors, factor_of })
    }

    /// State values of every GVF for the bundle's current cumulant snapshot.
    pub fn values(&self, mdp: &TabularMdp, bundle: &GvfBundle) -> Result<Vec<Vec<f64>>> {
        bundle
            .gvfs
            .iter()
            .enumerate()
            .map(|(i, gvf)| {
                let c_bar = expected_cumulant(mdp, bundle.cumulant_of(i));
                let v = self.factors[self.factor_of[i]]
                    .solve(&value_rhs(mdp, &gvf.policy, &c_bar))
                    .ok_or_else(|| Error::Singular("I − γP_π".into()))?;
                Ok(v.iter().copied().collect())
            })
            .collect()
    }
}

/// How a spectral-radius verdict was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralMethod {
    /// Maximum row sum below one.
    NormBound,
    /// Collatz–Wielandt bounds from power iteration.
    PowerBracket,
    /// Dense eigenvalue computation.
    Eigenvalues,
    /// Some action the target takes has zero behavior probability.
    Unsupported,
}

/// Bounds `lower ≤ sr(B) ≤ upper` for a non-negative matrix `B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralCheck {
    pub lower: f64,
    pub upper: f64,
    pub method: SpectralMethod,
}

impl SpectralCheck {
    pub fn below_one(&self) -> bool {
        self.upper < 1.0
    }
}

/// Non-negative sparse matrix stored as per-row `(column, value)` lists.
struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }
}

const POWER_ITERATIONS: usize = 3000;

/// Spectral radius bracket of a non-negative matrix, cheapest test first.
fn spectral_check(b: &SparseRows) -> SpectralCheck {
    let n = b.rows.len();
    if n == 0 {
        return SpectralCheck {
            lower: 0.0,
            upper: 0.0,
            method: SpectralMethod::NormBound,
        };
    }
    let sums: Vec<f64> = b.rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    let max_sum = sums.iter().copied().fold(0.0, f64::max);
    let min_sum = sums.iter().copied().fold(f64::INFINITY, f64::min);
    if max_sum < 1.0 {
        return SpectralCheck {
            lower: min_sum,
            upper: max_sum,
            method: SpectralMethod::NormBound,
        };
    }

    // Lower bound: plain power iteration, min ratio over the support of x.
    // Upper bound: iteration on B + I keeps x strictly positive, which the
    // max-ratio bound needs.
    let mut lower = min_sum;
    let mut upper = max_sum;
    let mut x = vec![1.0; n];
    let mut xs = vec![1.0; n];
    let mut y = vec![0.0; n];
    for _ in 0..POWER_ITERATIONS {
        b.mul(&x, &mut y);
        let mut lo = f64::INFINITY;
        for (xi, yi) in x.iter().zip(&y) {
            if *xi > 0.0 {
                lo = lo.min(yi / xi);
            }
        }
        if lo.is_finite() {
            lower = lower.max(lo);
        }
        let norm = y.iter().copied().fold(0.0, f64::max);
        if norm == 0.0 {
            // Nilpotent: every product eventually vanishes.
            return SpectralCheck {
                lower: 0.0,
                upper: 0.0,
                method: SpectralMethod::PowerBracket,
            };
        }
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / norm);

        b.mul(&xs, &mut y);
        let hi = xs.iter().zip(&y).map(|(xi, yi)| yi / xi).fold(0.0, f64::max);
        upper = upper.min(hi);
        let mut norm = 0.0f64;
        for (xi, yi) in xs.iter_mut().zip(&y) {
            *xi += yi;
            norm = norm.max(*xi);
        }
        xs.iter_mut().for_each(|v| *v /= norm);

        if upper < 1.0 || lower >= 1.0 {
            return SpectralCheck {
                lower,
                upper,
                method: SpectralMethod::PowerBracket,
            };
        }
    }
    let radius = b
        .to_dense()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    SpectralCheck {
        lower: radius,
        upper: radius,
        method: SpectralMethod::Eigenvalues,
    }
}

/// Spectral radius of a dense matrix from its eigenvalues.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

const UNSUPPORTED: SpectralCheck = SpectralCheck {
    lower: f64::INFINITY,
    upper: f64::INFINITY,
    method: SpectralMethod::Unsupported,
};

/// `γ² P̄_μ` over the non-terminal pairs `nt × A`, or `None` when μ gives
/// zero probability to an action π takes.
fn second_moment_matrix<M: StochasticPolicy + ?Sized>(
    mdp: &TabularMdp,
    gvf: &GvfSpec,
    mu: &M,
    nt: &[StateId],
) -> Option<SparseRows> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let g2 = gvf.gamma * gvf.gamma;
    let mut index = vec![usize::MAX; n];
    for (k, &s) in nt.iter().enumerate() {
        index[s] = k;
    }
    // π²/μ, which equals μρ² with unclipped ρ.
    let mut weight = vec![0.0; n * na];
    for &s in nt {
        for a in 0..na {
            let (p, m) = (gvf.policy.prob(s, a), mu.prob(s, a));
            if p > 0.0 {
                if m == 0.0 {
                    return None;
                }
                weight[s * na + a] = p * p / m;
            }
        }
    }
    let mut rows = Vec::with_capacity(nt.len() * na);
    for &s in nt {
        for a in 0..na {
            let mut row = Vec::new();
            for &(t, p) in mdp.row(s, a) {
                if mdp.is_terminal(t) {
                    continue;
                }
                for b in 0..na {
                    let w = weight[t * na + b];
                    if w > 0.0 {
                        row.push((index[t] * na + b, g2 * p * w));
                    }
                }
            }
            rows.push(row);
        }
    }
    Some(SparseRows { rows })
}

/// Whether `(I − γ² P̄_μ)` is invertible with a non-negative inverse, i.e.
/// whether the variance of `gvf` under `mu` exists, without solving for it.
pub fn variance_existence<M: StochasticPolicy + ?Sized>(
    mdp: &TabularMdp,
    gvf: &GvfSpec,
    mu: &M,
) -> Result<SpectralCheck> {
    check_shapes(mdp, &gvf.policy)?;
    check_shapes(mdp, mu)?;
    let nt: Vec<StateId> = mdp.non_terminal_states().collect();
    Ok(second_moment_matrix(mdp, gvf, mu, &nt).map_or(UNSUPPORTED, |b| spectral_check(&b)))
}

/// Result of the second-moment solve for one GVF.
#[derive(Clone, Debug)]
pub struct VarianceSolution {
    /// Flat `[state × action]`; `None` when the system is not invertible.
    pub m_true: Option<Vec<f64>>,
    pub exists: bool,
    pub check: SpectralCheck,
}

/// Solves `(I − γ² P̄_μ) M = c_μ` over non-terminal state-action pairs, with
/// `P̄_μ(s,a,s',a') = P(s'|s,a) μ(a'|s') ρ(s',a')²` (ρ unclipped) and
/// `c_μ(s,a) = Σ_s' P(s'|s,a) [(E c(s') + γV(s') − Q(s,a))² + σ²(s')]`.
///
/// `v_true` and `q_true` must be the exact values of `gvf`.
pub fn analytic_variance<M: StochasticPolicy + ?Sized>(
    mdp: &TabularMdp,
    gvf: &GvfSpec,
    cumulant: &Cumulant,
    v_true: &[f64],
    q_true: &[f64],
    mu: &M,
) -> Result<VarianceSolution> {
    check_shapes(mdp, &gvf.policy)?;
    check_shapes(mdp, mu)?;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    if v_true.len() != n || q_true.len() != n * na {
        return Err(Error::DimensionMismatch {
            context: "true values",
            expected: n * na,
            actual: q_true.len(),
        });
    }
    let nt: Vec<StateId> = mdp.non_terminal_states().collect();
    let Some(b) = second_moment_matrix(mdp, gvf, mu, &nt) else {
        return Ok(VarianceSolution {
            m_true: None,
            exists: false,
            check: UNSUPPORTED,
        });
    };
    let k = nt.len() * na;
    let mut c_mu = DVector::zeros(k);
    for (ks, &s) in nt.iter().enumerate() {
        for a in 0..na {
            c_mu[ks * na + a] = mdp
                .row(s, a)
                .iter()
                .map(|&(t, p)| {
                    let td = cumulant.expectation(t) + gvf.gamma * v_true[t] - q_true[s * na + a];
                    p * (td * td + cumulant.noise_variance(t))
                })
                .sum();
        }
    }
    let check = spectral_check(&b);
    if !check.below_one() {
        return Ok(VarianceSolution {
            m_true: None,
            exists: false,
            check,
        });
    }
    let system = DMatrix::identity(k, k) - b.to_dense();
    let sol = system
        .lu()
        .solve(&c_mu)
        .ok_or_else(|| Error::Singular("I − γ²P̄_μ".into()))?;
    let mut m = vec![0.0; n * na];
    for (ks, &s) in nt.iter().enumerate() {
        m[s * na..(s + 1) * na].copy_from_slice(&sol.as_slice()[ks * na..(ks + 1) * na]);
    }
    Ok(VarianceSolution {
        m_true: Some(m),
        exists: true,
        check,
    })
}

/// Values for every GVF plus variances under `mu`.
pub fn solve_bundle<M: StochasticPolicy + ?Sized>(
    mdp: &TabularMdp,
    bundle: &GvfBundle,
    mu: &M,
) -> Result<ExactSolution> {
    let mut sol = ExactSolution {
        v_true: Vec::new(),
        q_true: Vec::new(),
        m_true: Vec::new(),
        exists: Vec::new(),
    };
    for (i, gvf) in bundle.gvfs.iter().enumerate() {
        let cumulant = bundle.cumulant_of(i);
        let (v, q) = analytic_value(mdp, gvf, cumulant)?;
        let var = analytic_variance(mdp, gvf, cumulant, &v, &q, mu)?;
        sol.v_true.push(v);
        sol.q_true.push(q);
        sol.m_true.push(var.m_true);
        sol.exists.push(var.exists);
    }
    Ok(sol)
}

/// `Σ_a μ(a|s) ρ(s,a)² M(s,a)` averaged uniformly over non-terminal states.
pub fn mean_state_variance<M: StochasticPolicy + ?Sized>(
    mdp: &TabularMdp,
    pi: &TargetPolicy,
    mu: &M,
    m: &[f64],
) -> f64 {
    let na = mdp.n_actions();
    let nt: Vec<StateId> = mdp.non_terminal_states().collect();
    if nt.is_empty() {
        return 0.0;
    }
    let total: f64 = nt
        .iter()
        .map(|&s| {
            (0..na)
                .map(|a| {
                    let p = pi.prob(s, a);
                    if p == 0.0 {
                        0.0
                    } else {
                        p * p / mu.prob(s, a) * m[s * na + a]
                    }
                })
                .sum::<f64>()
        })
        .sum();
    total / nt.len() as f64
}

/// One evaluation step of exact behavior-policy iteration.
#[derive(Clone, Debug)]
pub struct IterationStep {
    pub mu: PolicyTable,
    pub per_gvf: Vec<f64>,
    pub total_variance: f64,
}

#[derive(Clone, Debug)]
pub struct PolicyIterationReport {
    pub steps: Vec<IterationStep>,
    /// Why the iteration stopped before `K` updates, if it did.
    pub halted: Option<String>,
}

/// Alternates exact variance evaluation with the variance-proportional
/// behavior update, `k` times. `floor` is the probability floor applied by
/// the update (zero reproduces the unmodified rule).
pub fn exact_policy_iteration(
    mdp: &TabularMdp,
    bundle: &GvfBundle,
    mu0: &PolicyTable,
    k: usize,
    floor: f64,
) -> Result<PolicyIterationReport> {
    check_shapes(mdp, mu0)?;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let values = bundle
        .gvfs
        .iter()
        .enumerate()
        .map(|(i, g)| analytic_value(mdp, g, bundle.cumulant_of(i)))
        .collect::<Result<Vec<_>>>()?;
    let policies: Vec<TargetPolicy> = bundle.policies().cloned().collect();
    let features = FeatureMap::identity(n);

    let mut report = PolicyIterationReport {
        steps: Vec::new(),
        halted: None,
    };
    let mut mu = mu0.clone();
    for iter in 0..=k {
        let mut per_gvf = Vec::with_capacity(bundle.len());
        let mut table = VarianceTable::new(bundle.len(), n, na, 1.0)?;
        for (i, gvf) in bundle.gvfs.iter().enumerate() {
            let (v, q) = &values[i];
            let var = analytic_variance(mdp, gvf, bundle.cumulant_of(i), v, q, &mu)?;
            let Some(m) = var.m_true else {
                report.halted = Some(format!(
                    "variance of GVF {i} does not exist at iteration {iter} (spectral bound {:?})",
                    var.check
                ));
                return Ok(report);
            };
            per_gvf.push(mean_state_variance(mdp, &gvf.policy, &mu, &m));
            for s in 0..n {
                for a in 0..na {
                    table.set(i, s, a, m[s * na + a]);
                }
            }
        }
        let total_variance = per_gvf.iter().sum();
        report.steps.push(IterationStep {
            mu: mu.clone(),
            per_gvf,
            total_variance,
        });
        if iter == k {
            break;
        }
        mu = gvf_explorer_update(&policies, &table, &features, n, floor, f64::INFINITY)?
            .table()
            .clone();
    }
    Ok(report)
}

/// Monte-Carlo settings. Rollouts stop at termination or once the largest
/// possible remaining discounted contribution falls below `tail_tolerance`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub n_episodes: usize,
    pub tail_tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub state: StateId,
    pub mean: f64,
    pub std_err: f64,
    pub n_episodes: usize,
}

impl McEstimate {
    /// Half-width of the normal-approximation interval at `z` standard errors.
    pub fn ci_halfwidth(&self, z: f64) -> f64 {
        z * self.std_err
    }
}

/// Frozen-snapshot draw used by the Monte-Carlo oracle: drifters do not move.
fn snapshot_sample<R: Rng + ?Sized>(c: &Cumulant, state: StateId, rng: &mut R) -> f64 {
    if !c.is_active(state) {
        return 0.0;
    }
    match c.kind {
        CumulantKind::Distractor => c.mean + c.sigma * rng.sample::<f64, _>(StandardNormal),
        _ => c.expectation(state),
    }
}

/// Mean discounted cumulant sum under the GVF's target policy from each
/// of `starts`, with its standard error.
pub fn mc_value<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    gvf: &GvfSpec,
    cumulant: &Cumulant,
    starts: &[StateId],
    config: &McConfig,
    rng: &mut R,
) -> Result<Vec<McEstimate>> {
    if config.n_episodes == 0 {
        return Err(Error::InvalidConfig("Monte-Carlo needs at least one episode".into()));
    }
    check_shapes(mdp, &gvf.policy)?;
    let peak = cumulant
        .active_cells
        .iter()
        .map(|&s| cumulant.expectation(s).abs() + 8.0 * cumulant.sigma)
        .fold(0.0, f64::max);
    let tail_scale = if gvf.gamma < 1.0 {
        peak / (1.0 - gvf.gamma)
    } else {
        f64::INFINITY
    };

    let mut out = Vec::with_capacity(starts.len());
    for &start in starts {
        let (mut mean, mut m2) = (0.0, 0.0);
        for ep in 0..config.n_episodes {
            let mut s = start;
            let mut ret = 0.0;
            let mut discount = 1.0;
            while !mdp.is_terminal(s) && discount * tail_scale >= config.tail_tolerance {
                let a = crate::policy::sample_index(gvf.policy.row(s), rng.random());
                let (next, _) = mdp.step(s, a, rng);
                ret += discount * snapshot_sample(cumulant, next, rng);
                discount *= gvf.gamma;
                s = next;
            }
            // Welford update.
            let delta = ret - mean;
            mean += delta / (ep + 1) as f64;
            m2 += delta * (ret - mean);
        }
        let n = config.n_episodes as f64;
        let std_err = if config.n_episodes > 1 {
            (m2 / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        out.push(McEstimate {
            state: start,
            mean,
            std_err,
            n_episodes: config.n_episodes,
        });
    }
    Ok(out)
}

/// Random small MDPs for property checks.
pub mod random {
    use super::*;

    /// A generated problem: MDP, GVFs on it and a strictly positive behavior.
    #[derive(Clone, Debug)]
    pub struct RandomInstance {
        pub mdp: TabularMdp,
        pub bundle: GvfBundle,
        pub mu0: PolicyTable,
    }

    fn random_row<R: Rng + ?Sized>(rng: &mut R, len: usize, sparsity: f64) -> Vec<f64> {
        loop {
            let mut row: Vec<f64> = (0..len)
                .map(|_| {
                    if rng.random::<f64>() < sparsity {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            let total: f64 = row.iter().sum();
            if total > 1e-3 {
                row.iter_mut().for_each(|v| *v /= total);
                // Absorb rounding into the largest entry so the row sums to 1.
                let (imax, _) = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
                let rest: f64 = row.iter().enumerate().filter(|(i, _)| *i != imax).map(|(_, v)| v).sum();
                row[imax] = 1.0 - rest;
                return row;
            }
        }
    }

    /// `2..=max_states` states (the last one terminal half of the time),
    /// 2–4 actions, 1–3 GVFs with distinct targets and noisy cumulants,
    /// γ in `[0.5, 0.95]`, and `μ_0` half-way between the target mixture
    /// and a random strictly positive policy.
    pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_states: usize) -> RandomInstance {
        let n = rng.random_range(2..=max_states.max(2));
        let na = rng.random_range(2..=4);
        let n_gvfs = rng.random_range(1..=3);
        let gamma = rng.random_range(0.5..0.95);
        let has_terminal = rng.random::<bool>();
        let terminal: Vec<bool> = (0..n).map(|s| has_terminal && s == n - 1).collect();

        let mut transition = vec![vec![vec![0.0; n]; na]; n];
        for s in 0..n {
            for a in 0..na {
                transition[s][a] = random_row(rng, n, 0.4);
            }
        }
        let mut start = vec![0.0; n];
        let n_start = if has_terminal { n - 1 } else { n };
        start[..n_start].iter_mut().for_each(|p| *p = 1.0 / n_start as f64);
        let rest: f64 = start[1..n_start].iter().sum();
        start[0] = 1.0 - rest;
        let mdp = TabularMdp::from_dense(&transition, terminal, start, 1000).expect("generated MDP is valid");

        let mut gvfs = Vec::with_capacity(n_gvfs);
        let mut cumulants = Vec::with_capacity(n_gvfs);
        for i in 0..n_gvfs {
            let rows = (0..n).map(|_| random_row(rng, na, 0.0)).collect();
            let policy = TargetPolicy::from_rows(rows).expect("generated policy is valid");
            let active: Vec<StateId> = (0..n).filter(|_| rng.random::<f64>() < 0.5).collect();
            let mean = rng.random_range(-5.0..5.0);
            let sigma = rng.random_range(0.0..2.0);
            cumulants.push(Cumulant::distractor(mean, sigma, active));
            gvfs.push(GvfSpec {
                policy,
                cumulant: i,
                gamma,
            });
        }
        let bundle = GvfBundle::new(gvfs, cumulants).expect("generated bundle is valid");

        let mut mix = vec![0.0; na];
        let mu_rows = (0..n)
            .map(|s| {
                crate::behavior::mixture_row(bundle.policies(), s, &mut mix);
                let noise = random_row(rng, na, 0.0);
                let mut row: Vec<f64> = mix.iter().zip(&noise).map(|(m, r)| 0.5 * m + 0.5 * r).collect();
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= total);
                let rest: f64 = row[1..].iter().sum();
                row[0] = 1.0 - rest;
                row
            })
            .collect();
        let mu0 = PolicyTable::from_rows(mu_rows).expect("generated behavior is valid");
        RandomInstance { mdp, bundle, mu0 }
    }
}
