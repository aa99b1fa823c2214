use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::baselines::{mixture_policy, uniform_policy, BpsState, RoundRobinState, SrState};
use crate::behavior::{epsilon_mix_row, floor_row, gvf_explorer_row, gvf_explorer_update, BehaviorPolicy};
use crate::env::{ActionId, StateId, TabularMdp, Transition};
use crate::error::Result;
use crate::gvf::{CumulantKind, GvfBundle, TargetPolicy};
use crate::metrics::{mse, uniform_weights, write_csv, Checkpoint, RunRecord};
use crate::oracles::{variance_existence, ValueOracle};
use crate::policy::{sample_index, StochasticPolicy};
use crate::td::{FeatureMap, GvfLearner, NextAction, UpdateMode};

use super::config::{Algo, ExperimentConfig};
use super::problem::{resolve_problem, ProblemSpec};

/// Everything shared read-only by the runs of one config.
pub struct PreparedProblem {
    pub spec: ProblemSpec,
    pub mdp: TabularMdp,
    pub bundle: GvfBundle,
    pub features: FeatureMap,
    pub weights: Vec<f64>,
    pub oracle: ValueOracle,
    /// Exact values when no cumulant changes over time.
    pub static_values: Option<Vec<Vec<f64>>>,
    /// Distinct target policies, in first-appearance order.
    pub unique_policies: Vec<TargetPolicy>,
}

impl PreparedProblem {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = resolve_problem(cfg)?;
        let mdp = spec.build_mdp(cfg.slip, cfg.episode_cap)?;
        let bundle = spec.build_bundle(&mdp, cfg.gamma, cfg.drift_clock)?;
        let layout = mdp.layout().expect("grid problems carry a layout");
        let features = FeatureMap::grouped(layout, mdp.n_states(), cfg.grouping_factor)?;
        let weights = uniform_weights((0..mdp.n_states()).map(|s| !mdp.is_terminal(s)));
        let oracle = ValueOracle::new(&mdp, &bundle)?;
        let drifting = bundle.cumulants.iter().any(|c| c.kind == CumulantKind::Drifter);
        let static_values = if drifting {
            None
        } else {
            Some(oracle.values(&mdp, &bundle)?)
        };
        let mut unique_policies: Vec<TargetPolicy> = Vec::new();
        for p in bundle.policies() {
            if !unique_policies.contains(p) {
                unique_policies.push(p.clone());
            }
        }
        Ok(Self {
            spec,
            mdp,
            bundle,
            features,
            weights,
            oracle,
            static_values,
            unique_policies,
        })
    }
}

/// Per-run generator: keyed by the master seed and the run seed, with the
/// algorithm selecting an independent stream. Adding algorithms or seeds
/// never changes the draws of existing runs.
pub fn run_rng(master_seed: u64, algo: Algo, seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(algo.stream_id());
    rng
}

enum Strategy {
    Explorer,
    RoundRobin(RoundRobinState),
    Fixed(BehaviorPolicy),
    Sr(SrState),
    Bps {
        state: BpsState,
        trajectory: Vec<Transition>,
        probs: Vec<f64>,
    },
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    problem: &'a PreparedProblem,
    policies: Vec<TargetPolicy>,
    learner: GvfLearner,
    strategy: Strategy,
    row: Vec<f64>,
}

impl Runner<'_> {
    /// Draws an action at `state` for global step `step`; returns it with its probability.
    fn act(&mut self, state: StateId, step: u64, rng: &mut ChaCha8Rng) -> (ActionId, f64) {
        let floor = self.cfg.epsilon_floor;
        let row = &mut self.row;
        match &self.strategy {
            Strategy::Explorer => {
                let m = self.learner.m.as_ref().expect("explorer keeps a variance table");
                gvf_explorer_row(&self.policies, m, &self.problem.features, state, floor, row);
            }
            Strategy::RoundRobin(rr) => {
                row.copy_from_slice(self.problem.unique_policies[rr.active()].row(state));
                floor_row(row, floor);
            }
            Strategy::Fixed(mu) => row.copy_from_slice(mu.row(state)),
            Strategy::Sr(sr) => {
                sr.behavior_row(self.problem.features.feature(state), row);
                floor_row(row, floor);
            }
            Strategy::Bps { state: bps, .. } => {
                bps.behavior_row(state, row);
                floor_row(row, floor);
            }
        }
        epsilon_mix_row(row, self.cfg.eps.epsilon(step));
        let a = sample_index(row, rng.random());
        (a, row[a])
    }
}

/// Runs one `(algorithm, seed)` cell to completion.
pub fn run_single(cfg: &ExperimentConfig, problem: &PreparedProblem, algo: Algo, seed: u64) -> Result<RunRecord> {
    let mdp = &problem.mdp;
    let mut rng = run_rng(cfg.master_seed, algo, seed);
    let mut bundle = problem.bundle.clone();
    let n_gvfs = bundle.len();
    let na = mdp.n_actions();
    let (lr_q, lr_m) = cfg.lr_schedules(algo);
    let uses_m = algo == Algo::GvfExplorer;
    let mut learner = GvfLearner::new(
        n_gvfs,
        na,
        problem.features.clone(),
        uses_m.then_some(cfg.m_init),
        cfg.update_mode,
        cfg.rho_cap,
    )?;
    learner.delta_source = cfg.delta_source;
    let strategy = match algo {
        Algo::GvfExplorer => Strategy::Explorer,
        Algo::RoundRobin => Strategy::RoundRobin(RoundRobinState::new(problem.unique_policies.len())?),
        Algo::Mixture => Strategy::Fixed(mixture_policy(
            &problem.unique_policies,
            cfg.epsilon_floor,
            cfg.rho_cap,
        )?),
        Algo::Uniform => Strategy::Fixed(uniform_policy(mdp.n_states(), na, cfg.epsilon_floor, cfg.rho_cap)?),
        Algo::Sr => Strategy::Sr(SrState::new(
            problem.features.n_features(),
            na,
            n_gvfs,
            cfg.gamma,
            cfg.sr_temperature,
        )?),
        Algo::Bps => Strategy::Bps {
            state: BpsState::new(mdp.n_states(), na, lr_q.alpha(0)),
            trajectory: Vec::new(),
            probs: Vec::new(),
        },
    };
    let mut runner = Runner {
        cfg,
        problem,
        policies: bundle.policies().cloned().collect(),
        learner,
        strategy,
        row: vec![0.0; na],
    };

    let mut record = RunRecord::new(algo.name(), seed);
    let checkpoint = |record: &mut RunRecord, learner: &GvfLearner, bundle: &GvfBundle, step: u64| -> Result<()> {
        let truth = match &problem.static_values {
            Some(v) => v.clone(),
            None => problem.oracle.values(mdp, bundle)?,
        };
        let report = mse(&truth, &learner.state_values(bundle), &problem.weights)?;
        record.push(Checkpoint {
            step,
            per_gvf_mse: report.per_gvf,
            avg_mse: report.avg,
        })
    };

    let total = cfg.total_steps();
    let mut current: Option<(StateId, ActionId, f64)> = None;
    let mut ep_len = 0usize;
    let mut cumulants = Vec::with_capacity(n_gvfs);
    for step in 0..total {
        if step % cfg.checkpoint_every == 0 {
            checkpoint(&mut record, &runner.learner, &bundle, step)?;
        }
        let (s, a, prob) = match current {
            Some(c) => c,
            None => {
                let s = mdp.sample_start(&mut rng);
                ep_len = 0;
                let (a, p) = runner.act(s, step, &mut rng);
                (s, a, p)
            }
        };
        let (next, terminated) = mdp.step(s, a, &mut rng);
        ep_len += 1;
        let truncated = !terminated && ep_len >= mdp.episode_cap();
        bundle.observe(next, &mut rng, &mut cumulants);
        let trans = Transition::new(s, a, next, std::mem::take(&mut cumulants), terminated, truncated);

        // The importance-weighted targets need a' before the update; the
        // expected targets let the refreshed behavior pick it afterwards.
        let early =
            (cfg.update_mode == UpdateMode::IsCorrected && !terminated).then(|| runner.act(next, step + 1, &mut rng));
        let next_action = early.map(|(action, behavior_prob)| NextAction { action, behavior_prob });
        let alpha_q = lr_q.alpha(step);
        runner
            .learner
            .update(&trans, &bundle, next_action, alpha_q, lr_m.alpha(step));

        let episode_over = terminated || truncated;
        match &mut runner.strategy {
            Strategy::Sr(sr) => {
                sr.step(&trans, &problem.features, alpha_q);
            }
            Strategy::RoundRobin(rr) if episode_over => rr.end_episode(),
            Strategy::Bps {
                state,
                trajectory,
                probs,
            } => {
                probs.push(prob);
                trajectory.push(trans.clone());
                if episode_over {
                    state.alpha = alpha_q;
                    state.episode_update(trajectory, probs, &runner.policies, cfg.gamma);
                    trajectory.clear();
                    probs.clear();
                }
            }
            _ => {}
        }

        current = if episode_over {
            None
        } else {
            let (a2, p2) = match early {
                Some(x) => x,
                None => runner.act(next, step + 1, &mut rng),
            };
            Some((next, a2, p2))
        };
        cumulants = trans.cumulant_values;
    }
    checkpoint(&mut record, &runner.learner, &bundle, total)?;

    if let Some(m) = &runner.learner.m {
        let mu = gvf_explorer_update(
            &runner.policies,
            m,
            &problem.features,
            mdp.n_states(),
            cfg.epsilon_floor,
            cfg.rho_cap,
        )?;
        for (i, gvf) in bundle.gvfs.iter().enumerate() {
            let check = variance_existence(mdp, gvf, &mu)?;
            if !check.below_one() {
                record.warnings.push(format!(
                    "final behavior: variance of GVF {i} does not exist (spectral radius in [{:.4}, {:.4}])",
                    check.lower, check.upper
                ));
            }
        }
    }
    Ok(record)
}

/// Result of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub csv_path: Option<PathBuf>,
    pub provenance_path: Option<PathBuf>,
}

/// Every `(algorithm, seed)` cell of `cfg`, run in parallel, sorted by
/// algorithm name then seed.
pub fn run_records(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let problem = PreparedProblem::new(cfg)?;
    let cells: Vec<(Algo, u64)> = cfg
        .algos
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let mut records = cells
        .par_iter()
        .map(|&(algo, seed)| run_single(cfg, &problem, algo, seed))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| (&a.algo, a.seed).cmp(&(&b.algo, b.seed)));
    Ok(records)
}

pub fn csv_bytes(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_csv(records, &mut out)?;
    Ok(out)
}

/// JSON-lines provenance: the resolved config and problem, then one line
/// per run with its stream key and warnings.
pub fn provenance_lines(cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<String> {
    let problem = resolve_problem(cfg)?;
    let mut out = String::new();
    let header = json!({
        "kind": "config",
        "config": cfg,
        "total_steps": cfg.total_steps(),
        "problem": problem,
        "layout_seed": cfg.layout_seed,
        "lr": cfg.algos.iter().map(|a| {
            let (q, m) = cfg.lr_schedules(*a);
            (a.name().to_string(), json!({"alpha_q": q, "alpha_m": m}))
        }).collect::<serde_json::Map<_, _>>(),
        "crate_version": env!("CARGO_PKG_VERSION"),
    });
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for r in records {
        let algo: Algo = r.algo.parse()?;
        let line = json!({
            "kind": "run",
            "algo": r.algo,
            "seed": r.seed,
            "master_seed": cfg.master_seed,
            "rng_stream": algo.stream_id(),
            "checkpoints": r.checkpoints.len(),
            "final_avg_mse": r.final_avg_mse(),
            "warnings": r.warnings,
        });
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

/// Runs every cell and, when `output_dir` is set, writes
/// `<setting>.csv` and `<setting>.provenance.jsonl` there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let records = run_records(cfg)?;
    let (mut csv_path, mut provenance_path) = (None, None);
    if let Some(dir) = &cfg.output_dir {
        let (c, p) = write_outputs(dir, cfg.setting.name(), cfg, &records)?;
        csv_path = Some(c);
        provenance_path = Some(p);
    }
    Ok(ExperimentOutput {
        records,
        csv_path,
        provenance_path,
    })
}

pub(crate) fn write_outputs(
    dir: &Path,
    stem: &str,
    cfg: &ExperimentConfig,
    records: &[RunRecord],
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::File::create(&csv_path)?.write_all(&csv_bytes(records)?)?;
    let prov_path = dir.join(format!("{stem}.provenance.jsonl"));
    fs::write(&prov_path, provenance_lines(cfg, records)?)?;
    Ok((csv_path, prov_path))
}
