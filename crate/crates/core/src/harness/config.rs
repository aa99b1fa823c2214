use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::behavior::{EpsSchedule, DEFAULT_EPSILON_FLOOR, DEFAULT_RHO_CAP};
use crate::error::{Error, Result};
use crate::gvf::DriftClock;
use crate::td::{DeltaSource, LrSchedule, UpdateMode};

use super::problem::ProblemSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    TwoPolicySameCumulant,
    TwoPolicyDistinctCumulants,
    SemiGreedy,
    FortyGvf,
    FourroomsDrifter,
    Custom,
}

impl Setting {
    pub const NAMED: [Setting; 5] = [
        Self::TwoPolicySameCumulant,
        Self::TwoPolicyDistinctCumulants,
        Self::SemiGreedy,
        Self::FortyGvf,
        Self::FourroomsDrifter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TwoPolicySameCumulant => "two_policy_same_cumulant",
            Self::TwoPolicyDistinctCumulants => "two_policy_distinct_cumulants",
            Self::SemiGreedy => "semi_greedy",
            Self::FortyGvf => "forty_gvf",
            Self::FourroomsDrifter => "fourrooms_drifter",
            Self::Custom => "custom",
        }
    }

    pub fn default_total_steps(self) -> u64 {
        match self {
            Self::FourroomsDrifter => 4_000_000,
            _ => 2_000_000,
        }
    }

    /// Tuned minimum learning rates `(α_Q, α_M)` for `algo` in this setting.
    /// `α_M` only matters to the variance-driven explorer.
    pub fn tuned_lr(self, algo: Algo) -> (f64, f64) {
        use Algo::*;
        use Setting::*;
        match (self, algo) {
            (TwoPolicySameCumulant, GvfExplorer) => (0.25, 0.8),
            (TwoPolicySameCumulant, RoundRobin | Mixture | Uniform) => (0.95, 0.8),
            (TwoPolicySameCumulant, Sr) => (0.25, 0.8),
            (TwoPolicySameCumulant, Bps) => (0.5, 0.8),

            (TwoPolicyDistinctCumulants, GvfExplorer) => (0.1, 0.8),
            (TwoPolicyDistinctCumulants, RoundRobin | Mixture | Uniform) => (0.8, 0.8),
            (TwoPolicyDistinctCumulants, Sr) => (0.5, 0.8),
            (TwoPolicyDistinctCumulants, Bps) => (0.8, 0.8),

            (SemiGreedy, GvfExplorer) => (0.5, 0.8),
            (SemiGreedy, RoundRobin | Mixture | Uniform) => (0.95, 0.8),
            (SemiGreedy, Sr) => (0.8, 0.8),
            (SemiGreedy, Bps) => (0.9, 0.8),

            (FortyGvf, GvfExplorer) => (0.5, 0.95),
            (FortyGvf, RoundRobin | Mixture | Uniform) => (0.8, 0.8),
            (FortyGvf, Sr) => (0.25, 0.8),
            // No tuned value was reported for this pair.
            (FortyGvf, Bps) => (0.8, 0.8),

            (FourroomsDrifter, _) => (if algo == GvfExplorer { 0.5 } else { 0.8 }, 0.8),

            (Custom, GvfExplorer) => (0.1, 0.8),
            (Custom, _) => (0.8, 0.8),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::NAMED
            .into_iter()
            .chain([Self::Custom])
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::UnknownSetting(s.to_string()))
    }
}

/// Behavior strategies. The discriminant is a stable id used to derive
/// each run's random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    GvfExplorer = 0,
    RoundRobin = 1,
    Mixture = 2,
    Uniform = 3,
    Sr = 4,
    Bps = 5,
}

impl Algo {
    pub const ALL: [Algo; 6] = [
        Self::GvfExplorer,
        Self::RoundRobin,
        Self::Mixture,
        Self::Uniform,
        Self::Sr,
        Self::Bps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GvfExplorer => "gvf_explorer",
            Self::RoundRobin => "round_robin",
            Self::Mixture => "mixture",
            Self::Uniform => "uniform",
            Self::Sr => "sr",
            Self::Bps => "bps",
        }
    }

    pub fn stream_id(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrOverride {
    pub alpha_q_min: Option<f64>,
    pub alpha_m_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrConfig {
    /// Applies to every algorithm unless a per-algorithm value is given.
    pub alpha_q_min: Option<f64>,
    pub alpha_m_min: Option<f64>,
    pub alpha_start: f64,
    pub decay_steps: u64,
    pub per_algo: BTreeMap<Algo, LrOverride>,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            alpha_q_min: None,
            alpha_m_min: None,
            alpha_start: 1.0,
            decay_steps: LrSchedule::DEFAULT_DECAY_STEPS,
            per_algo: BTreeMap::new(),
        }
    }
}

/// Everything needed to reproduce a batch of runs. Missing fields take the
/// setting's tuned defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: Setting,
    #[serde(default = "default_algos")]
    pub algos: Vec<Algo>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub total_steps: Option<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub lr: LrConfig,
    #[serde(default)]
    pub eps: EpsSchedule,
    #[serde(default = "default_floor")]
    pub epsilon_floor: f64,
    #[serde(default = "default_rho_cap")]
    pub rho_cap: f64,
    #[serde(default = "default_m_init")]
    pub m_init: f64,
    #[serde(default)]
    pub update_mode: UpdateMode,
    #[serde(default)]
    pub delta_source: DeltaSource,
    #[serde(default = "one")]
    pub grouping_factor: usize,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: u64,
    #[serde(default = "default_slip")]
    pub slip: f64,
    #[serde(default = "default_cap")]
    pub episode_cap: usize,
    #[serde(default = "default_temperature")]
    pub sr_temperature: f64,
    #[serde(default)]
    pub drift_clock: DriftClock,
    /// Seed for randomly placed goals (forty-GVF setting).
    #[serde(default)]
    pub layout_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Problem definition; required for `custom`, ignored otherwise.
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
}

fn default_algos() -> Vec<Algo> {
    vec![Algo::GvfExplorer, Algo::RoundRobin, Algo::Mixture, Algo::Uniform]
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_gamma() -> f64 {
    0.99
}
fn default_floor() -> f64 {
    DEFAULT_EPSILON_FLOOR
}
fn default_rho_cap() -> f64 {
    DEFAULT_RHO_CAP
}
fn default_m_init() -> f64 {
    1.0
}
fn one() -> usize {
    1
}
fn default_checkpoint() -> u64 {
    10_000
}
fn default_slip() -> f64 {
    0.1
}
fn default_cap() -> usize {
    500
}
fn default_temperature() -> f64 {
    1.0
}

impl ExperimentConfig {
    /// A named setting with all defaults.
    pub fn named(setting: Setting) -> Self {
        Self {
            setting,
            algos: default_algos(),
            seeds: default_seeds(),
            total_steps: None,
            master_seed: 0,
            gamma: default_gamma(),
            lr: LrConfig::default(),
            eps: EpsSchedule::default(),
            epsilon_floor: default_floor(),
            rho_cap: default_rho_cap(),
            m_init: default_m_init(),
            update_mode: UpdateMode::default(),
            delta_source: DeltaSource::default(),
            grouping_factor: 1,
            checkpoint_every: default_checkpoint(),
            slip: default_slip(),
            episode_cap: default_cap(),
            sr_temperature: default_temperature(),
            drift_clock: DriftClock::default(),
            layout_seed: 0,
            output_dir: None,
            problem: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps.unwrap_or_else(|| self.setting.default_total_steps())
    }

    /// Resolved `(α_Q, α_M)` schedules for `algo`.
    pub fn lr_schedules(&self, algo: Algo) -> (LrSchedule, LrSchedule) {
        let (tq, tm) = self.setting.tuned_lr(algo);
        let o = self.lr.per_algo.get(&algo).copied().unwrap_or_default();
        let q = o.alpha_q_min.or(self.lr.alpha_q_min).unwrap_or(tq);
        let m = o.alpha_m_min.or(self.lr.alpha_m_min).unwrap_or(tm);
        let sched = |min| LrSchedule {
            alpha_start: self.lr.alpha_start,
            alpha_min: min,
            decay_steps: self.lr.decay_steps,
        };
        (sched(q), sched(m))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if self.algos.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("seed {dup} listed twice"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.algos.iter().find(|a| !seen.insert(**a)) {
            return bad(format!("algorithm {dup} listed twice"));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        if !(0.0..=0.25).contains(&self.epsilon_floor) {
            return bad(format!(
                "epsilon_floor must be in [0, 1/|A|], got {}",
                self.epsilon_floor
            ));
        }
        if !(self.rho_cap > 0.0) {
            return bad(format!("rho_cap must be positive, got {}", self.rho_cap));
        }
        if !(self.m_init > 0.0 && self.m_init.is_finite()) {
            return bad(format!("m_init must be positive, got {}", self.m_init));
        }
        if self.grouping_factor == 0 {
            return bad("grouping_factor must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return bad(format!("slip must be a probability, got {}", self.slip));
        }
        if self.episode_cap == 0 {
            return bad("episode_cap must be positive".into());
        }
        if !(self.sr_temperature > 0.0) {
            return bad(format!("sr_temperature must be positive, got {}", self.sr_temperature));
        }
        let e = &self.eps;
        if !((0.0..=1.0).contains(&e.eps0) && (0.0..=1.0).contains(&e.eps_min) && (0.0..=1.0).contains(&e.eps_decay)) {
            return bad("eps schedule values must lie in [0, 1]".into());
        }
        for algo in &self.algos {
            let (q, m) = self.lr_schedules(*algo);
            for (name, s) in [("alpha_q", q), ("alpha_m", m)] {
                if !(s.alpha_min > 0.0 && s.alpha_min <= 1.0 && s.alpha_start > 0.0 && s.alpha_start <= 1.0) {
                    return bad(format!("{name} schedule for {algo} must stay in (0, 1]"));
                }
            }
        }
        match (self.setting, &self.problem) {
            (Setting::Custom, None) => bad("setting `custom` needs a [problem] table".into()),
            (Setting::Custom, Some(p)) => p.validate(),
            _ => Ok(()),
        }
    }
}

/// One hyper-parameter and the values to try.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: String,
    pub grid: Vec<f64>,
}

impl SweepSpec {
    pub const PARAMS: [&'static str; 6] = [
        "alpha_q_min",
        "alpha_m_min",
        "m_init",
        "epsilon_floor",
        "rho_cap",
        "sr_temperature",
    ];

    pub fn new(param: impl Into<String>, grid: Vec<f64>) -> Result<Self> {
        let param = param.into();
        if !Self::PARAMS.contains(&param.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "cannot sweep `{param}`; supported: {}",
                Self::PARAMS.join(", ")
            )));
        }
        if grid.is_empty() {
            return Err(Error::InvalidConfig("sweep grid is empty".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep grid values must be finite".into()));
        }
        Ok(Self { param, grid })
    }

    /// `base` with the swept parameter set to `value` for every algorithm.
    pub fn apply(&self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self.param.as_str() {
            "alpha_q_min" | "alpha_m_min" => {
                let q = self.param == "alpha_q_min";
                if q {
                    cfg.lr.alpha_q_min = Some(value);
                } else {
                    cfg.lr.alpha_m_min = Some(value);
                }
                for o in cfg.lr.per_algo.values_mut() {
                    if q {
                        o.alpha_q_min = None;
                    } else {
                        o.alpha_m_min = None;
                    }
                }
            }
            "m_init" => cfg.m_init = value,
            "epsilon_floor" => cfg.epsilon_floor = value,
            "rho_cap" => cfg.rho_cap = value,
            "sr_temperature" => cfg.sr_temperature = value,
            other => return Err(Error::InvalidConfig(format!("cannot sweep `{other}`"))),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
