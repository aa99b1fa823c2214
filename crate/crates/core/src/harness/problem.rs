//! Grid problems: the named experimental settings and user-defined ones.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{build_fourrooms, build_gridworld, Cell, GridSpec, TabularMdp};
use crate::error::{Error, Result};
use crate::gvf::{Cumulant, CumulantKind, DriftClock, GvfBundle, GvfSpec, PolicySet, TargetPolicy};

use super::config::{ExperimentConfig, Setting};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CumulantSpec {
    pub kind: CumulantKind,
    pub mean: f64,
    #[serde(default)]
    pub sigma: f64,
    /// `(row, col)` goal cells where the signal is paid; all are terminal.
    pub cells: Vec<Cell>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GvfPair {
    pub policy: usize,
    pub cumulant: usize,
}

/// A gridworld, state-independent target policies over `[L, R, U, D]`,
/// cumulants, and the (policy, cumulant) pairs to evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub fourrooms: bool,
    pub policies: Vec<[f64; 4]>,
    pub cumulants: Vec<CumulantSpec>,
    pub gvfs: Vec<GvfPair>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.gvfs.is_empty() {
            return bad("problem needs at least one GVF".into());
        }
        for (i, g) in self.gvfs.iter().enumerate() {
            if g.policy >= self.policies.len() || g.cumulant >= self.cumulants.len() {
                return bad(format!("GVF {i} refers to a missing policy or cumulant"));
            }
        }
        for (i, c) in self.cumulants.iter().enumerate() {
            if !(c.sigma >= 0.0 && c.sigma.is_finite() && c.mean.is_finite()) {
                return bad(format!("cumulant {i} has invalid mean or sigma"));
            }
            if c.cells.is_empty() {
                return bad(format!("cumulant {i} has no cells"));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        let mut spec = GridSpec::open(self.width, self.height);
        for (i, c) in self.cumulants.iter().enumerate() {
            for &cell in &c.cells {
                spec = spec.with_goal(cell, i);
            }
        }
        spec
    }

    pub fn build_mdp(&self, slip: f64, cap: usize) -> Result<TabularMdp> {
        if self.fourrooms {
            build_fourrooms(&self.grid_spec(), slip, cap)
        } else {
            build_gridworld(&self.grid_spec(), slip, cap)
        }
    }

    /// Fresh GVFs (drifters at their starting value) on `mdp`.
    pub fn build_bundle(&self, mdp: &TabularMdp, gamma: f64, clock: DriftClock) -> Result<GvfBundle> {
        let layout = mdp
            .layout()
            .ok_or_else(|| Error::InvalidConfig("problem MDP has no grid layout".into()))?;
        let policies = self
            .policies
            .iter()
            .map(|row| TargetPolicy::replicated(mdp.n_states(), row))
            .collect::<Result<Vec<_>>>()?;
        let cumulants = self
            .cumulants
            .iter()
            .map(|c| {
                let cells = c
                    .cells
                    .iter()
                    .map(|&cell| {
                        layout
                            .state(cell)
                            .ok_or_else(|| Error::InvalidGrid(format!("cumulant cell {cell:?} is a wall or outside")))
                    })
                    .collect::<Result<BTreeSet<_>>>()?;
                Ok(match c.kind {
                    CumulantKind::Constant => Cumulant::constant(c.mean, cells),
                    CumulantKind::Distractor => Cumulant::distractor(c.mean, c.sigma, cells),
                    CumulantKind::Drifter => Cumulant::drifter(c.mean, c.sigma, cells).with_drift_clock(clock),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let gvfs = self
            .gvfs
            .iter()
            .map(|g| GvfSpec {
                policy: policies[g.policy].clone(),
                cumulant: g.cumulant,
                gamma,
            })
            .collect();
        GvfBundle::new(gvfs, cumulants)
    }
}

fn distractor(mean: f64, sigma: f64, cell: Cell) -> CumulantSpec {
    CumulantSpec {
        kind: CumulantKind::Distractor,
        mean,
        sigma,
        cells: vec![cell],
    }
}

fn pairs(p: &[(usize, usize)]) -> Vec<GvfPair> {
    p.iter()
        .map(|&(policy, cumulant)| GvfPair { policy, cumulant })
        .collect()
}

/// The problem behind a named setting. `layout_seed` only affects the
/// forty-GVF goal placement and values.
pub fn named_problem(setting: Setting, layout_seed: u64) -> Result<ProblemSpec> {
    let two = PolicySet::TwoPolicy.rows();
    let top_left = (0, 0);
    let top_right = (0, 19);
    let spec = match setting {
        Setting::TwoPolicySameCumulant => ProblemSpec {
            width: 20,
            height: 20,
            fourrooms: false,
            policies: two,
            cumulants: vec![distractor(100.0, 5.0, top_left)],
            gvfs: pairs(&[(0, 0), (1, 0)]),
        },
        Setting::TwoPolicyDistinctCumulants | Setting::SemiGreedy => ProblemSpec {
            width: 20,
            height: 20,
            fourrooms: false,
            policies: if setting == Setting::SemiGreedy {
                PolicySet::SemiGreedy.rows()
            } else {
                two
            },
            cumulants: vec![distractor(100.0, 5.0, top_left), distractor(50.0, 5.0, top_right)],
            gvfs: pairs(&[(0, 0), (1, 1)]),
        },
        Setting::FortyGvf => {
            let mut rng = ChaCha8Rng::seed_from_u64(layout_seed);
            let mut cells = BTreeSet::new();
            let mut cumulants = Vec::with_capacity(10);
            while cumulants.len() < 10 {
                let cell = (rng.random_range(0..20), rng.random_range(0..20));
                if cells.insert(cell) {
                    cumulants.push(CumulantSpec {
                        kind: CumulantKind::Constant,
                        mean: rng.random_range(50.0..100.0),
                        sigma: 0.0,
                        cells: vec![cell],
                    });
                }
            }
            let gvfs = (0..4)
                .flat_map(|p| (0..10).map(move |c| GvfPair { policy: p, cumulant: c }))
                .collect();
            ProblemSpec {
                width: 20,
                height: 20,
                fourrooms: false,
                policies: PolicySet::Cardinal.rows(),
                cumulants,
                gvfs,
            }
        }
        Setting::FourroomsDrifter => ProblemSpec {
            width: 20,
            height: 20,
            fourrooms: true,
            policies: two,
            cumulants: vec![
                distractor(100.0, 2.0, top_left),
                CumulantSpec {
                    kind: CumulantKind::Drifter,
                    mean: 0.0,
                    sigma: 0.5,
                    cells: vec![top_right],
                },
            ],
            gvfs: pairs(&[(0, 0), (1, 1)]),
        },
        Setting::Custom => return Err(Error::InvalidConfig("`custom` has no built-in problem".into())),
    };
    spec.validate()?;
    Ok(spec)
}

/// The problem a config describes: its own `[problem]` table for `custom`,
/// the named setting otherwise.
pub fn resolve_problem(cfg: &ExperimentConfig) -> Result<ProblemSpec> {
    match (cfg.setting, &cfg.problem) {
        (Setting::Custom, Some(p)) => {
            p.validate()?;
            Ok(p.clone())
        }
        (Setting::Custom, None) => Err(Error::InvalidConfig("setting `custom` needs a [problem] table".into())),
        (s, _) => named_problem(s, cfg.layout_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::StochasticPolicy;

    #[test]
    fn named_settings_build() {
        for s in Setting::NAMED {
            let p = named_problem(s, 0).unwrap();
            let mdp = p.build_mdp(0.1, 500).unwrap();
            let bundle = p.build_bundle(&mdp, 0.99, DriftClock::OnVisit).unwrap();
            let expected = if s == Setting::FortyGvf { 40 } else { 2 };
            assert_eq!(bundle.len(), expected, "{s}");
        }
    }

    #[test]
    fn distinct_cumulants_setting() {
        let p = named_problem(Setting::TwoPolicyDistinctCumulants, 0).unwrap();
        let mdp = p.build_mdp(0.1, 500).unwrap();
        let b = p.build_bundle(&mdp, 0.99, DriftClock::OnVisit).unwrap();
        let layout = mdp.layout().unwrap();
        let (tl, tr) = (layout.state((0, 0)).unwrap(), layout.state((0, 19)).unwrap());
        assert_eq!(b.cumulant_of(0).expectation(tl), 100.0);
        assert_eq!(b.cumulant_of(1).expectation(tr), 50.0);
        assert_eq!(b.cumulant_of(1).expectation(tl), 0.0);
        assert_eq!(b.gvfs[0].policy.row(5), &[0.175, 0.175, 0.25, 0.4]);
        assert_eq!(b.gvfs[1].policy.row(5), &[0.25, 0.15, 0.25, 0.35]);
        assert!(mdp.is_terminal(tl) && mdp.is_terminal(tr));
    }

    #[test]
    fn forty_gvf_layout_is_seeded() {
        let a = named_problem(Setting::FortyGvf, 7).unwrap();
        assert_eq!(a, named_problem(Setting::FortyGvf, 7).unwrap());
        assert_ne!(a, named_problem(Setting::FortyGvf, 8).unwrap());
        let cells: BTreeSet<Cell> = a.cumulants.iter().map(|c| c.cells[0]).collect();
        assert_eq!(cells.len(), 10);
        assert!(a.cumulants.iter().all(|c| (50.0..100.0).contains(&c.mean)));
    }

    #[test]
    fn fourrooms_drifter_setting() {
        let p = named_problem(Setting::FourroomsDrifter, 0).unwrap();
        let mdp = p.build_mdp(0.1, 500).unwrap();
        assert_eq!(mdp.n_states(), 365);
        let b = p.build_bundle(&mdp, 0.99, DriftClock::OnVisit).unwrap();
        assert_eq!(b.cumulant_of(1).kind, CumulantKind::Drifter);
        assert_eq!(b.cumulant_of(1).drift_state, 100.0);
    }

    #[test]
    fn custom_problem_from_toml() {
        let text = r#"
            setting = "custom"
            [problem]
            width = 5
            height = 5
            policies = [[0.25, 0.25, 0.25, 0.25]]
            gvfs = [{ policy = 0, cumulant = 0 }]
            [[problem.cumulants]]
            kind = "constant"
            mean = 1.0
            cells = [[4, 4]]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let p = resolve_problem(&cfg).unwrap();
        let mdp = p.build_mdp(0.0, 100).unwrap();
        assert_eq!(mdp.n_states(), 25);
        let bad = text.replace("cumulant = 0", "cumulant = 3");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }
}
