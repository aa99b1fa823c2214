use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gvfx::baselines::{mixture_policy, uniform_policy};
use gvfx::behavior::{existence_margin, BehaviorPolicy};
use gvfx::harness::{resolve_problem, run_experiment, run_sweep, Algo, ExperimentConfig, SweepSpec};
use gvfx::oracles::{analytic_value, analytic_variance};
use gvfx::td::UpdateMode;

/// Exit status when an oracle finds a variance that does not exist.
const EXIT_NO_VARIANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "gvfx", version, about = "Parallel GVF evaluation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long, value_enum)]
    update_mode: Option<ModeArg>,
    /// Output directory for CSV and provenance files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ExpectedSarsa,
    IsCorrected,
}

#[derive(Clone, Copy, ValueEnum)]
enum BehaviorArg {
    Mixture,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, seed) cell of a config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a config once per grid value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Dump exact values and variances for a config's problem as CSV.
    Oracle {
        config: PathBuf,
        /// Behavior the variances are computed under.
        #[arg(long, value_enum, default_value = "mixture")]
        behavior: BehaviorArg,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that each GVF's variance exists under a fixed behavior.
    CheckExistence {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "mixture")]
        behavior: BehaviorArg,
    },
}

fn load(path: &PathBuf, o: Option<&Overrides>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(o) = o {
        if let Some(s) = &o.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(a) = &o.algos {
            cfg.algos = a.iter().map(|s| s.parse::<Algo>()).collect::<Result<_, _>>()?;
        }
        if o.total_steps.is_some() {
            cfg.total_steps = o.total_steps;
        }
        if let Some(c) = o.checkpoint_every {
            cfg.checkpoint_every = c;
        }
        if let Some(m) = o.update_mode {
            cfg.update_mode = match m {
                ModeArg::ExpectedSarsa => UpdateMode::ExpectedSarsa,
                ModeArg::IsCorrected => UpdateMode::IsCorrected,
            };
        }
        if o.out.is_some() {
            cfg.output_dir = o.out.clone();
        }
        cfg.validate()?;
    }
    Ok(cfg)
}

struct Solved {
    mdp: gvfx::env::TabularMdp,
    bundle: gvfx::gvf::GvfBundle,
    mu: BehaviorPolicy,
}

fn solve(cfg: &ExperimentConfig, behavior: BehaviorArg) -> Result<Solved> {
    let problem = resolve_problem(cfg)?;
    let mdp = problem.build_mdp(cfg.slip, cfg.episode_cap)?;
    let bundle = problem.build_bundle(&mdp, cfg.gamma, cfg.drift_clock)?;
    let policies: Vec<_> = bundle.policies().cloned().collect();
    let mu = match behavior {
        BehaviorArg::Mixture => mixture_policy(&policies, 0.0, cfg.rho_cap)?,
        BehaviorArg::Uniform => uniform_policy(mdp.n_states(), mdp.n_actions(), 0.0, cfg.rho_cap)?,
    };
    Ok(Solved { mdp, bundle, mu })
}

fn oracle(cfg: &ExperimentConfig, behavior: BehaviorArg, out: Option<PathBuf>) -> Result<bool> {
    let Solved { mdp, bundle, mu } = solve(cfg, behavior)?;
    let layout = mdp.layout().context("problem has no grid layout")?;
    let na = mdp.n_actions();
    let mut text = String::from("gvf_id,state,row,col,action,v_true,q_true,m_true,exists\n");
    let mut all_exist = true;
    for (i, gvf) in bundle.gvfs.iter().enumerate() {
        let cumulant = bundle.cumulant_of(i);
        let (v, q) = analytic_value(&mdp, gvf, cumulant)?;
        let var = analytic_variance(&mdp, gvf, cumulant, &v, &q, &mu)?;
        all_exist &= var.exists;
        for s in 0..mdp.n_states() {
            let (r, c) = layout.cell(s);
            for a in 0..na {
                let m = var
                    .m_true
                    .as_ref()
                    .map(|m| m[s * na + a].to_string())
                    .unwrap_or_default();
                writeln!(
                    text,
                    "{i},{s},{r},{c},{a},{},{},{m},{}",
                    v[s],
                    q[s * na + a],
                    var.exists
                )?;
            }
        }
    }
    match out {
        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(all_exist)
}

fn check_existence(cfg: &ExperimentConfig, behavior: BehaviorArg) -> Result<bool> {
    let Solved { mdp, bundle, mu, .. } = solve(cfg, behavior)?;
    println!("gvf_id,max_second_moment,bound,margin_ok,sr_lower,sr_upper,method,exists");
    let mut all = true;
    for (i, gvf) in bundle.gvfs.iter().enumerate() {
        let margin = existence_margin(&gvf.policy, &mu, cfg.gamma);
        let worst = mdp
            .non_terminal_states()
            .map(|s| margin.per_state[s])
            .fold(0.0, f64::max);
        let cumulant = bundle.cumulant_of(i);
        let (v, q) = analytic_value(&mdp, gvf, cumulant)?;
        let var = analytic_variance(&mdp, gvf, cumulant, &v, &q, &mu)?;
        all &= var.exists;
        println!(
            "{i},{worst},{},{},{},{},{:?},{}",
            margin.bound, margin.exists, var.check.lower, var.check.upper, var.check.method, var.exists
        );
    }
    Ok(all)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load(&config, Some(&overrides))?;
            if cfg.output_dir.is_none() {
                bail!("no output directory: set output_dir in the config or pass --out");
            }
            let out = run_experiment(&cfg)?;
            for r in &out.records {
                for w in &r.warnings {
                    eprintln!("warning: {} seed {}: {w}", r.algo, r.seed);
                }
                if let Some(m) = r.final_avg_mse() {
                    println!("{} seed {}: final avg MSE {m:.6}", r.algo, r.seed);
                }
            }
            if let Some(p) = out.csv_path {
                println!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            param,
            grid,
            overrides,
        } => {
            let cfg = load(&config, Some(&overrides))?;
            let spec = SweepSpec::new(param, grid)?;
            let out = run_sweep(&spec, &cfg)?;
            print!("{}", gvfx::harness::summary_csv(&spec.param, &out.rows));
            if let Some(p) = out.summary_path {
                println!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { config, behavior, out } => {
            let cfg = load(&config, None)?;
            Ok(if oracle(&cfg, behavior, out)? {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NO_VARIANCE)
            })
        }
        Command::CheckExistence { config, behavior } => {
            let cfg = load(&config, None)?;
            Ok(if check_existence(&cfg, behavior)? {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NO_VARIANCE)
            })
        }
    }
}
