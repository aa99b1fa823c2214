use std::fs;
use std::path::PathBuf;

use crate::error::Result;
use crate::metrics::RunRecord;

use super::config::{Algo, ExperimentConfig, SweepSpec};
use super::run::{run_records, write_outputs};

/// Step at which sweep candidates are compared.
pub const SELECTION_STEP: u64 = 800_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub algo: Algo,
    pub value: f64,
    /// Checkpoint the score was read from: the last one at or before the
    /// selection step.
    pub step: u64,
    /// Seed-averaged avg-MSE.
    pub mean_avg_mse: f64,
    pub selected: bool,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<(f64, Vec<RunRecord>)>,
    pub summary_path: Option<PathBuf>,
}

impl SweepOutput {
    pub fn best(&self, algo: Algo) -> Option<f64> {
        self.rows.iter().find(|r| r.algo == algo && r.selected).map(|r| r.value)
    }
}

fn score(records: &[RunRecord], algo: Algo) -> Option<(u64, f64)> {
    let mine: Vec<&RunRecord> = records.iter().filter(|r| r.algo == algo.name()).collect();
    let mut step = 0;
    let mut total = 0.0;
    for r in &mine {
        let cp = r.checkpoints.iter().rev().find(|c| c.step <= SELECTION_STEP)?;
        step = cp.step;
        total += cp.avg_mse;
    }
    (!mine.is_empty()).then(|| (step, total / mine.len() as f64))
}

/// Runs `base` once per grid value and marks, per algorithm, the value with
/// the lowest seed-averaged avg-MSE at the selection checkpoint. Ties go to
/// the smaller value.
pub fn run_sweep(sweep: &SweepSpec, base: &ExperimentConfig) -> Result<SweepOutput> {
    let mut grid = sweep.grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut runs = Vec::with_capacity(grid.len());
    for &value in &grid {
        let mut cfg = sweep.apply(base, value)?;
        cfg.output_dir = None;
        runs.push((value, run_records(&cfg)?));
    }

    let mut rows = Vec::new();
    for &algo in &base.algos {
        let start = rows.len();
        for (value, records) in &runs {
            if let Some((step, mean)) = score(records, algo) {
                rows.push(SweepRow {
                    algo,
                    value: *value,
                    step,
                    mean_avg_mse: mean,
                    selected: false,
                });
            }
        }
        // Grid is ascending, so the first strict minimum is the smallest tied value.
        let best = rows[start..]
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, r)| match acc {
                Some((_, m)) if r.mean_avg_mse >= m => acc,
                _ => Some((i, r.mean_avg_mse)),
            });
        if let Some((i, _)) = best {
            rows[start + i].selected = true;
        }
    }

    let mut summary_path = None;
    if let Some(dir) = &base.output_dir {
        for (value, records) in &runs {
            let mut cfg = sweep.apply(base, *value)?;
            cfg.output_dir = None;
            write_outputs(
                dir,
                &format!("{}_{}_{}", base.setting.name(), sweep.param, value),
                &cfg,
                records,
            )?;
        }
        let path = dir.join(format!("{}_{}_sweep.csv", base.setting.name(), sweep.param));
        fs::write(&path, summary_csv(&sweep.param, &rows))?;
        summary_path = Some(path);
    }
    Ok(SweepOutput {
        rows,
        runs,
        summary_path,
    })
}

/// `algo,param,value,step,mean_avg_mse,selected`, one row per algorithm and value.
pub fn summary_csv(param: &str, rows: &[SweepRow]) -> String {
    let mut out = String::from("algo,param,value,step,mean_avg_mse,selected\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.algo,
            param,
            r.value,
            r.step,
            r.mean_avg_mse,
            u8::from(r.selected)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Setting;
    use crate::harness::run::csv_bytes;

    fn base() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::named(Setting::TwoPolicySameCumulant);
        cfg.algos = vec![Algo::Uniform];
        cfg.total_steps = Some(3000);
        cfg.checkpoint_every = 1000;
        cfg
    }

    #[test]
    fn one_run_per_grid_value() {
        let out = run_sweep(&SweepSpec::new("alpha_q_min", vec![0.8, 0.1, 0.5]).unwrap(), &base()).unwrap();
        assert_eq!(out.runs.len(), 3);
        assert_eq!(out.rows.len(), 3);
        assert_eq!(out.rows.iter().filter(|r| r.selected).count(), 1);
        let best = out.rows.iter().find(|r| r.selected).unwrap();
        assert!(out.rows.iter().all(|r| r.mean_avg_mse >= best.mean_avg_mse));
        assert_eq!(best.step, 3000);
    }

    #[test]
    fn singleton_grid_matches_a_plain_run() {
        let b = base();
        let out = run_sweep(&SweepSpec::new("alpha_q_min", vec![0.95]).unwrap(), &b).unwrap();
        let mut direct = b.clone();
        direct.lr.alpha_q_min = Some(0.95);
        assert_eq!(
            csv_bytes(&out.runs[0].1).unwrap(),
            csv_bytes(&run_records(&direct).unwrap()).unwrap()
        );
        assert!(out.rows[0].selected);
        assert_eq!(out.best(Algo::Uniform), Some(0.95));
    }

    #[test]
    fn ties_go_to_the_smaller_value() {
        // The explorer's variance init does not affect a uniform behavior.
        let out = run_sweep(&SweepSpec::new("m_init", vec![2.0, 0.5, 1.0]).unwrap(), &base()).unwrap();
        assert!(out.rows.windows(2).all(|w| w[0].mean_avg_mse == w[1].mean_avg_mse));
        assert_eq!(out.best(Algo::Uniform), Some(0.5));
    }

    #[test]
    fn summary_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = base();
        b.output_dir = Some(dir.path().to_path_buf());
        let out = run_sweep(&SweepSpec::new("alpha_q_min", vec![0.5]).unwrap(), &b).unwrap();
        let text = fs::read_to_string(out.summary_path.unwrap()).unwrap();
        assert!(text.starts_with("algo,param,value,step,mean_avg_mse,selected\nuniform,alpha_q_min,0.5,3000,"));
        assert!(text.trim_end().ends_with(",1"));
    }
}
