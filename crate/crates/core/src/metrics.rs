//! Prediction-error metrics and the CSV result format.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-GVF weighted squared errors, their sum and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct MseReport {
    pub per_gvf: Vec<f64>,
    pub sum: f64,
    pub avg: f64,
}

/// `Σ_s d(s) (V_i(s) − V̂_i(s))²` for every GVF `i`.
pub fn mse(v_true: &[Vec<f64>], v_hat: &[Vec<f64>], d: &[f64]) -> Result<MseReport> {
    if v_true.len() != v_hat.len() {
        return Err(Error::DimensionMismatch {
            context: "number of GVFs",
            expected: v_true.len(),
            actual: v_hat.len(),
        });
    }
    let mut per_gvf = Vec::with_capacity(v_true.len());
    for (t, h) in v_true.iter().zip(v_hat) {
        for len in [t.len(), h.len()] {
            if len != d.len() {
                return Err(Error::DimensionMismatch {
                    context: "values per state",
                    expected: d.len(),
                    actual: len,
                });
            }
        }
        per_gvf.push(t.iter().zip(h).zip(d).map(|((a, b), w)| w * (a - b) * (a - b)).sum());
    }
    let sum: f64 = per_gvf.iter().sum();
    let avg = if per_gvf.is_empty() {
        0.0
    } else {
        sum / per_gvf.len() as f64
    };
    Ok(MseReport { per_gvf, sum, avg })
}

/// Uniform weights over the states flagged `true`.
pub fn uniform_weights(include: impl IntoIterator<Item = bool>) -> Vec<f64> {
    let mask: Vec<bool> = include.into_iter().collect();
    let n = mask.iter().filter(|m| **m).count().max(1) as f64;
    mask.iter().map(|&m| if m { 1.0 / n } else { 0.0 }).collect()
}

/// `𝔼_i |V_i(s) − V̂_i(s)|` per state.
pub fn abs_error_map(v_true: &[Vec<f64>], v_hat: &[Vec<f64>]) -> Result<Vec<f64>> {
    if v_true.len() != v_hat.len() || v_true.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "number of GVFs",
            expected: v_true.len(),
            actual: v_hat.len(),
        });
    }
    let n = v_true[0].len();
    let mut out = vec![0.0; n];
    for (t, h) in v_true.iter().zip(v_hat) {
        if t.len() != n || h.len() != n {
            return Err(Error::DimensionMismatch {
                context: "values per state",
                expected: n,
                actual: t.len().min(h.len()),
            });
        }
        for ((o, a), b) in out.iter_mut().zip(t).zip(h) {
            *o += (a - b).abs();
        }
    }
    let k = v_true.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    pub per_gvf_mse: Vec<f64>,
    pub avg_mse: f64,
}

/// Learning curve of one `(algorithm, seed)` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: String,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn new(algo: impl Into<String>, seed: u64) -> Self {
        Self {
            algo: algo.into(),
            seed,
            checkpoints: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Appends a checkpoint. Steps must strictly increase.
    pub fn push(&mut self, checkpoint: Checkpoint) -> Result<()> {
        if let Some(last) = self.checkpoints.last() {
            if checkpoint.step <= last.step {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint step {} does not follow {}",
                    checkpoint.step, last.step
                )));
            }
        }
        self.checkpoints.push(checkpoint);
        Ok(())
    }

    pub fn final_avg_mse(&self) -> Option<f64> {
        self.checkpoints.last().map(|c| c.avg_mse)
    }

    /// Average MSE at the last checkpoint not later than `step`.
    pub fn avg_mse_at(&self, step: u64) -> Option<f64> {
        self.checkpoints
            .iter()
            .rev()
            .find(|c| c.step <= step)
            .map(|c| c.avg_mse)
    }
}

pub const CSV_HEADER: &str = "algo,seed,step,gvf_id,mse,avg_mse";

/// Writes every checkpoint as one row per GVF plus an average row
/// (`gvf_id = -1`). Rows are sorted by algorithm, seed, step and GVF so the
/// output does not depend on the order runs finished in.
pub fn write_csv<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    let mut rows: Vec<(&str, u64, u64, i64, f64, f64)> = Vec::new();
    for r in records {
        for c in &r.checkpoints {
            rows.push((&r.algo, r.seed, c.step, -1, c.avg_mse, c.avg_mse));
            for (i, m) in c.per_gvf_mse.iter().enumerate() {
                rows.push((&r.algo, r.seed, c.step, i as i64, *m, c.avg_mse));
            }
        }
    }
    rows.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    let mut buf = String::with_capacity(rows.len() * 48);
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    for (algo, seed, step, gvf, m, avg) in rows {
        buf.push_str(&format!("{algo},{seed},{step},{gvf},{m},{avg}\n"));
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_estimates_score_zero() {
        let v = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let r = mse(&v, &v, &[0.5, 0.5]).unwrap();
        assert_eq!(r.sum, 0.0);
        assert_eq!(abs_error_map(&v, &v).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_example() {
        let r = mse(&[vec![0.0], vec![0.0]], &[vec![1.0], vec![2.0]], &[1.0]).unwrap();
        assert_eq!(r.per_gvf, vec![1.0, 4.0]);
        assert_eq!(r.sum, 5.0);
        assert_eq!(r.avg, 2.5);
    }

    #[test]
    fn abs_error_examples() {
        assert_eq!(
            abs_error_map(&[vec![1.0, 0.0]], &[vec![0.5, 2.0]]).unwrap(),
            vec![0.5, 2.0]
        );
        assert_eq!(
            abs_error_map(&[vec![0.0], vec![0.0]], &[vec![2.0], vec![-4.0]]).unwrap(),
            vec![3.0]
        );
    }

    #[test]
    fn shape_errors() {
        assert!(mse(&[vec![0.0]], &[], &[1.0]).is_err());
        assert!(mse(&[vec![0.0, 1.0]], &[vec![0.0]], &[1.0]).is_err());
        assert!(abs_error_map(&[vec![0.0, 1.0]], &[vec![0.0]]).is_err());
    }

    #[test]
    fn weights_cover_only_included_states() {
        assert_eq!(
            uniform_weights([true, false, true, true]),
            vec![1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0]
        );
    }

    #[test]
    fn checkpoints_must_increase() {
        let mut r = RunRecord::new("x", 0);
        let cp = |step| Checkpoint {
            step,
            per_gvf_mse: vec![0.0],
            avg_mse: 0.0,
        };
        r.push(cp(0)).unwrap();
        r.push(cp(10)).unwrap();
        assert!(r.push(cp(10)).is_err());
        assert_eq!(r.avg_mse_at(15), Some(0.0));
        assert_eq!(r.avg_mse_at(5), Some(0.0));
    }

    #[test]
    fn csv_is_sorted_with_average_rows() {
        let mut b = RunRecord::new("b", 1);
        b.push(Checkpoint {
            step: 0,
            per_gvf_mse: vec![2.0, 4.0],
            avg_mse: 3.0,
        })
        .unwrap();
        let mut a = RunRecord::new("a", 0);
        a.push(Checkpoint {
            step: 0,
            per_gvf_mse: vec![0.5],
            avg_mse: 0.5,
        })
        .unwrap();
        let mut out = Vec::new();
        write_csv(&[b, a], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "algo,seed,step,gvf_id,mse,avg_mse\n\
             a,0,0,-1,0.5,0.5\n\
             a,0,0,0,0.5,0.5\n\
             b,1,0,-1,3,3\n\
             b,1,0,0,2,3\n\
             b,1,0,1,4,3\n"
        );
    }

    proptest! {
        #[test]
        fn mse_scales_quadratically(errs in proptest::collection::vec(-10.0f64..10.0, 1..8)) {
            let n = errs.len();
            let truth = vec![vec![0.0; n]];
            let once = mse(&truth, &[errs.clone()], &vec![1.0 / n as f64; n]).unwrap();
            let twice = mse(&truth, &[errs.iter().map(|e| 2.0 * e).collect()], &vec![1.0 / n as f64; n]).unwrap();
            prop_assert!(once.sum >= 0.0);
            prop_assert!((twice.sum - 4.0 * once.sum).abs() <= 1e-9 * (1.0 + once.sum));
        }
    }
}
