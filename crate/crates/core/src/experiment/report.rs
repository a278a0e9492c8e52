//! CSV output of sweep results.
//!
//! Columns: `estimator, n_rollouts, n_trials, n_failed, bias_0 .. bias_{d-1},
//! bias_norm, var_trace, rmse, se_bias_norm`. Reals are written with 12
//! significant digits. `bias_norm` is the L2 norm of the mean error,
//! `var_trace` the trace of the unbiased per-component variance, and `rmse`
//! the root mean squared L2 error.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::sweep::SweepResult;
use crate::error::{Error, Result};

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub estimator: String,
    pub n_rollouts: usize,
    pub n_trials: usize,
    pub n_failed: usize,
    pub bias: Vec<f64>,
    pub bias_norm: f64,
    pub var_trace: f64,
    pub rmse: f64,
    pub se_bias_norm: f64,
}

fn fmt_real(x: f64) -> String {
    format!("{x:.11e}")
}

fn header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["estimator", "n_rollouts", "n_trials", "n_failed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..dim).map(|k| format!("bias_{k}")));
    h.extend(
        ["bias_norm", "var_trace", "rmse", "se_bias_norm"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

/// Writes one row per cell, in sweep order (estimator, then rollout count).
pub fn write_csv_to<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(result.dim))?;
    for c in &result.cells {
        let mut rec = vec![
            c.estimator.clone(),
            c.n_rollouts.to_string(),
            c.n_trials.to_string(),
            c.n_failed.to_string(),
        ];
        rec.extend(c.bias.iter().map(|b| fmt_real(*b)));
        rec.extend([c.bias_norm, c.var_trace, c.rmse, c.se_bias_norm].map(fmt_real));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(result, std::io::BufWriter::new(file))
}

pub fn read_csv(path: &Path) -> Result<Vec<CellSummary>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing CSV column {name:?}")))
    };
    let bias_cols: Vec<usize> = (0..)
        .map_while(|k| headers.iter().position(|h| h == format!("bias_{k}")))
        .collect();
    let idx = [
        col("estimator")?,
        col("n_rollouts")?,
        col("n_trials")?,
        col("n_failed")?,
        col("bias_norm")?,
        col("var_trace")?,
        col("rmse")?,
        col("se_bias_norm")?,
    ];
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let int = |i: usize| {
            field(i)
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("{:?}: {e}", field(i))))
        };
        let real = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{:?}: {e}", field(i))))
        };
        out.push(CellSummary {
            estimator: field(idx[0]).to_string(),
            n_rollouts: int(idx[1])?,
            n_trials: int(idx[2])?,
            n_failed: int(idx[3])?,
            bias: bias_cols.iter().map(|&i| real(i)).collect::<Result<_>>()?,
            bias_norm: real(idx[4])?,
            var_trace: real(idx[5])?,
            rmse: real(idx[6])?,
            se_bias_norm: real(idx[7])?,
        });
    }
    Ok(out)
}

impl From<&super::sweep::CellStats> for CellSummary {
    fn from(c: &super::sweep::CellStats) -> Self {
        Self {
            estimator: c.estimator.clone(),
            n_rollouts: c.n_rollouts,
            n_trials: c.n_trials,
            n_failed: c.n_failed,
            bias: c.bias.clone(),
            bias_norm: c.bias_norm,
            var_trace: c.var_trace,
            rmse: c.rmse,
            se_bias_norm: c.se_bias_norm,
        }
    }
}

impl SweepResult {
    pub fn summaries(&self) -> Vec<CellSummary> {
        self.cells.iter().map(CellSummary::from).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::sweep::CellStats;

    fn fake_result(estimators: &[&str], counts: &[usize]) -> SweepResult {
        let truth = vec![0.25, -1.5];
        let mut cells = Vec::new();
        for (i, e) in estimators.iter().enumerate() {
            for &n in counts {
                let est: Vec<Vec<f64>> = (0..5)
                    .map(|t| {
                        vec![
                            0.25 + 0.013 * (t + i) as f64 / n as f64,
                            -1.5 + 1.0 / (t as f64 + 3.7),
                        ]
                    })
                    .collect();
                cells.push(CellStats::from_estimates(e, n, &est, i, &truth));
            }
        }
        SweepResult {
            dim: 2,
            ground_truth: truth,
            cells,
        }
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let mut buf = Vec::new();
        write_csv_to(&fake_result(&[], &[]), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "estimator,n_rollouts,n_trials,n_failed,bias_0,bias_1,bias_norm,var_trace,rmse,se_bias_norm\n"
        );
    }

    #[test]
    fn row_count_and_order() {
        let mut buf = Vec::new();
        write_csv_to(
            &fake_result(&["standard", "compatible"], &[10, 30, 100]),
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 6);
        assert!(rows[0].starts_with("standard,10,"));
        assert!(rows[2].starts_with("standard,100,"));
        assert!(rows[3].starts_with("compatible,10,"));
    }

    #[test]
    fn round_trip_to_printed_precision() {
        let result = fake_result(&["standard", "compatible"], &[10, 300]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_csv(&result, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), result.cells.len());
        let rel = |a: f64, b: f64| (a - b).abs() <= 5e-12 * a.abs().max(b.abs());
        for (r, c) in back.iter().zip(&result.cells) {
            assert_eq!(r.estimator, c.estimator);
            assert_eq!(
                (r.n_rollouts, r.n_trials, r.n_failed),
                (c.n_rollouts, c.n_trials, c.n_failed)
            );
            for (x, y) in r.bias.iter().zip(&c.bias) {
                assert!(rel(*x, *y));
            }
            assert!(rel(r.bias_norm, c.bias_norm));
            assert!(rel(r.var_trace, c.var_trace));
            assert!(rel(r.rmse, c.rmse));
            assert!(rel(r.se_bias_norm, c.se_bias_norm));
        }
        // the printed text itself survives a second write unchanged
        let again = fmt_real(back[1].rmse);
        assert_eq!(again, fmt_real(result.cells[1].rmse));
    }
}
