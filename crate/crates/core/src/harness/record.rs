//! Run records: one row per collected episode, written as CSV with the
//! fixed header `seed,episode,steps,return_mean,return_std,seconds`.

use std::path::Path;

use crate::error::{GradError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecordRow {
    pub seed: u64,
    pub episode: usize,
    /// Cumulative environment steps (physics steps, action repeat included).
    pub steps: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRecordRow>,
}

pub const CSV_HEADER: &str = "seed,episode,steps,return_mean,return_std,seconds";

impl RunRecord {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                r.seed, r.episode, r.steps, r.return_mean, r.return_std, r.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| GradError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Per-seed final evaluation returns (the last row of each seed).
    pub fn final_returns(&self) -> Vec<(u64, f64)> {
        let mut out: Vec<(u64, f64)> = Vec::new();
        for row in &self.rows {
            match out.iter_mut().find(|(s, _)| *s == row.seed) {
                Some(slot) => slot.1 = row.return_mean,
                None => out.push((row.seed, row.return_mean)),
            }
        }
        out
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_header_and_stable_formatting() {
        let rec = RunRecord {
            rows: vec![RunRecordRow {
                seed: 1,
                episode: 0,
                steps: 1000,
                return_mean: -25.125,
                return_std: 0.5,
                seconds: 0.0,
            }],
        };
        let csv = rec.to_csv();
        assert!(csv.starts_with("seed,episode,steps,return_mean,return_std,seconds\n"));
        assert!(csv.contains("1,0,1000,-25.125,0.5,0.000000"));
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
