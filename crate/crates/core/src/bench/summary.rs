use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::runner::{read_rounds, RoundRecord};
use crate::error::{Error, Result};

/// Cumulative regret across repeats at one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub round: usize,
    pub repeats: usize,
    pub mean_cum_regret: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for one repeat.
    pub std_cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    /// Last row of every algorithm, in algorithm order.
    pub fn final_rows(&self) -> Vec<&SummaryRow> {
        let mut last: BTreeMap<&str, &SummaryRow> = BTreeMap::new();
        for r in &self.rows {
            last.insert(&r.algorithm, r);
        }
        last.into_values().collect()
    }

    pub fn final_row(&self, algorithm: &str) -> Option<&SummaryRow> {
        self.rows.iter().rev().find(|r| r.algorithm == algorithm)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text final-regret table.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{:<12} {:>7} {:>8} {:>14} {:>12}", "algorithm", "rounds", "repeats", "cum_regret", "std")?;
        for r in self.final_rows() {
            writeln!(
                out,
                "{:<12} {:>7} {:>8} {:>14.3} {:>12.3}",
                r.algorithm, r.round, r.repeats, r.mean_cum_regret, r.std_cum_regret
            )?;
        }
        Ok(())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates runs per algorithm. A run is one (file, repeat) pair; every run
/// of an algorithm must cover the same rounds.
pub fn summarize_records(files: &[Vec<RoundRecord>]) -> Result<Summary> {
    // algorithm -> run -> (rounds, cum_regret)
    let mut runs: BTreeMap<String, BTreeMap<(usize, usize), (Vec<usize>, Vec<f64>)>> = BTreeMap::new();
    for (f, records) in files.iter().enumerate() {
        for r in records {
            let run = runs.entry(r.algorithm.clone()).or_default().entry((f, r.repeat)).or_default();
            run.0.push(r.round);
            run.1.push(r.cum_regret);
        }
    }
    if runs.is_empty() {
        return Err(Error::Format("no round records to summarize".into()));
    }
    let mut rows = Vec::new();
    for (algorithm, by_run) in runs {
        let mut iter = by_run.iter();
        let (first_key, (grid, _)) = iter.next().expect("non-empty entry");
        for (key, (g, _)) in iter {
            if g != grid {
                return Err(Error::GridMismatch(format!(
                    "{algorithm}: run (file {}, repeat {}) has {} rounds, run (file {}, repeat {}) has {}",
                    first_key.0,
                    first_key.1,
                    grid.len(),
                    key.0,
                    key.1,
                    g.len()
                )));
            }
        }
        let n = by_run.len();
        for (i, &round) in grid.iter().enumerate() {
            let values: Vec<f64> = by_run.values().map(|(_, c)| c[i]).collect();
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                algorithm: algorithm.clone(),
                round,
                repeats: n,
                mean_cum_regret: mean,
                std_cum_regret: std,
            });
        }
    }
    Ok(Summary { rows })
}

pub fn summarize<P: AsRef<Path>>(paths: &[P]) -> Result<Summary> {
    if paths.is_empty() {
        return Err(Error::Config("summarize needs at least one round log".into()));
    }
    let files = paths.iter().map(read_rounds).collect::<Result<Vec<_>>>()?;
    summarize_records(&files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(algorithm: &str, repeat: usize, round: usize, cum: f64) -> RoundRecord {
        RoundRecord {
            round,
            repeat,
            algorithm: algorithm.into(),
            chosen_arm: 0,
            correct_arm: 0,
            reward: 0.0,
            regret: 0.0,
            cum_regret: cum,
            mean: 0.0,
            width: 0.0,
            psi1: 0.0,
            wallclock_ms: None,
        }
    }

    #[test]
    fn single_repeat_passes_through() {
        let recs = vec![record("a", 0, 1, 1.0), record("a", 0, 2, 1.0), record("a", 0, 3, 2.0)];
        let s = summarize_records(&[recs]).unwrap();
        let means: Vec<f64> = s.rows.iter().map(|r| r.mean_cum_regret).collect();
        assert_eq!(means, [1.0, 1.0, 2.0]);
        assert!(s.rows.iter().all(|r| r.std_cum_regret == 0.0));
        let rounds: Vec<usize> = s.rows.iter().map(|r| r.round).collect();
        assert_eq!(rounds, [1, 2, 3]);
    }

    #[test]
    fn two_repeats_use_the_sample_deviation() {
        let recs = vec![record("a", 0, 1, 10.0), record("a", 1, 1, 20.0)];
        let s = summarize_records(&[recs]).unwrap();
        let r = s.final_row("a").unwrap();
        assert_eq!(r.mean_cum_regret, 15.0);
        // sqrt(((10-15)^2 + (20-15)^2) / 1)
        assert!((r.std_cum_regret - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let recs = vec![record("a", 0, 1, 0.0), record("a", 0, 2, 0.0), record("a", 1, 1, 0.0)];
        assert!(matches!(summarize_records(&[recs]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn repeats_in_separate_files_are_separate_runs() {
        let a = vec![record("a", 0, 1, 2.0)];
        let b = vec![record("a", 0, 1, 4.0)];
        let s = summarize_records(&[a, b]).unwrap();
        assert_eq!(s.rows[0].repeats, 2);
        assert_eq!(s.rows[0].mean_cum_regret, 3.0);
    }
}
