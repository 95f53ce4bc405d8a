//! Median and interquartile statistics across seeds.

use crate::error::{HarnessError, Result};
use crate::runner::RunResult;

/// Percentile `q` in [0, 1] of ascending `sorted`, interpolating linearly
/// between order statistics. NaN for empty input.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Median, 25th and 75th percentiles of the finite values in `values`.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    (percentile(&v, 0.5), percentile(&v, 0.25), percentile(&v, 0.75))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub episode: u64,
    pub steps: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    /// Seeds with a finite evaluation at this episode.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Evaluation-return statistics per episode.
    pub rows: Vec<AggregateRow>,
    pub median_episodes_to_solve: f64,
    pub solved: usize,
    pub failed: usize,
    pub seeds: usize,
}

/// Aggregates evaluation returns across seeds, episode by episode.
///
/// Runs that stop early (a solved chain) keep contributing their last row.
/// Failed runs are left out of the curves and count as unsolved.
pub fn aggregate_runs(results: &[RunResult]) -> Result<Aggregate> {
    if results.is_empty() {
        return Err(HarnessError::Config("cannot aggregate zero runs".into()));
    }
    let mut solve: Vec<f64> = results.iter().map(|r| r.episodes_to_solve() as f64).collect();
    solve.sort_by(f64::total_cmp);
    let curves: Vec<&RunResult> = results.iter().filter(|r| !r.failed() && !r.rows.is_empty()).collect();
    let len = curves.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    let rows = (0..len)
        .map(|i| {
            fn at(r: &RunResult, i: usize) -> &crate::runner::Row {
                &r.rows[i.min(r.rows.len() - 1)]
            }
            let evals: Vec<f64> = curves.iter().map(|r| at(r, i).eval_return).collect();
            let steps: Vec<f64> = curves.iter().map(|r| at(r, i).steps as f64).collect();
            let (median, p25, p75) = quartiles(&evals);
            AggregateRow {
                episode: i as u64 + 1,
                steps: quartiles(&steps).0,
                median,
                p25,
                p75,
                runs: evals.iter().filter(|x| x.is_finite()).count(),
            }
        })
        .collect();
    Ok(Aggregate {
        rows,
        median_episodes_to_solve: percentile(&solve, 0.5),
        solved: results.iter().filter(|r| r.solved_at().is_some()).count(),
        failed: results.iter().filter(|r| r.failed()).count(),
        seeds: results.len(),
    })
}
