//! Batches of independent episodes and their convergence statistics.
//!
//! Run `i` of a batch always uses seed `master + i`, so a run's outcome does
//! not depend on how many other runs share the batch or on whether the
//! batch executes in parallel.

use super::config::ExperimentConfig;
use super::episode::{run_episode, EpisodeRecord};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_index: usize,
    pub seed: u64,
    pub convergence_iteration: Option<usize>,
    /// Mbps; present only for converged runs.
    pub steady_state_gap: Option<f64>,
}

impl RunOutcome {
    fn from_record(run_index: usize, record: &EpisodeRecord) -> Self {
        Self {
            run_index,
            seed: record.seed,
            convergence_iteration: record.convergence_iteration,
            steady_state_gap: record.steady_state_gap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub runs: Vec<RunOutcome>,
    /// Converged runs' iterations, ascending.
    pub converged_iterations: Vec<usize>,
    pub median: Option<f64>,
    pub convergence_rate: f64,
    /// Empirical CDF of converged runs: `(iteration, fraction ≤ iteration)`.
    pub cdf: Vec<(usize, f64)>,
    pub mean_steady_state_gap: Option<f64>,
}

pub fn median(sorted: &[usize]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2] as f64),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0),
    }
}

impl MonteCarloSummary {
    pub fn from_outcomes(runs: Vec<RunOutcome>) -> Self {
        let mut converged: Vec<usize> = runs.iter().filter_map(|r| r.convergence_iteration).collect();
        converged.sort_unstable();
        let n_conv = converged.len();
        let mut cdf: Vec<(usize, f64)> = Vec::new();
        for (i, it) in converged.iter().enumerate() {
            let frac = (i + 1) as f64 / n_conv as f64;
            match cdf.last_mut() {
                Some(last) if last.0 == *it => last.1 = frac,
                _ => cdf.push((*it, frac)),
            }
        }
        let gaps: Vec<f64> = runs.iter().filter_map(|r| r.steady_state_gap).collect();
        let mean_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
        Self {
            convergence_rate: if runs.is_empty() { 0.0 } else { n_conv as f64 / runs.len() as f64 },
            median: median(&converged),
            converged_iterations: converged,
            cdf,
            mean_steady_state_gap: mean_gap,
            runs,
        }
    }

    /// Fraction of converged runs that converged by iteration `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        self.cdf
            .iter()
            .take_while(|(it, _)| (*it as f64) <= x)
            .last()
            .map_or(0.0, |(_, f)| *f)
    }
}

fn run_one(cfg: &ExperimentConfig, i: usize) -> Result<RunOutcome> {
    let seed = cfg.seed.wrapping_add(i as u64);
    let record = run_episode(cfg, seed)?;
    Ok(RunOutcome::from_record(i, &record))
}

pub fn run_monte_carlo_sequential(cfg: &ExperimentConfig, n: usize) -> Result<MonteCarloSummary> {
    cfg.validate()?;
    let runs = (0..n).map(|i| run_one(cfg, i)).collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloSummary::from_outcomes(runs))
}

#[cfg(feature = "parallel")]
pub fn run_monte_carlo_parallel(cfg: &ExperimentConfig, n: usize) -> Result<MonteCarloSummary> {
    use rayon::prelude::*;

    cfg.validate()?;
    let runs = (0..n)
        .into_par_iter()
        .map(|i| run_one(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloSummary::from_outcomes(runs))
}

/// Runs `n` episodes with seeds `cfg.seed + i`, in parallel when the
/// `parallel` feature is enabled.
pub fn run_monte_carlo(cfg: &ExperimentConfig, n: usize) -> Result<MonteCarloSummary> {
    #[cfg(feature = "parallel")]
    {
        run_monte_carlo_parallel(cfg, n)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_monte_carlo_sequential(cfg, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(i: usize, c: Option<usize>) -> RunOutcome {
        RunOutcome {
            run_index: i,
            seed: i as u64,
            convergence_iteration: c,
            steady_state_gap: c.map(|_| 0.25),
        }
    }

    #[test]
    fn summary_statistics() {
        let s = MonteCarloSummary::from_outcomes(vec![
            outcome(0, Some(300)),
            outcome(1, None),
            outcome(2, Some(100)),
            outcome(3, Some(200)),
        ]);
        assert_eq!(s.converged_iterations, vec![100, 200, 300]);
        assert_eq!(s.median, Some(200.0));
        assert_eq!(s.convergence_rate, 0.75);
        assert_eq!(s.cdf_at(99.0), 0.0);
        assert!((s.cdf_at(200.0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.cdf_at(1e9), 1.0);
        assert_eq!(s.mean_steady_state_gap, Some(0.25));
    }

    #[test]
    fn even_median_and_empty() {
        assert_eq!(median(&[1, 3]), Some(2.0));
        assert_eq!(median(&[]), None);
        let s = MonteCarloSummary::from_outcomes(vec![outcome(0, None)]);
        assert_eq!(s.convergence_rate, 0.0);
        assert_eq!(s.median, None);
        assert!(s.cdf.is_empty());
    }

    #[test]
    fn cdf_at_median_near_half() {
        let runs: Vec<_> = (0..21).map(|i| outcome(i, Some(50 + (i * 37) % 400))).collect();
        let s = MonteCarloSummary::from_outcomes(runs);
        let n = s.converged_iterations.len() as f64;
        assert!((s.cdf_at(s.median.unwrap()) - 0.5).abs() <= 1.0 / n);
    }
}
