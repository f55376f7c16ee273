//! CSV output: one row per iteration for an episode, one row per run for a
//! Monte Carlo batch. Rates are written in Mbps, LF line endings.

use std::io::Write;
use std::path::Path;

use super::episode::EpisodeRecord;
use super::montecarlo::{MonteCarloSummary, RunOutcome};
use crate::error::{Error, Result};

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn episode_header(n_users: usize) -> Vec<String> {
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=n_users).map(|u| format!("rate_user_{u}")));
    header.push("reward".into());
    header.push("epsilon".into());
    header
}

pub fn write_episode<W: Write>(record: &EpisodeRecord, out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(episode_header(record.rates.len()))?;
    for t in 0..record.iterations() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(record.rates.iter().map(|trace| (trace[t] / 1e6).to_string()));
        row.push(record.rewards[t].to_string());
        row.push(record.epsilons[t].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(summary: &MonteCarloSummary, out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(["run_index", "seed", "converged", "convergence_iteration"])?;
    for r in &summary.runs {
        w.write_record([
            r.run_index.to_string(),
            r.seed.to_string(),
            u8::from(r.convergence_iteration.is_some()).to_string(),
            r.convergence_iteration.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_episode_csv(record: &EpisodeRecord, path: &Path) -> Result<()> {
    write_episode(record, create(path)?).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_summary_csv(summary: &MonteCarloSummary, path: &Path) -> Result<()> {
    write_summary(summary, create(path)?).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub iteration: usize,
    pub rates_mbps: Vec<f64>,
    pub reward: f64,
    pub epsilon: f64,
}

fn parse_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).ok_or_else(|| parse_err(path, format!("missing column {i}")))?;
    raw.parse::<T>()
        .map_err(|e| parse_err(path, format!("column {i} ({raw:?}): {e}")))
}

pub fn read_episode_csv(path: &Path) -> Result<Vec<EpisodeRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.len() < 3 || header.get(0) != Some("iteration") {
        return Err(parse_err(path, "unexpected header"));
    }
    let n_users = header.len() - 3;
    if episode_header(n_users).iter().map(String::as_str).ne(header.iter()) {
        return Err(parse_err(path, "unexpected header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(EpisodeRow {
            iteration: field(path, &rec, 0)?,
            rates_mbps: (1..=n_users).map(|i| field(path, &rec, i)).collect::<Result<_>>()?,
            reward: field(path, &rec, n_users + 1)?,
            epsilon: field(path, &rec, n_users + 2)?,
        });
    }
    Ok(rows)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<RunOutcome>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(["run_index", "seed", "converged", "convergence_iteration"]) {
        return Err(parse_err(path, "unexpected header"));
    }
    let mut runs = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let converged: u8 = field(path, &rec, 2)?;
        let convergence_iteration = match converged {
            0 => None,
            1 => Some(field(path, &rec, 3)?),
            other => return Err(parse_err(path, format!("converged flag {other}"))),
        };
        runs.push(RunOutcome {
            run_index: field(path, &rec, 0)?,
            seed: field(path, &rec, 1)?,
            convergence_iteration,
            steady_state_gap: None,
        });
    }
    Ok(runs)
}
