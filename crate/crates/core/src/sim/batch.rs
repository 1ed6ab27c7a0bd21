use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::engine::{run_episode, EpisodeReport, Outcome, SimConfig};
use super::ScenarioSpec;
use crate::error::{Error, Result};

/// Aggregates over a batch, recomputable from the reports alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub episodes: usize,
    pub crash_episodes: usize,
    pub avg_conflicts: f64,
    pub collisions_per_100: f64,
    pub avg_return: f64,
    pub min_return: f64,
    pub avg_travel_time: f64,
}

impl BatchSummary {
    pub fn from_reports(reports: &[EpisodeReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptyInput("episode reports"));
        }
        let n = reports.len() as f64;
        let conflicts: u64 = reports.iter().map(|r| r.conflicts as u64).sum();
        let collisions: u64 = reports.iter().map(|r| r.collisions as u64).sum();
        Ok(Self {
            episodes: reports.len(),
            crash_episodes: reports
                .iter()
                .filter(|r| r.outcome == Outcome::Crash)
                .count(),
            avg_conflicts: conflicts as f64 / n,
            collisions_per_100: 100.0 * collisions as f64 / n,
            avg_return: reports.iter().map(|r| r.episode_return).sum::<f64>() / n,
            min_return: reports
                .iter()
                .map(|r| r.episode_return)
                .fold(f64::INFINITY, f64::min),
            avg_travel_time: reports.iter().map(|r| r.travel_time).sum::<f64>() / n,
        })
    }
}

/// Run every spec in order.
pub fn run_batch(
    specs: &[ScenarioSpec],
    cfg: &SimConfig,
) -> Result<(Vec<EpisodeReport>, BatchSummary)> {
    if specs.is_empty() {
        return Err(Error::EmptyInput("scenario specs"));
    }
    let reports = specs
        .iter()
        .map(|s| run_episode(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let summary = BatchSummary::from_reports(&reports)?;
    Ok((reports, summary))
}
