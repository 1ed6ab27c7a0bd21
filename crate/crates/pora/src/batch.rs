//! Parallel episode execution.
//!
//! Episodes are independent and fully determined by their spec, so running
//! them on any number of threads and sorting by seed yields the same reports.

use rayon::prelude::*;

use pora_core::analysis::{calibrate_beta_sim_with, config_with_beta, SimCalibration};
use pora_core::sim::{run_episode, BatchSummary, EpisodeReport, ScenarioSpec, SimConfig};

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

/// Worker count used when none is given.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Run every spec; reports come back sorted by seed (ties keep input order).
pub fn run_parallel(
    specs: &[ScenarioSpec],
    cfg: &SimConfig,
    workers: usize,
) -> pora_core::Result<(Vec<EpisodeReport>, BatchSummary)> {
    let mut reports = pool(workers).install(|| {
        specs
            .par_iter()
            .map(|s| run_episode(s, cfg))
            .collect::<pora_core::Result<Vec<_>>>()
    })?;
    reports.sort_by_key(|r| r.seed);
    let summary = BatchSummary::from_reports(&reports)?;
    Ok((reports, summary))
}

/// Simulation-based β calibration with each β's batch run in parallel.
pub fn calibrate_beta_parallel(
    specs: &[ScenarioSpec],
    betas: &[f64],
    base: &SimConfig,
    workers: usize,
) -> pora_core::Result<SimCalibration> {
    calibrate_beta_sim_with(betas, |beta| {
        run_parallel(specs, &config_with_beta(base, beta), workers).map(|(_, s)| s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pora_core::sim::{generate_scenario, run_batch, Family, FamilyParams};

    #[test]
    fn matches_sequential_batch() {
        let p = FamilyParams {
            duration: 4.0,
            ..FamilyParams::default()
        };
        let specs: Vec<_> = (0..6)
            .map(|i| generate_scenario(Family::ALL[i % 4], 20 + i as u64, &p).unwrap())
            .collect();
        let cfg = SimConfig::default();
        let (seq, seq_summary) = run_batch(&specs, &cfg).unwrap();
        let (par, par_summary) = run_parallel(&specs, &cfg, 3).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq_summary, par_summary);
    }
}
