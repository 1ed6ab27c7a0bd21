//! Multi-episode studies shared by the CLI and the acceptance checks.

use rayon::prelude::*;
use serde::Serialize;

use pora_core::analysis::{
    correlate_delta_p, delta_p_series, kl_separation, CorrelationSummary, DeltaPSummary,
    KlDirection, SeparationReport,
};
use pora_core::sim::{
    approach_separate_scenario, run_episode, BatchSummary, ControllerPolicy, EpisodeReport,
    MetricKind, Outcome, ScenarioSpec, SimConfig, EGO_ID,
};
use pora_core::types::AgentId;
use pora_core::{Error, Result};

use crate::batch::run_parallel;

/// A controller that never reacts: every threshold sits at 1.
pub fn passive_config(base: &SimConfig) -> SimConfig {
    SimConfig {
        metric: MetricKind::Ttc1,
        policy: ControllerPolicy {
            proceed_below: 1.0,
            brake_above: 1.0,
            resume_below: 1.0,
            ..base.policy
        },
        record_trajectory: true,
        record_metrics: Vec::new(),
        ..base.clone()
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationStudy {
    pub duration: f64,
    pub tick_dt: f64,
    pub summary: DeltaPSummary,
}

impl Default for CorrelationStudy {
    fn default() -> Self {
        Self {
            duration: 20.0,
            tick_dt: 0.1,
            summary: DeltaPSummary::MaxOccupancy,
        }
    }
}

/// Two-vehicle approach/separate episodes with seeds `seeds`, correlated
/// per scenario and aggregated.
pub fn correlation_study(
    seeds: &[u64],
    study: &CorrelationStudy,
    base: &SimConfig,
    workers: usize,
) -> Result<CorrelationSummary> {
    let cfg = passive_config(base);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let series = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let spec = approach_separate_scenario(seed, study.duration, study.tick_dt)?;
                let report = run_episode(&spec, &cfg)?;
                delta_p_series(
                    seed,
                    &report.trajectory,
                    EGO_ID,
                    AgentId(1),
                    &cfg.risk,
                    &cfg.predictor,
                    study.summary,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    correlate_delta_p(&series)
}

/// Per-tick values of `metric`, split by episode outcome.
pub fn pooled_samples(reports: &[EpisodeReport], metric: MetricKind) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut safe = Vec::new();
    let mut crash = Vec::new();
    for r in reports {
        let trace = r
            .recorded_trace(metric)
            .ok_or(Error::EmptyInput("recorded metric trace"))?;
        let dst = match r.outcome {
            Outcome::Safe => &mut safe,
            Outcome::Crash => &mut crash,
        };
        dst.extend(trace.iter().map(|p| p.1));
    }
    Ok((safe, crash))
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricSeparation {
    pub metric: MetricKind,
    pub report: SeparationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationStudy {
    pub controller: MetricKind,
    pub summary: BatchSummary,
    pub metrics: Vec<MetricSeparation>,
}

/// Run `specs` under `controller`, logging every metric in `metrics`, and
/// compare the per-tick crash and safe distributions of each.
pub fn separation_study(
    specs: &[ScenarioSpec],
    base: &SimConfig,
    controller: MetricKind,
    metrics: &[MetricKind],
    bins: usize,
    direction: KlDirection,
    workers: usize,
) -> Result<SeparationStudy> {
    let cfg = SimConfig {
        metric: controller,
        record_metrics: metrics.iter().copied().filter(|m| *m != controller).collect(),
        record_trajectory: false,
        ..base.clone()
    };
    let (reports, summary) = run_parallel(specs, &cfg, workers)?;
    let metrics = metrics
        .iter()
        .map(|&metric| {
            let (safe, crash) = pooled_samples(&reports, metric)?;
            Ok(MetricSeparation {
                metric,
                report: kl_separation(&safe, &crash, bins, direction)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparationStudy {
        controller,
        summary,
        metrics,
    })
}
