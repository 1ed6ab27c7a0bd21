//! Occupancy prediction.
//!
//! [`OccupancyPredictor`] is the seam where any heatmap generator plugs in.
//! [`AnalyticPredictor`] is the built-in baseline: every agent's footprint is
//! advected under a simple motion model and rasterized as an anisotropic
//! Gaussian whose spread grows with the prediction offset.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, OccupancyGrid};
use crate::types::{AgentState, OrientedBox, Pose2, Vec2};

/// Blobs are cut off beyond this many standard deviations per axis.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionModel {
    ConstantVelocity,
    ConstantAcceleration,
}

/// Height of an agent's blob as it widens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlobPeak {
    /// Peak stays at 1: the advected center is always considered occupied.
    #[default]
    Unit,
    /// Peak shrinks so the blob integral keeps its `t = 0` value.
    MassPreserving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Number of future steps `K`.
    pub horizon_steps: usize,
    pub step_dt: f64,
    pub position_sigma0: f64,
    /// Growth of the positional standard deviation, m/s.
    pub sigma_growth: f64,
    pub motion_model: MotionModel,
    #[serde(default)]
    pub blob_peak: BlobPeak,
    /// Row-major; `false` marks non-drivable cells. Must match the target grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drivable_mask: Option<Vec<bool>>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 6,
            step_dt: 0.5,
            position_sigma0: 0.3,
            sigma_growth: 0.4,
            motion_model: MotionModel::ConstantAcceleration,
            blob_peak: BlobPeak::Unit,
            drivable_mask: None,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::InvalidParameter {
                what: "horizon steps",
                value: 0.0,
            });
        }
        if !(self.step_dt.is_finite() && self.step_dt > 0.0) {
            return Err(Error::InvalidParameter {
                what: "step dt",
                value: self.step_dt,
            });
        }
        if !(self.position_sigma0.is_finite() && self.position_sigma0 >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "position sigma0",
                value: self.position_sigma0,
            });
        }
        if !(self.sigma_growth.is_finite() && self.sigma_growth >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "sigma growth",
                value: self.sigma_growth,
            });
        }
        Ok(())
    }

    /// Offsets `k * step_dt` for `k = 1..=K`.
    pub fn offsets(&self) -> Vec<f64> {
        (1..=self.horizon_steps)
            .map(|k| k as f64 * self.step_dt)
            .collect()
    }
}

/// Anything that turns the current scene into future occupancy grids.
pub trait OccupancyPredictor {
    /// Grids for the configured horizon; `t0` is the current time.
    fn predict(&self, agents: &[AgentState], spec: &GridSpec, t0: f64)
        -> Result<Vec<OccupancyGrid>>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalyticPredictor {
    pub config: PredictorConfig,
}

impl AnalyticPredictor {
    pub fn new(config: PredictorConfig) -> Self {
        Self { config }
    }
}

impl OccupancyPredictor for AnalyticPredictor {
    fn predict(
        &self,
        agents: &[AgentState],
        spec: &GridSpec,
        t0: f64,
    ) -> Result<Vec<OccupancyGrid>> {
        predict_at(agents, spec, &self.config, t0, &self.config.offsets())
    }
}

/// K future grids at `t = k * step_dt`, `k = 1..=K`.
pub fn predict_occupancy(
    agents: &[AgentState],
    spec: &GridSpec,
    cfg: &PredictorConfig,
) -> Result<Vec<OccupancyGrid>> {
    predict_at(agents, spec, cfg, 0.0, &cfg.offsets())
}

/// Grids at `t0 + offset` for each offset (offset 0 yields the current-time
/// occupancy estimate).
pub fn predict_at(
    agents: &[AgentState],
    spec: &GridSpec,
    cfg: &PredictorConfig,
    t0: f64,
    offsets: &[f64],
) -> Result<Vec<OccupancyGrid>> {
    cfg.validate()?;
    if let Some(mask) = &cfg.drivable_mask {
        if mask.len() != spec.len() {
            return Err(Error::ShapeMismatch {
                expected: spec.len(),
                found: mask.len(),
            });
        }
    }
    if agents.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("agent state"));
    }
    if offsets.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
        return Err(Error::NonFinite("prediction offset"));
    }
    Ok(offsets
        .iter()
        .map(|&tau| {
            let mut free = vec![1.0f64; spec.len()];
            for agent in agents {
                let mask = if agent.kind.is_vehicle() {
                    cfg.drivable_mask.as_deref()
                } else {
                    None
                };
                splat_agent(&mut free, spec, agent, cfg, tau, mask);
            }
            let values = free.into_iter().map(|q| (1.0 - q).clamp(0.0, 1.0)).collect();
            OccupancyGrid::from_trusted(*spec, t0 + tau, values)
        })
        .collect())
}

/// Center pose of `agent` after `tau` seconds under `model`.
pub fn advect(agent: &AgentState, tau: f64, model: MotionModel) -> Pose2 {
    let pose = agent.pose();
    let v = agent.velocity.as_vec();
    let displacement = match model {
        MotionModel::ConstantVelocity => v * tau,
        MotionModel::ConstantAcceleration => {
            let fwd = pose.forward();
            let s0 = v.dot(fwd);
            let lateral = v - fwd * s0;
            let a = agent.acceleration;
            // Braking ends at standstill rather than reversing.
            let t = if s0 * a < 0.0 {
                tau.min(-s0 / a)
            } else {
                tau
            };
            fwd * (s0 * t + 0.5 * a * t * t) + lateral * tau
        }
    };
    Pose2::new(pose.x + displacement.x, pose.y + displacement.y, pose.heading)
}

/// Multiply `free` (per-cell probability of staying free) by the agent's
/// non-occupancy at offset `tau`.
fn splat_agent(
    free: &mut [f64],
    spec: &GridSpec,
    agent: &AgentState,
    cfg: &PredictorConfig,
    tau: f64,
    mask: Option<&[bool]>,
) {
    let center = advect(agent, tau, cfg.motion_model);
    let (hl, hw) = agent.bbox.half_extents();
    let spread = cfg.position_sigma0 + cfg.sigma_growth * tau;
    let sigma_along = hl + spread;
    let sigma_across = hw + spread;
    let amplitude = match cfg.blob_peak {
        BlobPeak::Unit => 1.0,
        BlobPeak::MassPreserving => {
            ((hl + cfg.position_sigma0) / sigma_along) * ((hw + cfg.position_sigma0) / sigma_across)
        }
    };

    let reach = OrientedBox {
        center,
        length: 2.0 * TRUNCATION_SIGMAS * sigma_along,
        width: 2.0 * TRUNCATION_SIGMAS * sigma_across,
    };
    let Some((r0, r1, c0, c1)) = cell_range(spec, &reach) else {
        return;
    };
    let fwd = center.forward();
    let left = center.left();
    let inv_a = 1.0 / (sigma_along * sigma_along);
    let inv_c = 1.0 / (sigma_across * sigma_across);
    let lim_a = TRUNCATION_SIGMAS * sigma_along;
    let lim_c = TRUNCATION_SIGMAS * sigma_across;
    let c_pos = center.position();
    for r in r0..r1 {
        for c in c0..c1 {
            let idx = spec.index(r, c);
            if let Some(m) = mask {
                if !m[idx] {
                    continue;
                }
            }
            let d = spec.cell_center_world(r, c) - c_pos;
            let a = d.dot(fwd);
            let b = d.dot(left);
            if a.abs() > lim_a || b.abs() > lim_c {
                continue;
            }
            let p = amplitude * (-0.5 * (a * a * inv_a + b * b * inv_c)).exp();
            free[idx] *= 1.0 - p.clamp(0.0, 1.0);
        }
    }
}

/// Half-open `(row_start, row_end, col_start, col_end)` covering the box,
/// clipped to the grid; `None` if disjoint.
pub(crate) fn cell_range(spec: &GridSpec, b: &OrientedBox) -> Option<(usize, usize, usize, usize)> {
    let mut rmin = f64::INFINITY;
    let mut rmax = f64::NEG_INFINITY;
    let mut cmin = f64::INFINITY;
    let mut cmax = f64::NEG_INFINITY;
    for corner in b.corners() {
        let (r, c) = spec.world_to_cell(corner);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        cmin = cmin.min(c);
        cmax = cmax.max(c);
    }
    let clip = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
        let lo = lo.floor().max(0.0);
        let hi = (hi.ceil() + 1.0).min(n as f64);
        if hi <= lo {
            None
        } else {
            Some((lo as usize, hi as usize))
        }
    };
    let (r0, r1) = clip(rmin, rmax, spec.rows)?;
    let (c0, c1) = clip(cmin, cmax, spec.cols)?;
    Some((r0, r1, c0, c1))
}

/// Binary occupancy: 1 where a cell center lies inside any agent's box. The
/// grid is stamped `t = 0`; use [`OccupancyGrid::with_time`] to re-stamp.
pub fn ground_truth_grid(agents: &[AgentState], spec: &GridSpec) -> OccupancyGrid {
    let mut values = vec![0.0; spec.len()];
    for agent in agents {
        let Some((r0, r1, c0, c1)) = cell_range(spec, &agent.bbox) else {
            continue;
        };
        for r in r0..r1 {
            for c in c0..c1 {
                if agent.bbox.contains(spec.cell_center_world(r, c)) {
                    values[spec.index(r, c)] = 1.0;
                }
            }
        }
    }
    OccupancyGrid::from_trusted(*spec, 0.0, values)
}

/// World position of the center of the most occupied cell.
pub fn argmax_position(g: &OccupancyGrid) -> Vec2 {
    let (r, c, _) = g.argmax();
    g.spec().cell_center_world(r, c)
}
