//! Rank and linear correlation between occupancy change and relative motion,
//! aggregated across scenarios with `n - 3` weights.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{covering_spec, resample_window, GridSpec};
use crate::predictor::{predict_at, PredictorConfig};
use crate::risk::{build_safety_box, RiskParams, SafetyBox};
use crate::sim::TrajectoryRow;
use crate::types::{AgentId, AgentState, OrientedBox, Pose2, Velocity2};

/// Correlations are clamped this far inside `(-1, 1)` before `atanh`.
const FISHER_CLAMP: f64 = 1e-15;

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; ties share their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = avg;
        }
        i = j;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

/// Kendall's tau-b (tie-corrected).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let base = (concordant + discordant) as f64;
    let denom = ((base + ties_x as f64) * (base + ties_y as f64)).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// `tanh` of the weighted mean of `atanh(r)`.
pub fn fisher_z_mean(coeffs: &[(f64, f64)]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(r, w) in coeffs {
        let r = r.clamp(-1.0 + FISHER_CLAMP, 1.0 - FISHER_CLAMP);
        num += w * r.atanh();
        den += w;
    }
    (den > 0.0).then(|| (num / den).tanh())
}

pub fn weighted_mean(values: &[(f64, f64)]) -> Option<f64> {
    let den: f64 = values.iter().map(|v| v.1).sum();
    (den > 0.0).then(|| values.iter().map(|(x, w)| x * w).sum::<f64>() / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub pearson: f64,
    pub spearman: f64,
    pub kendall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCorrelation {
    pub id: u64,
    pub n: usize,
    #[serde(flatten)]
    pub coefficients: Coefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub per_scenario: Vec<ScenarioCorrelation>,
    /// Scenarios dropped for having fewer than 4 pairs or a constant series.
    pub excluded: Vec<u64>,
    pub aggregate: Coefficients,
}

/// Paired per-step changes for one scenario: `x` is the change in
/// center-to-center distance, `y` the occupancy-change summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSeries {
    pub id: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn scenario_coefficients(s: &PairSeries) -> Option<Coefficients> {
    if s.x.len() != s.y.len() || s.x.len() < 4 {
        return None;
    }
    Some(Coefficients {
        pearson: pearson(&s.x, &s.y)?,
        spearman: spearman(&s.x, &s.y)?,
        kendall: kendall_tau_b(&s.x, &s.y)?,
    })
}

/// Per-scenario coefficients plus the `n - 3` weighted aggregate (Fisher z for
/// Pearson and Spearman, plain weighted mean for Kendall).
pub fn correlate_delta_p(series: &[PairSeries]) -> Result<CorrelationSummary> {
    if series.is_empty() {
        return Err(Error::EmptyInput("scenario series"));
    }
    let mut per_scenario = Vec::new();
    let mut excluded = Vec::new();
    for s in series {
        match scenario_coefficients(s) {
            Some(coefficients) => per_scenario.push(ScenarioCorrelation {
                id: s.id,
                n: s.x.len(),
                coefficients,
            }),
            None => excluded.push(s.id),
        }
    }
    let weighted = |f: fn(&Coefficients) -> f64| -> Vec<(f64, f64)> {
        per_scenario
            .iter()
            .map(|c| (f(&c.coefficients), (c.n - 3) as f64))
            .collect()
    };
    let (Some(pearson), Some(spearman), Some(kendall)) = (
        fisher_z_mean(&weighted(|c| c.pearson)),
        fisher_z_mean(&weighted(|c| c.spearman)),
        weighted_mean(&weighted(|c| c.kendall)),
    ) else {
        return Err(Error::EmptyInput("non-degenerate scenarios"));
    };
    Ok(CorrelationSummary {
        per_scenario,
        excluded,
        aggregate: Coefficients {
            pearson,
            spearman,
            kendall,
        },
    })
}

/// Scalar reduction of the occupancy change inside the AV window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaPSummary {
    /// Change of the window's maximum occupancy.
    #[default]
    MaxOccupancy,
    /// Summed per-cell change over the inner region `phi`.
    SumOverPhi,
}

fn row_state(r: &TrajectoryRow) -> AgentState {
    AgentState {
        id: r.id,
        kind: r.kind,
        bbox: OrientedBox {
            center: Pose2::new(r.x, r.y, r.heading),
            length: r.length,
            width: r.width,
        },
        velocity: Velocity2::new(r.vx, r.vy),
        acceleration: r.ax,
        yaw_rate: 0.0,
    }
}

/// Snapshots of `ego` and `other` at each logged time both appear, in time order.
fn paired_states(
    rows: &[TrajectoryRow],
    ego: AgentId,
    other: AgentId,
) -> Vec<(f64, AgentState, AgentState)> {
    let mut by_t: Vec<(f64, Option<AgentState>, Option<AgentState>)> = Vec::new();
    for r in rows {
        if r.id != ego && r.id != other {
            continue;
        }
        let slot = match by_t.iter().position(|e| e.0 == r.t) {
            Some(i) => i,
            None => {
                by_t.push((r.t, None, None));
                by_t.len() - 1
            }
        };
        if r.id == ego {
            by_t[slot].1 = Some(row_state(r));
        } else {
            by_t[slot].2 = Some(row_state(r));
        }
    }
    by_t.sort_by(|a, b| a.0.total_cmp(&b.0));
    by_t.into_iter()
        .filter_map(|(t, a, b)| Some((t, a?, b?)))
        .collect()
}

fn summarize(values: &[f64], spec: &GridSpec, bx: &SafetyBox, how: DeltaPSummary) -> f64 {
    match how {
        DeltaPSummary::MaxOccupancy => values.iter().copied().fold(0.0, f64::max),
        DeltaPSummary::SumOverPhi => {
            let mut sum = 0.0;
            for r in 0..spec.rows {
                for c in 0..spec.cols {
                    let local = bx.anchor.to_local(spec.cell_center_world(r, c));
                    if bx.in_phi(local) {
                        sum += values[spec.index(r, c)];
                    }
                }
            }
            sum
        }
    }
}

/// Build the `(Δ distance, ΔP summary)` series of one two-vehicle episode.
///
/// At each logged step the safety box is sized from the current AV state. The
/// current occupancy (the predictor at offset 0) is read in that box around the
/// current AV pose, the previous step's occupancy in the same box geometry
/// around the previous AV pose.
pub fn delta_p_series(
    id: u64,
    rows: &[TrajectoryRow],
    ego: AgentId,
    other: AgentId,
    risk: &RiskParams,
    predictor: &PredictorConfig,
    how: DeltaPSummary,
) -> Result<PairSeries> {
    let states = paired_states(rows, ego, other);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for w in states.windows(2) {
        let (t0, av0, o0) = &w[0];
        let (t1, av1, o1) = &w[1];
        let bx = build_safety_box(
            &av1.bbox,
            av1.velocity.speed() * 3.6,
            &[o1.bbox],
            &risk.ssd,
        )?;
        let prev_box = bx.anchored_at(av0.pose());
        let win_curr = bx.window_spec(risk.cell_size)?;
        let win_prev = prev_box.window_spec(risk.cell_size)?;
        let global = covering_spec(&[win_prev, win_curr], risk.cell_size)?;
        let g1 = predict_at(core::slice::from_ref(o1), &global, predictor, *t1, &[0.0])?;
        let g0 = predict_at(core::slice::from_ref(o0), &global, predictor, *t0, &[0.0])?;
        let curr = resample_window(&g1[0], &win_curr);
        let prev = resample_window(&g0[0], &win_prev);
        let dp = summarize(curr.values(), &win_curr, &bx, how)
            - summarize(prev.values(), &win_prev, &prev_box, how);
        let d1 = (o1.pose().position() - av1.pose().position()).norm();
        let d0 = (o0.pose().position() - av0.pose().position()).norm();
        x.push(d1 - d0);
        y.push(dp);
    }
    Ok(PairSeries { id, x, y })
}
