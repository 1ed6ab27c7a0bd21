//! The risk score proper.
//!
//! For one timestep the pipeline is: size a safety box around the AV from
//! participant dimensions and the AV's stopping sight distance, cut the
//! matching window out of the global occupancy grid, weight each cell by the
//! conditional probability of a collision given occupancy, scale by the
//! change in occupancy since the previous step (a Cox-style hazard factor
//! normalized back into `[0, 1]`), and keep the worst cell.
//!
//! Box frame: x forward along the AV heading, y to the left, origin at the AV
//! body center. The inner region `phi` (guaranteed collision) is centered on
//! the origin; the outer region `Phi` keeps a rear margin of half the longest
//! participant behind the AV body and puts the whole stopping distance in
//! front.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{resample_window, GridSpec, OccupancyGrid, DEFAULT_CELL_SIZE};
use crate::types::{speed_kmh, OrientedBox, PlannedTrajectory, Pose2, Vec2, Velocity2};

/// Timestamp alignment tolerance between grids and plan samples.
pub const TIME_ALIGNMENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsdParams {
    /// Perception-reaction time, s.
    pub reaction_time: f64,
    /// Design deceleration, m/s^2.
    pub decel_rate: f64,
}

impl Default for SsdParams {
    fn default() -> Self {
        Self {
            reaction_time: 2.5,
            decel_rate: 3.4,
        }
    }
}

impl SsdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reaction_time.is_finite() && self.reaction_time >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "reaction time",
                value: self.reaction_time,
            });
        }
        if !(self.decel_rate.is_finite() && self.decel_rate > 0.0) {
            return Err(Error::InvalidParameter {
                what: "deceleration rate",
                value: self.decel_rate,
            });
        }
        Ok(())
    }
}

/// Stopping sight distance in meters for a speed in km/h.
pub fn stopping_sight_distance(speed_kmh: f64, p: &SsdParams) -> f64 {
    0.278 * speed_kmh * p.reaction_time + speed_kmh * speed_kmh / ((254.0 / 9.81) * p.decel_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxParams {
    pub beta: f64,
}

impl Default for CoxParams {
    fn default() -> Self {
        Self { beta: 1.5 }
    }
}

impl CoxParams {
    pub fn new(beta: f64) -> Result<Self> {
        let p = Self { beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "beta",
                value: self.beta,
            });
        }
        Ok(())
    }
}

/// Safety box `Phi` with its inner guaranteed-collision region `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyBox {
    /// Lateral extent of `Phi`.
    pub width: f64,
    /// Longitudinal extent of `Phi`.
    pub length: f64,
    /// Longitudinal extent of `phi`.
    pub sub_length: f64,
    /// Lateral extent of `phi`.
    pub sub_width: f64,
    /// Distance from the AV center back to the rear edge of `Phi`.
    pub rear_offset: f64,
    /// AV pose; the box is aligned with its heading.
    pub anchor: Pose2,
}

impl SafetyBox {
    /// Local x of the front edge of `Phi`.
    pub fn front_offset(&self) -> f64 {
        self.length - self.rear_offset
    }

    /// Same geometry around a different AV pose.
    pub fn anchored_at(&self, anchor: Pose2) -> SafetyBox {
        SafetyBox { anchor, ..*self }
    }

    pub fn in_phi(&self, local: Vec2) -> bool {
        local.x.abs() <= 0.5 * self.sub_length && local.y.abs() <= 0.5 * self.sub_width
    }

    #[allow(non_snake_case)]
    pub fn in_Phi(&self, local: Vec2) -> bool {
        local.x >= -self.rear_offset
            && local.x <= self.front_offset()
            && local.y.abs() <= 0.5 * self.width
    }

    /// Grid covering `Phi`: `ceil(width / cell)` rows across the AV and
    /// `ceil(length / cell)` columns along it, starting at the rear edge and
    /// centered laterally.
    pub fn window_spec(&self, cell_size: f64) -> Result<GridSpec> {
        let rows = ((self.width / cell_size).ceil() as usize).max(1);
        let cols = ((self.length / cell_size).ceil() as usize).max(1);
        let corner = Vec2::new(-self.rear_offset, -0.5 * rows as f64 * cell_size);
        let origin = self.anchor.to_world(corner);
        GridSpec::new(
            Pose2::new(origin.x, origin.y, self.anchor.heading),
            cell_size,
            rows,
            cols,
        )
    }

    /// Box-frame coordinates of a window cell center.
    fn window_cell_local(&self, spec: &GridSpec, row: usize, col: usize) -> Vec2 {
        Vec2::new(
            -self.rear_offset + (col as f64 + 0.5) * spec.cell_size,
            -0.5 * spec.rows as f64 * spec.cell_size + (row as f64 + 0.5) * spec.cell_size,
        )
    }
}

/// Size the safety box for the AV footprint `av` moving at `av_speed_kmh`.
pub fn build_safety_box(
    av: &OrientedBox,
    av_speed_kmh: f64,
    others: &[OrientedBox],
    p: &SsdParams,
) -> Result<SafetyBox> {
    p.validate()?;
    if !(av_speed_kmh.is_finite() && av_speed_kmh >= 0.0) {
        return Err(Error::InvalidParameter {
            what: "AV speed",
            value: av_speed_kmh,
        });
    }
    if others.is_empty() {
        return Err(Error::NoParticipants);
    }
    let max_len = others.iter().map(|b| b.length).fold(0.0, f64::max);
    let min_wid = others.iter().map(|b| b.width).fold(f64::INFINITY, f64::min);
    let ssd = stopping_sight_distance(av_speed_kmh, p);
    let width = av.width + max_len;
    let length = av.length + max_len + ssd;
    let rear_offset = 0.5 * (av.length + max_len);
    // phi stays inside Phi even for participants wider than they are long.
    let sub_length = (av.length + min_wid).min(2.0 * rear_offset);
    let sub_width = (av.width + min_wid).min(width);
    Ok(SafetyBox {
        width,
        length,
        sub_length,
        sub_width,
        rear_offset,
        anchor: av.center,
    })
}

/// Cut the AV-centered window for `bx` out of `global`.
pub fn extract_av_centered(
    global: &OccupancyGrid,
    bx: &SafetyBox,
    cell_size: f64,
) -> Result<OccupancyGrid> {
    Ok(resample_window(global, &bx.window_spec(cell_size)?))
}

/// Conditional collision probability outside `phi` and inside `Phi`.
pub trait SpatialWeighting {
    /// Weight for a point in box coordinates strictly between `phi` and the
    /// edge of `Phi`.
    fn falloff(&self, bx: &SafetyBox, local: Vec2) -> f64;
}

/// `1 - d`, with `d` the larger of the two per-axis normalized distances from
/// the `phi` edge (0) to the `Phi` edge (1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinearFalloff;

impl SpatialWeighting for LinearFalloff {
    fn falloff(&self, bx: &SafetyBox, local: Vec2) -> f64 {
        let half_l = 0.5 * bx.sub_length;
        let half_w = 0.5 * bx.sub_width;
        let along = if local.x > half_l {
            (local.x - half_l) / (bx.front_offset() - half_l)
        } else if local.x < -half_l {
            (-half_l - local.x) / (bx.rear_offset - half_l)
        } else {
            0.0
        };
        let across = if local.y.abs() > half_w {
            (local.y.abs() - half_w) / (0.5 * bx.width - half_w)
        } else {
            0.0
        };
        (1.0 - along.max(across)).clamp(0.0, 1.0)
    }
}

/// `P(C|O)` at a box-frame point.
pub fn collision_weight_at(bx: &SafetyBox, local: Vec2, weighting: &impl SpatialWeighting) -> f64 {
    if bx.in_phi(local) {
        1.0
    } else if !bx.in_Phi(local) {
        0.0
    } else {
        weighting.falloff(bx, local)
    }
}

/// `P(C|O)` for every cell of the box window `spec`.
pub fn collision_given_occupancy(bx: &SafetyBox, spec: &GridSpec) -> Result<Vec<f64>> {
    collision_given_occupancy_with(bx, spec, &LinearFalloff)
}

pub fn collision_given_occupancy_with(
    bx: &SafetyBox,
    spec: &GridSpec,
    weighting: &impl SpatialWeighting,
) -> Result<Vec<f64>> {
    let expected = bx.window_spec(spec.cell_size)?;
    if !expected.approx_eq(spec, 1e-9) {
        return Err(Error::WindowMismatch);
    }
    let mut out = Vec::with_capacity(spec.len());
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            out.push(collision_weight_at(
                bx,
                bx.window_cell_local(spec, r, c),
                weighting,
            ));
        }
    }
    Ok(out)
}

/// `P(C) = P(C|O) * P(O)` elementwise.
pub fn collision_probability(p_coll_given_occ: &[f64], p_occ: &[f64]) -> Result<Vec<f64>> {
    if p_coll_given_occ.len() != p_occ.len() {
        return Err(Error::ShapeMismatch {
            expected: p_coll_given_occ.len(),
            found: p_occ.len(),
        });
    }
    Ok(p_coll_given_occ
        .iter()
        .zip(p_occ)
        .map(|(c, o)| c * o)
        .collect())
}

/// Normalized Cox adjustment of one cell for `k > 1`:
/// `p * exp(beta * dp) / exp(beta)`.
#[inline]
pub fn cox_normalized(p_coll: f64, delta_p: f64, beta: f64) -> f64 {
    p_coll * (beta * (delta_p - 1.0)).exp()
}

/// Cox-adjusted, normalized risk field. Step `k = 1` passes `p_coll` through.
pub fn cox_adjust(p_coll: &[f64], delta_p: &[f64], beta: CoxParams, k: usize) -> Result<Vec<f64>> {
    beta.validate()?;
    if k == 0 {
        return Err(Error::InvalidStepIndex);
    }
    if p_coll.len() != delta_p.len() {
        return Err(Error::ShapeMismatch {
            expected: p_coll.len(),
            found: delta_p.len(),
        });
    }
    if k == 1 {
        return Ok(p_coll.to_vec());
    }
    p_coll
        .iter()
        .zip(delta_p)
        .map(|(&p, &d)| {
            if !(-1.0..=1.0).contains(&d) {
                return Err(Error::InvalidParameter {
                    what: "occupancy change",
                    value: d,
                });
            }
            Ok(cox_normalized(p, d, beta.beta).clamp(0.0, 1.0))
        })
        .collect()
}

/// Worst cell; 0 for an empty field.
pub fn max_reduce(field: &[f64]) -> f64 {
    field.iter().copied().fold(0.0, f64::max)
}

/// Per-cell breakdown of one timestep over the safety-box window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskField {
    pub spec: GridSpec,
    pub safety_box: SafetyBox,
    pub p_occ: Vec<f64>,
    pub p_coll_given_occ: Vec<f64>,
    pub p_coll: Vec<f64>,
    /// All zeros at `k = 1`.
    pub delta_p: Vec<f64>,
    pub risk_norm: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub ssd: SsdParams,
    pub cox: CoxParams,
    /// Cell edge of the AV-centered window.
    pub cell_size: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            ssd: SsdParams::default(),
            cox: CoxParams::default(),
            cell_size: DEFAULT_CELL_SIZE,
        }
    }
}

/// AV pose and velocity at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvFrame {
    pub pose: Pose2,
    pub velocity: Velocity2,
}

/// Previous-timestep inputs for the occupancy change.
#[derive(Debug, Clone, Copy)]
pub struct PreviousStep<'a> {
    pub grid: &'a OccupancyGrid,
    pub av_pose: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub score: f64,
    /// `None` when no participants are present.
    pub field: Option<RiskField>,
}

/// Risk score for one timestep.
///
/// The window for the previous grid uses the current step's box geometry
/// anchored at the previous AV pose, so a cell index refers to the same
/// place relative to the AV at both times.
pub fn pora_step(
    prev: Option<PreviousStep<'_>>,
    curr: &OccupancyGrid,
    av: &AvFrame,
    av_dims: (f64, f64),
    others: &[OrientedBox],
    params: &RiskParams,
) -> Result<StepResult> {
    pora_step_with(prev, curr, av, av_dims, others, params, &LinearFalloff)
}

pub fn pora_step_with(
    prev: Option<PreviousStep<'_>>,
    curr: &OccupancyGrid,
    av: &AvFrame,
    av_dims: (f64, f64),
    others: &[OrientedBox],
    params: &RiskParams,
    weighting: &impl SpatialWeighting,
) -> Result<StepResult> {
    params.cox.validate()?;
    if let Some(p) = &prev {
        if !(p.grid.t() < curr.t()) {
            return Err(Error::TimestepOrder {
                prev: p.grid.t(),
                curr: curr.t(),
            });
        }
    }
    if others.is_empty() {
        return Ok(StepResult {
            score: 0.0,
            field: None,
        });
    }
    let av_box = OrientedBox::new(av.pose, av_dims.0, av_dims.1)?;
    let bx = build_safety_box(&av_box, speed_kmh(av.velocity), others, &params.ssd)?;
    let spec = bx.window_spec(params.cell_size)?;
    let p_occ = resample_window(curr, &spec).into_values();
    let (delta_p, k) = match prev {
        Some(p) => {
            let prev_spec = bx.anchored_at(p.av_pose).window_spec(params.cell_size)?;
            let before = resample_window(p.grid, &prev_spec);
            let delta = p_occ
                .iter()
                .zip(before.values())
                .map(|(now, then)| (now - then).clamp(-1.0, 1.0))
                .collect();
            (delta, 2)
        }
        None => (alloc::vec![0.0; p_occ.len()], 1),
    };
    let p_coll_given_occ = collision_given_occupancy_with(&bx, &spec, weighting)?;
    let p_coll = collision_probability(&p_coll_given_occ, &p_occ)?;
    let risk_norm = cox_adjust(&p_coll, &delta_p, params.cox, k)?;
    let score = max_reduce(&risk_norm);
    Ok(StepResult {
        score,
        field: Some(RiskField {
            spec,
            safety_box: bx,
            p_occ,
            p_coll_given_occ,
            p_coll,
            delta_p,
            risk_norm,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub t: f64,
    /// 1-based step index.
    pub k: usize,
    pub score: f64,
    pub field: Option<RiskField>,
}

/// Score every grid against the plan sample at the same time. The first grid
/// takes the unadjusted branch.
pub fn pora_trajectory(
    plan: &PlannedTrajectory,
    grids: &[OccupancyGrid],
    av_dims: (f64, f64),
    others: &[OrientedBox],
    params: &RiskParams,
) -> Result<Vec<TrajectoryScore>> {
    let mut out = Vec::with_capacity(grids.len());
    let mut prev: Option<(&OccupancyGrid, Pose2)> = None;
    for (i, grid) in grids.iter().enumerate() {
        let sample = plan
            .sample_at(grid.t(), TIME_ALIGNMENT_TOLERANCE)
            .ok_or(Error::MisalignedTimestamp(grid.t()))?;
        let av = AvFrame {
            pose: sample.pose,
            velocity: sample.velocity,
        };
        let step = pora_step(
            prev.map(|(g, pose)| PreviousStep { grid: g, av_pose: pose }),
            grid,
            &av,
            av_dims,
            others,
            params,
        )?;
        out.push(TrajectoryScore {
            t: grid.t(),
            k: i + 1,
            score: step.score,
            field: step.field,
        });
        prev = Some((grid, sample.pose));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::{E, PI};

    fn av_box(pose: Pose2) -> OrientedBox {
        OrientedBox::new(pose, 4.5, 2.0).unwrap()
    }

    fn other(l: f64, w: f64) -> OrientedBox {
        OrientedBox::new(Pose2::default(), l, w).unwrap()
    }

    #[test]
    fn ssd_hand_values() {
        let p = SsdParams::default();
        assert_eq!(stopping_sight_distance(0.0, &p), 0.0);
        // 0.278 * 50 * 2.5 + 2500 * 9.81 / (254 * 3.4)
        let v50 = 34.75 + 2500.0 * 9.81 / 863.6;
        assert!((stopping_sight_distance(50.0, &p) - v50).abs() < 1e-9);
        assert!((stopping_sight_distance(50.0, &p) - 63.15).abs() < 5e-3);
        let v100 = 69.5 + 10000.0 * 9.81 / 863.6;
        assert!((stopping_sight_distance(100.0, &p) - v100).abs() < 1e-9);
    }

    #[test]
    fn safety_box_direct_substitution() {
        let bx = build_safety_box(
            &av_box(Pose2::default()),
            0.0,
            &[other(5.0, 2.0)],
            &SsdParams::default(),
        )
        .unwrap();
        assert_eq!(bx.width, 7.0);
        assert_eq!(bx.length, 9.5);
        assert_eq!(bx.sub_length, 6.5);
        assert_eq!(bx.sub_width, 4.0);
        assert_eq!(bx.rear_offset, 4.75);
    }

    #[test]
    fn safety_box_grows_with_ssd() {
        let p = SsdParams::default();
        let bx = build_safety_box(&av_box(Pose2::default()), 50.0, &[other(5.0, 2.0)], &p).unwrap();
        assert!((bx.length - (9.5 + stopping_sight_distance(50.0, &p))).abs() < 1e-12);
        assert!((bx.length - 72.65).abs() < 5e-3);
        // Extra length only goes forward.
        assert_eq!(bx.rear_offset, 4.75);
    }

    #[test]
    fn safety_box_max_min_selection() {
        let bx = build_safety_box(
            &av_box(Pose2::default()),
            0.0,
            &[other(5.0, 2.0), other(1.8, 0.6)],
            &SsdParams::default(),
        )
        .unwrap();
        assert_eq!(bx.width, 7.0);
        assert!((bx.sub_length - 5.1).abs() < 1e-12);
        assert!((bx.sub_width - 2.6).abs() < 1e-12);
    }

    #[test]
    fn safety_box_requires_participants() {
        let err = build_safety_box(&av_box(Pose2::default()), 0.0, &[], &SsdParams::default());
        assert_eq!(err, Err(Error::NoParticipants));
    }

    #[test]
    fn collision_weight_regions() {
        let bx = build_safety_box(
            &av_box(Pose2::default()),
            30.0,
            &[other(5.0, 2.0)],
            &SsdParams::default(),
        )
        .unwrap();
        assert_eq!(collision_weight_at(&bx, Vec2::ZERO, &LinearFalloff), 1.0);
        // Midway between phi and Phi along both axes.
        let mid_x = 0.5 * (0.5 * bx.sub_length + bx.front_offset());
        let mid_y = 0.5 * (0.5 * bx.sub_width + 0.5 * bx.width);
        let w = collision_weight_at(&bx, Vec2::new(mid_x, mid_y), &LinearFalloff);
        assert!((w - 0.5).abs() < 1e-12);
        let w_rear = collision_weight_at(
            &bx,
            Vec2::new(-0.5 * (0.5 * bx.sub_length + bx.rear_offset), 0.0),
            &LinearFalloff,
        );
        assert!((w_rear - 0.5).abs() < 1e-12);
        assert_eq!(
            collision_weight_at(&bx, Vec2::new(bx.front_offset() + 0.1, 0.0), &LinearFalloff),
            0.0
        );
        assert_eq!(
            collision_weight_at(&bx, Vec2::new(0.0, bx.width), &LinearFalloff),
            0.0
        );
    }

    #[test]
    fn collision_map_rejects_foreign_window() {
        let bx = build_safety_box(
            &av_box(Pose2::default()),
            0.0,
            &[other(5.0, 2.0)],
            &SsdParams::default(),
        )
        .unwrap();
        let good = bx.window_spec(0.5).unwrap();
        let map = collision_given_occupancy(&bx, &good).unwrap();
        assert_eq!(map.len(), good.len());
        assert!(map.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(max_reduce(&map), 1.0);
        let mut bad = good;
        bad.origin.x += 1.0;
        assert_eq!(collision_given_occupancy(&bx, &bad), Err(Error::WindowMismatch));
    }

    #[test]
    fn cox_spot_values() {
        let beta = CoxParams::new(2.0).unwrap();
        let out = cox_adjust(&[0.8], &[1.0], beta, 2).unwrap();
        assert!((out[0] - 0.8).abs() < 1e-12);
        let out = cox_adjust(&[0.5], &[-1.0], beta, 2).unwrap();
        assert!((out[0] - 0.5 * E.powi(-4)).abs() < 1e-12);
        assert!((out[0] - 0.009158).abs() < 1e-6);
        let out = cox_adjust(&[0.3, 0.9], &[-0.7, 0.2], beta, 1).unwrap();
        assert_eq!(out, vec![0.3, 0.9]);
    }

    #[test]
    fn cox_rejects_bad_inputs() {
        assert!(CoxParams::new(-0.1).is_err());
        let neg = CoxParams { beta: -1.0 };
        assert!(cox_adjust(&[0.5], &[0.0], neg, 2).is_err());
        assert_eq!(
            cox_adjust(&[0.5], &[0.0], CoxParams::default(), 0),
            Err(Error::InvalidStepIndex)
        );
        assert!(cox_adjust(&[0.5], &[1.5], CoxParams::default(), 2).is_err());
        assert!(cox_adjust(&[0.5, 0.1], &[0.0], CoxParams::default(), 2).is_err());
    }

    fn world_spec() -> GridSpec {
        GridSpec::new(Pose2::new(-20.0, -20.0, 0.0), 0.5, 80, 160).unwrap()
    }

    fn grid_with(t: f64, cells: &[(Vec2, f64)]) -> OccupancyGrid {
        let s = world_spec();
        let mut values = vec![0.0; s.len()];
        for (p, v) in cells {
            let (r, c) = s.world_to_cell(*p);
            values[s.index(r as usize, c as usize)] = *v;
        }
        OccupancyGrid::new(s, t, values).unwrap()
    }

    #[test]
    fn empty_scene_scores_zero() {
        let g = OccupancyGrid::zeros(world_spec(), 0.0);
        let av = AvFrame {
            pose: Pose2::default(),
            velocity: Velocity2::new(10.0, 0.0),
        };
        let r = pora_step(None, &g, &av, (4.5, 2.0), &[], &RiskParams::default()).unwrap();
        assert_eq!(r.score, 0.0);
        assert!(r.field.is_none());
        let r = pora_step(None, &g, &av, (4.5, 2.0), &[other(4.5, 1.8)], &RiskParams::default())
            .unwrap();
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn occupancy_inside_phi_at_first_step() {
        // Cell centers sit on the window lattice: AV at a lattice-aligned pose.
        let params = RiskParams::default();
        let av = AvFrame {
            pose: Pose2::new(0.0, 0.0, 0.0),
            velocity: Velocity2::ZERO,
        };
        let others = [other(4.5, 1.8)];
        let bx = build_safety_box(&av_box(av.pose), 0.0, &others, &params.ssd).unwrap();
        let spec = bx.window_spec(params.cell_size).unwrap();
        let target = spec.cell_center_world(spec.rows / 2, spec.cols / 2);
        let g = grid_with(0.0, &[(target, 0.7)]);
        let r = pora_step(None, &g, &av, (4.5, 2.0), &others, &params).unwrap();
        assert!(r.score > 0.0);
        let field = r.field.unwrap();
        let (idx, _) = field
            .p_occ
            .iter()
            .enumerate()
            .fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert_eq!(field.p_coll_given_occ[idx], 1.0);
        assert!((r.score - field.p_occ[idx]).abs() < 1e-12);
        // With the occupancy change forced to +1 the Cox factor is exactly 1.
        let adjusted = cox_adjust(&[0.7], &[1.0], params.cox, 2).unwrap();
        assert!((adjusted[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn static_follower_is_attenuated() {
        let params = RiskParams::default();
        let others = [other(4.5, 1.8)];
        let lead = |x: f64| {
            let s = world_spec();
            let mut values = vec![0.0; s.len()];
            for r in 0..s.rows {
                for c in 0..s.cols {
                    let p = s.cell_center_world(r, c);
                    if (p.x - x).abs() <= 2.25 && p.y.abs() <= 0.9 {
                        values[s.index(r, c)] = 1.0;
                    }
                }
            }
            values
        };
        // AV and leader both advance 5 m between grids.
        let g0 = OccupancyGrid::new(world_spec(), 0.0, lead(8.0)).unwrap();
        let g1 = OccupancyGrid::new(world_spec(), 0.5, lead(13.0)).unwrap();
        let av0 = Pose2::new(0.0, 0.0, 0.0);
        let av1 = AvFrame {
            pose: Pose2::new(5.0, 0.0, 0.0),
            velocity: Velocity2::new(10.0, 0.0),
        };
        let first = pora_step(
            None,
            &g1,
            &av1,
            (4.5, 2.0),
            &others,
            &params,
        )
        .unwrap();
        let second = pora_step(
            Some(PreviousStep { grid: &g0, av_pose: av0 }),
            &g1,
            &av1,
            (4.5, 2.0),
            &others,
            &params,
        )
        .unwrap();
        let field = second.field.unwrap();
        assert!(field.delta_p.iter().all(|d| d.abs() < 1e-12));
        let max_pc = max_reduce(&field.p_coll);
        assert!((second.score - max_pc / params.cox.beta.exp()).abs() < 1e-12);
        assert!(second.score > 0.0 && second.score < max_pc);
        assert!((first.score - max_pc).abs() < 1e-12);
    }

    #[test]
    fn out_of_order_grids_rejected() {
        let g0 = OccupancyGrid::zeros(world_spec(), 1.0);
        let g1 = OccupancyGrid::zeros(world_spec(), 1.0);
        let av = AvFrame {
            pose: Pose2::default(),
            velocity: Velocity2::ZERO,
        };
        let r = pora_step(
            Some(PreviousStep { grid: &g0, av_pose: av.pose }),
            &g1,
            &av,
            (4.5, 2.0),
            &[other(4.5, 1.8)],
            &RiskParams::default(),
        );
        assert!(matches!(r, Err(Error::TimestepOrder { .. })));
    }

    #[test]
    fn rotated_world_gives_same_window() {
        // Mass 3 m ahead of the AV, then the whole layout turned by pi/2.
        let params = RiskParams::default();
        let others = [other(4.5, 1.8)];
        let make = |rot: f64| {
            let s = GridSpec::new(
                Pose2::new(-20.0, -20.0, 0.0).transformed(rot, Vec2::ZERO),
                0.5,
                80,
                80,
            )
            .unwrap();
            let mut values = vec![0.0; s.len()];
            let (r, c) = s.world_to_cell(Vec2::new(3.0, 0.0).rotate(rot));
            values[s.index(r as usize, c as usize)] = 1.0;
            let g = OccupancyGrid::new(s, 0.0, values).unwrap();
            let pose = Pose2::new(0.0, 0.0, rot);
            let bx = build_safety_box(&av_box(pose), 0.0, &others, &params.ssd).unwrap();
            extract_av_centered(&g, &bx, params.cell_size).unwrap()
        };
        let a = make(0.0);
        let b = make(PI / 2.0);
        assert!(a.max_value() > 0.0);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-6);
        }
        // The peak sits forward of the AV center.
        let (_, c, _) = a.argmax();
        let bx = build_safety_box(&av_box(Pose2::default()), 0.0, &others, &params.ssd).unwrap();
        let x_local = -bx.rear_offset + (c as f64 + 0.5) * 0.5;
        assert!(x_local > 0.0 && (x_local - 3.0).abs() <= 0.5);
    }

    #[test]
    fn trajectory_rejects_misaligned_grids() {
        use crate::types::TrajectorySample;
        let plan = PlannedTrajectory::new(vec![
            TrajectorySample { t: 0.5, pose: Pose2::default(), velocity: Velocity2::ZERO },
            TrajectorySample { t: 1.0, pose: Pose2::default(), velocity: Velocity2::ZERO },
        ])
        .unwrap();
        let grids = [OccupancyGrid::zeros(world_spec(), 0.5), OccupancyGrid::zeros(world_spec(), 0.75)];
        let r = pora_trajectory(&plan, &grids, (4.5, 2.0), &[other(4.5, 1.8)], &RiskParams::default());
        assert_eq!(r, Err(Error::MisalignedTimestamp(0.75)));
        let ok = pora_trajectory(&plan, &grids[..1], (4.5, 2.0), &[other(4.5, 1.8)], &RiskParams::default())
            .unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(ok[0].score, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalized_risk_is_bounded(p in 0.0..=1.0f64, d in -1.0..=1.0f64, beta in 0.0..=5.0f64) {
                let out = cox_adjust(&[p], &[d], CoxParams { beta }, 3).unwrap();
                prop_assert!((0.0..=1.0).contains(&out[0]));
                prop_assert!(out[0] <= p + 1e-12);
            }

            #[test]
            fn cox_is_increasing_in_change(
                p in 0.01..=1.0f64, d in -1.0..0.9f64, step in 0.01..0.1f64, beta in 0.1..=5.0f64,
            ) {
                let lo = cox_normalized(p, d, beta);
                let hi = cox_normalized(p, d + step, beta);
                prop_assert!(hi > lo);
            }

            #[test]
            fn box_length_grows_with_speed(v in 0.0..150.0f64, dv in 0.5..30.0f64) {
                let p = SsdParams::default();
                let others = [other(5.0, 2.0), other(0.5, 0.5)];
                let a = build_safety_box(&av_box(Pose2::default()), v, &others, &p).unwrap();
                let b = build_safety_box(&av_box(Pose2::default()), v + dv, &others, &p).unwrap();
                prop_assert!(b.length > a.length);
                prop_assert_eq!(a.width, b.width);
                prop_assert_eq!(a.sub_length, b.sub_length);
                prop_assert_eq!(a.sub_width, b.sub_width);
            }

            #[test]
            fn adding_occupancy_never_lowers_score(
                seed in 0u64..10_000, cell in 0usize..200, extra in 0.0..1.0f64, beta in 0.0..5.0f64,
            ) {
                let n = 200;
                let pco: Vec<f64> = (0..n).map(|i| ((i as u64 * 31 + seed) % 97) as f64 / 96.0).collect();
                let occ: Vec<f64> = (0..n).map(|i| ((i as u64 * 17 + seed * 3) % 89) as f64 / 88.0).collect();
                let dp: Vec<f64> = (0..n).map(|i| ((i as u64 * 7 + seed) % 41) as f64 / 20.0 - 1.0).collect();
                let mut more = occ.clone();
                more[cell] = (more[cell] + extra).min(1.0);
                let cox = CoxParams { beta };
                let base = max_reduce(&cox_adjust(&collision_probability(&pco, &occ).unwrap(), &dp, cox, 2).unwrap());
                let bumped = max_reduce(&cox_adjust(&collision_probability(&pco, &more).unwrap(), &dp, cox, 2).unwrap());
                prop_assert!(bumped >= base);
            }
        }
    }
}
