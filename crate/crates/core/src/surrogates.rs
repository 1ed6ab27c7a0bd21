//! Time-to-collision baselines.
//!
//! `ttc1` is the classic first-order measure along the follower's heading.
//! `ttc2` propagates both agents with constant acceleration and constant yaw
//! rate and searches for the first overlap of their footprints.

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{obb_overlap, AgentId, AgentState, Pose2};

/// Width of the final bisection bracket, s.
pub const BISECTION_TOLERANCE: f64 = 1e-4;
/// Conflict threshold on TTC-2, s.
pub const CONFLICT_TTC: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtcResult {
    /// Seconds to contact; `None` when no contact is predicted.
    pub value: Option<f64>,
    pub pair: (AgentId, AgentId),
}

impl TtcResult {
    fn none(a: AgentId, b: AgentId) -> Self {
        Self {
            value: None,
            pair: (a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ttc2Params {
    /// Search step, s.
    pub dt: f64,
    /// Look-ahead, s.
    pub horizon: f64,
}

impl Default for Ttc2Params {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 10.0,
        }
    }
}

impl Ttc2Params {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        let p = Self { dt, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                what: "ttc step",
                value: self.dt,
            });
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter {
                what: "ttc horizon",
                value: self.horizon,
            });
        }
        Ok(())
    }
}

/// First-order TTC of `follower` behind `leader`.
///
/// Requires the leader ahead on the follower's heading axis and the two
/// footprints overlapping laterally; anything else is not a lead-follow
/// situation and yields `None`.
pub fn ttc1(follower: &AgentState, leader: &AgentState) -> TtcResult {
    let none = TtcResult::none(follower.id, leader.id);
    let axis = follower.pose().forward();
    let side = axis.perp();
    let rel = leader.bbox.center.position() - follower.bbox.center.position();
    let lateral = rel.dot(side).abs();
    if lateral > 0.5 * follower.bbox.width + leader.bbox.projected_radius(side) {
        return none;
    }
    let gap = rel.dot(axis) - 0.5 * (follower.bbox.length + leader.bbox.length);
    let closing = (follower.velocity.as_vec() - leader.velocity.as_vec()).dot(axis);
    if gap > 0.0 && closing > 0.0 {
        TtcResult {
            value: Some(gap / closing),
            pair: (follower.id, leader.id),
        }
    } else {
        none
    }
}

/// Footprint center after `t` seconds of constant acceleration along the
/// direction of travel and constant yaw rate. A braking agent stays put once
/// it reaches standstill.
pub fn propagate_ctra(agent: &AgentState, t: f64) -> Pose2 {
    let v0 = agent.velocity.speed();
    let course0 = if v0 > 1e-9 {
        agent.velocity.vy.atan2(agent.velocity.vx)
    } else {
        agent.bbox.center.heading
    };
    let a = agent.acceleration;
    let w = agent.yaw_rate;
    let t = if a < 0.0 {
        if v0 <= 0.0 {
            0.0
        } else {
            t.min(v0 / -a)
        }
    } else {
        t
    };
    let p0 = agent.bbox.center;
    if t <= 0.0 {
        return p0;
    }
    let v = v0 + a * t;
    let course = course0 + w * t;
    let (dx, dy) = if w.abs() < 1e-9 {
        let s = v0 * t + 0.5 * a * t * t;
        (s * course0.cos(), s * course0.sin())
    } else {
        let (s0, c0) = course0.sin_cos();
        let (s1, c1) = course.sin_cos();
        (
            (v * s1 - v0 * s0) / w + a * (c1 - c0) / (w * w),
            (-v * c1 + v0 * c0) / w + a * (s1 - s0) / (w * w),
        )
    };
    Pose2::new(p0.x + dx, p0.y + dy, p0.heading + w * t)
}

fn overlap_at(a: &AgentState, b: &AgentState, t: f64) -> bool {
    obb_overlap(
        &a.bbox.with_center(propagate_ctra(a, t)),
        &b.bbox.with_center(propagate_ctra(b, t)),
    )
}

/// Second-order TTC: earliest footprint overlap within the horizon, found by
/// stepping at `dt` and bisecting to [`BISECTION_TOLERANCE`]. Agents already
/// in contact report the tolerance itself.
pub fn ttc2(a: &AgentState, b: &AgentState, params: &Ttc2Params) -> Result<TtcResult> {
    params.validate()?;
    let pair = (a.id, b.id);
    if overlap_at(a, b, 0.0) {
        return Ok(TtcResult {
            value: Some(BISECTION_TOLERANCE),
            pair,
        });
    }
    let mut lo = 0.0;
    let mut i = 1u64;
    loop {
        let hi = (i as f64 * params.dt).min(params.horizon);
        if overlap_at(a, b, hi) {
            let (mut l, mut h) = (lo, hi);
            while h - l > BISECTION_TOLERANCE {
                let mid = 0.5 * (l + h);
                if overlap_at(a, b, mid) {
                    h = mid;
                } else {
                    l = mid;
                }
            }
            return Ok(TtcResult {
                value: Some(h),
                pair,
            });
        }
        if hi >= params.horizon {
            return Ok(TtcResult::none(a.id, b.id));
        }
        lo = hi;
        i += 1;
    }
}

/// Smallest `ttc2` between `ego` and each of `others`. With nothing
/// predicted the pair is `(ego, ego)`.
pub fn min_ttc2_over_agents(
    ego: &AgentState,
    others: &[AgentState],
    params: &Ttc2Params,
) -> Result<TtcResult> {
    let mut best = TtcResult::none(ego.id, ego.id);
    for o in others {
        let r = ttc2(ego, o, params)?;
        best = pick_min(best, r);
    }
    Ok(best)
}

/// Smallest `ttc1` with `ego` as the follower.
pub fn min_ttc1_over_agents(ego: &AgentState, others: &[AgentState]) -> TtcResult {
    others
        .iter()
        .map(|o| ttc1(ego, o))
        .fold(TtcResult::none(ego.id, ego.id), pick_min)
}

fn pick_min(best: TtcResult, r: TtcResult) -> TtcResult {
    match (best.value, r.value) {
        (_, None) => best,
        (None, Some(_)) => r,
        (Some(x), Some(y)) if y < x => r,
        _ => best,
    }
}

/// Common risk scale for TTC metrics: `clamp(1 - ttc / cap, 0, 1)`, 0 when
/// no contact is predicted.
pub fn ttc_to_risk(ttc: Option<f64>, cap: f64) -> f64 {
    match ttc {
        Some(t) => (1.0 - t / cap).clamp(0.0, 1.0),
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ParticipantKind, Vec2, Velocity2};

    fn car(id: u32, x: f64, y: f64, heading: f64, speed: f64) -> AgentState {
        AgentState::with_default_dimensions(
            AgentId(id),
            ParticipantKind::Car,
            Pose2::new(x, y, heading),
            Velocity2::from_speed_heading(speed, heading),
        )
    }

    #[test]
    fn ttc1_hand_values() {
        // 20 m bumper gap between 4.5 m cars.
        let f = car(1, 0.0, 0.0, 0.0, 10.0);
        let l = car(2, 24.5, 0.0, 0.0, 0.0);
        assert!((ttc1(&f, &l).value.unwrap() - 2.0).abs() < 1e-12);
        let f = car(1, 0.0, 0.0, 0.0, 15.0);
        let l = car(2, 19.5, 0.0, 0.0, 10.0);
        assert!((ttc1(&f, &l).value.unwrap() - 3.0).abs() < 1e-12);
        let l = car(2, 19.5, 0.0, 0.0, 20.0);
        assert_eq!(ttc1(&f, &l).value, None);
        // Leader behind.
        let l = car(2, -19.5, 0.0, 0.0, 0.0);
        assert_eq!(ttc1(&f, &l).value, None);
        // Adjacent lane.
        let l = car(2, 19.5, 3.5, 0.0, 0.0);
        assert_eq!(ttc1(&f, &l).value, None);
    }

    #[test]
    fn ttc2_reduces_to_first_order() {
        let f = car(1, 0.0, 0.0, 0.0, 10.0);
        let l = car(2, 24.5, 0.0, 0.0, 0.0);
        let r = ttc2(&f, &l, &Ttc2Params::default()).unwrap();
        assert!((r.value.unwrap() - 2.0).abs() < 1e-3);
        // Head-on.
        let l = car(2, 24.5, 0.0, core::f64::consts::PI, 5.0);
        let f = car(1, 0.0, 0.0, 0.0, 5.0);
        let r = ttc2(&f, &l, &Ttc2Params::default()).unwrap();
        assert!((r.value.unwrap() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn ttc2_constant_closing_acceleration() {
        let mut f = car(1, 0.0, 0.0, 0.0, 0.0);
        f.acceleration = 2.0;
        let l = car(2, 24.5, 0.0, 0.0, 0.0);
        let r = ttc2(&f, &l, &Ttc2Params::default()).unwrap();
        let oracle = (2.0f64 * 20.0 / 2.0).sqrt();
        assert!((r.value.unwrap() - oracle).abs() < 1e-3);
    }

    #[test]
    fn ttc2_stops_short() {
        // 10 m stopping distance against a 20 m gap.
        let mut f = car(1, 0.0, 0.0, 0.0, 10.0);
        f.acceleration = -5.0;
        let l = car(2, 24.5, 0.0, 0.0, 0.0);
        assert_eq!(ttc2(&f, &l, &Ttc2Params::default()).unwrap().value, None);
        assert!((propagate_ctra(&f, 100.0).x - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ttc2_catches_crossing_traffic() {
        // Crossing paths that ttc1 cannot see.
        let a = car(1, -20.0, 0.0, 0.0, 10.0);
        let b = car(2, 0.0, -20.0, core::f64::consts::FRAC_PI_2, 10.0);
        assert_eq!(ttc1(&a, &b).value, None);
        let r = ttc2(&a, &b, &Ttc2Params::default()).unwrap();
        let t = r.value.unwrap();
        assert!(t > 1.0 && t < 2.0);
    }

    #[test]
    fn ttc2_overlap_now() {
        let a = car(1, 0.0, 0.0, 0.0, 0.0);
        let b = car(2, 1.0, 0.0, 0.0, 0.0);
        let r = ttc2(&a, &b, &Ttc2Params::default()).unwrap();
        assert_eq!(r.value, Some(BISECTION_TOLERANCE));
    }

    #[test]
    fn ttc2_rejects_bad_params() {
        let a = car(1, 0.0, 0.0, 0.0, 0.0);
        assert!(ttc2(&a, &a, &Ttc2Params { dt: 0.0, horizon: 1.0 }).is_err());
        assert!(Ttc2Params::new(0.1, -1.0).is_err());
    }

    #[test]
    fn turning_arc_closes_circle() {
        // Full circle at constant speed and yaw rate returns to the start.
        let mut a = car(1, 3.0, 4.0, 0.3, 5.0);
        a.yaw_rate = 0.5;
        let t = 2.0 * core::f64::consts::PI / 0.5;
        let p = propagate_ctra(&a, t);
        assert!((p.x - 3.0).abs() < 1e-9 && (p.y - 4.0).abs() < 1e-9);
        // Radius v / w.
        let half = propagate_ctra(&a, t / 2.0);
        assert!(((half.position() - Vec2::new(3.0, 4.0)).norm() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn min_over_agents() {
        let ego = car(1, 0.0, 0.0, 0.0, 10.0);
        assert_eq!(
            min_ttc2_over_agents(&ego, &[], &Ttc2Params::default()).unwrap().value,
            None
        );
        let near = car(2, 24.5, 0.0, 0.0, 0.0);
        let far = car(3, 44.5, 0.0, 0.0, 0.0);
        let r = min_ttc2_over_agents(&ego, &[far.clone(), near.clone()], &Ttc2Params::default()).unwrap();
        assert!((r.value.unwrap() - 2.0).abs() < 1e-3);
        assert_eq!(r.pair, (AgentId(1), AgentId(2)));
        let away = car(4, 24.5, 0.0, 0.0, 20.0);
        let r = min_ttc2_over_agents(&ego, &[away], &Ttc2Params::default()).unwrap();
        assert_eq!(r.value, None);
        let r1 = min_ttc1_over_agents(&ego, &[far.clone(), near.clone()]);
        assert!((r1.value.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn risk_map() {
        assert_eq!(ttc_to_risk(None, 10.0), 0.0);
        assert_eq!(ttc_to_risk(Some(0.0), 10.0), 1.0);
        assert!((ttc_to_risk(Some(2.0), 10.0) - 0.8).abs() < 1e-12);
        assert_eq!(ttc_to_risk(Some(12.0), 10.0), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn second_order_matches_first_order(
                gap in 2.0..60.0f64, vf in 1.0..30.0f64, vl in 0.0..30.0f64,
            ) {
                let f = car(1, 0.0, 0.0, 0.0, vf);
                let l = car(2, gap + 4.5, 0.0, 0.0, vl);
                let params = Ttc2Params::default();
                let a = ttc1(&f, &l).value;
                let b = ttc2(&f, &l, &params).unwrap().value;
                match (a, b) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 2.0 * params.dt),
                    (Some(x), None) => prop_assert!(x > params.horizon - 2.0 * params.dt),
                    (None, Some(_)) => prop_assert!(false),
                    (None, None) => {}
                }
            }

            #[test]
            fn rigid_transform_invariance(
                rot in -3.1..3.1f64, tx in -100.0..100.0f64, ty in -100.0..100.0f64,
                y_off in -1.5..1.5f64, gap in 3.0..40.0f64, va in 0.0..20.0f64,
                acc in -3.0..3.0f64, w in -0.3..0.3f64,
            ) {
                let mut a = car(1, 0.0, 0.0, 0.0, va);
                a.acceleration = acc;
                a.yaw_rate = w;
                let b = car(2, gap + 4.5, y_off, 2.0, 3.0);
                let t = Vec2::new(tx, ty);
                let move_agent = |s: &AgentState| {
                    let mut m = s.clone();
                    m.bbox = s.bbox.with_center(s.bbox.center.transformed(rot, t));
                    m.velocity = s.velocity.rotate(rot);
                    m
                };
                let (a2, b2) = (move_agent(&a), move_agent(&b));
                let p = Ttc2Params::default();
                let r1 = ttc2(&a, &b, &p).unwrap().value;
                let r2 = ttc2(&a2, &b2, &p).unwrap().value;
                match (r1, r2) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-6, "{} vs {}", x, y),
                    (None, None) => {}
                    _ => prop_assert!(false, "{:?} vs {:?}", r1, r2),
                }
                let f1 = ttc1(&a, &b).value;
                let f2 = ttc1(&a2, &b2).value;
                match (f1, f2) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-6),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }

            #[test]
            fn bisection_brackets_transition(gap in 3.0..40.0f64, vf in 5.0..25.0f64) {
                let f = car(1, 0.0, 0.0, 0.0, vf);
                let l = car(2, gap + 4.5, 0.0, 0.0, 0.0);
                let tau = ttc2(&f, &l, &Ttc2Params::default()).unwrap().value;
                if let Some(tau) = tau {
                    prop_assert!(!overlap_at(&f, &l, tau - 1e-3));
                    prop_assert!(overlap_at(&f, &l, tau + 1e-3));
                }
            }
        }
    }
}
