//! Road geometry: a multi-lane corridor built from straight and arc segments,
//! or a four-leg intersection with one lane per direction.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_angle, Pose2, Vec2};

/// Sampling step of path polylines, m.
const PATH_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SegmentSpec {
    Straight { length: f64 },
    /// Positive curvature turns left.
    Arc { length: f64, curvature: f64 },
}

impl SegmentSpec {
    fn length(&self) -> f64 {
        match *self {
            SegmentSpec::Straight { length } | SegmentSpec::Arc { length, .. } => length,
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            SegmentSpec::Straight { .. } => 0.0,
            SegmentSpec::Arc { curvature, .. } => curvature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RoadSpec {
    /// Parallel lanes around a reference line that starts at the origin
    /// heading along +x. Lane 0 is the rightmost.
    Corridor {
        lane_count: usize,
        lane_width: f64,
        segments: Vec<SegmentSpec>,
    },
    /// Two crossing roads centered on the origin, right-hand traffic.
    Intersection {
        approach_length: f64,
        lane_width: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    East,
    North,
    West,
    South,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::East, Leg::North, Leg::West, Leg::South];

    fn angle(self) -> f64 {
        match self {
            Leg::East => 0.0,
            Leg::North => FRAC_PI_2,
            Leg::West => PI,
            Leg::South => -FRAC_PI_2,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    Straight,
    Left,
    Right,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Straight, Movement::Left, Movement::Right];

    fn index(self) -> usize {
        self as usize
    }
}

/// Arc-length parameterized polyline with heading and curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    s: Vec<f64>,
    poses: Vec<Pose2>,
    curvature: Vec<f64>,
}

impl Path {
    pub fn from_segments(start: Pose2, segments: &[SegmentSpec]) -> Result<Path> {
        if segments.is_empty() {
            return Err(Error::Road("path needs at least one segment".into()));
        }
        let mut s = alloc::vec![0.0];
        let mut poses = alloc::vec![start];
        let mut curvature = alloc::vec![segments[0].curvature()];
        let mut pose = start;
        let mut total = 0.0;
        for seg in segments {
            let len = seg.length();
            let k = seg.curvature();
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::Road(format!("segment length {len}")));
            }
            if !k.is_finite() {
                return Err(Error::Road("non-finite curvature".into()));
            }
            let n = (len / PATH_STEP).ceil().max(1.0) as usize;
            for i in 1..=n {
                let ds = len * i as f64 / n as f64;
                let p = advance(pose, k, ds);
                s.push(total + ds);
                poses.push(p);
                curvature.push(k);
            }
            pose = advance(pose, k, len);
            total += len;
        }
        Ok(Path {
            s,
            poses,
            curvature,
        })
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap_or(&0.0)
    }

    /// Pose and curvature at station `s`; beyond either end the path
    /// continues straight.
    pub fn pose_at(&self, s: f64) -> (Pose2, f64) {
        let last = self.s.len() - 1;
        if s <= 0.0 {
            let p = self.poses[0];
            return (shift(p, s), 0.0);
        }
        if s >= self.s[last] {
            let p = self.poses[last];
            return (shift(p, s - self.s[last]), 0.0);
        }
        let i = match self
            .s
            .binary_search_by(|v| v.partial_cmp(&s).unwrap_or(core::cmp::Ordering::Less))
        {
            Ok(i) => return (self.poses[i], self.curvature[i]),
            Err(i) => i - 1,
        };
        let k = self.curvature[i + 1];
        (advance(self.poses[i], k, s - self.s[i]), k)
    }

    /// World pose at station `s` and lateral offset `d` (left positive).
    pub fn offset_pose(&self, s: f64, d: f64) -> Pose2 {
        let (p, _) = self.pose_at(s);
        let pos = p.position() + p.left() * d;
        Pose2::new(pos.x, pos.y, p.heading)
    }
}

fn shift(p: Pose2, ds: f64) -> Pose2 {
    let pos = p.position() + p.forward() * ds;
    Pose2::new(pos.x, pos.y, p.heading)
}

/// Exact constant-curvature advance by arc length `ds`.
fn advance(p: Pose2, k: f64, ds: f64) -> Pose2 {
    if k.abs() < 1e-12 {
        return shift(p, ds);
    }
    let th = p.heading;
    let th1 = th + k * ds;
    let x = p.x + (th1.sin() - th.sin()) / k;
    let y = p.y - (th1.cos() - th.cos()) / k;
    Pose2::new(x, y, th1)
}

/// Where an agent travels: one of the road's paths plus a lateral offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathRef {
    Lane { lane: usize },
    Route { leg: Leg, movement: Movement },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub spec: RoadSpec,
    paths: Vec<Path>,
}

impl Road {
    pub fn build(spec: &RoadSpec) -> Result<Road> {
        let paths = match spec {
            RoadSpec::Corridor {
                lane_count,
                lane_width,
                segments,
            } => {
                if *lane_count == 0 {
                    return Err(Error::Road("corridor needs at least one lane".into()));
                }
                check_width(*lane_width)?;
                for seg in segments {
                    let k = seg.curvature().abs();
                    let half = 0.5 * *lane_count as f64 * lane_width;
                    if k * half >= 1.0 {
                        return Err(Error::Road(format!(
                            "arc radius {} narrower than the road",
                            1.0 / k
                        )));
                    }
                }
                alloc::vec![Path::from_segments(Pose2::default(), segments)?]
            }
            RoadSpec::Intersection {
                approach_length,
                lane_width,
            } => {
                check_width(*lane_width)?;
                let half = intersection_half_size(*lane_width);
                if !(approach_length.is_finite() && *approach_length > half) {
                    return Err(Error::Road(format!(
                        "approach length {approach_length} must exceed {half}"
                    )));
                }
                let mut paths = Vec::with_capacity(12);
                for leg in Leg::ALL {
                    for mv in Movement::ALL {
                        paths.push(route_path(leg, mv, *approach_length, *lane_width)?);
                    }
                }
                paths
            }
        };
        Ok(Road {
            spec: spec.clone(),
            paths,
        })
    }

    pub fn lane_count(&self) -> usize {
        match &self.spec {
            RoadSpec::Corridor { lane_count, .. } => *lane_count,
            RoadSpec::Intersection { .. } => 0,
        }
    }

    pub fn lane_width(&self) -> f64 {
        match &self.spec {
            RoadSpec::Corridor { lane_width, .. } | RoadSpec::Intersection { lane_width, .. } => {
                *lane_width
            }
        }
    }

    /// Lateral offset of a corridor lane from the reference line.
    pub fn lane_offset(&self, lane: usize) -> f64 {
        let n = self.lane_count() as f64;
        (lane as f64 - 0.5 * (n - 1.0)) * self.lane_width()
    }

    /// Path index and lateral offset for `r`.
    pub fn resolve(&self, r: PathRef) -> Result<(usize, f64)> {
        match (r, &self.spec) {
            (PathRef::Lane { lane }, RoadSpec::Corridor { lane_count, .. }) => {
                if lane >= *lane_count {
                    return Err(Error::Scenario(format!(
                        "lane {lane} out of range for {lane_count} lanes"
                    )));
                }
                Ok((0, self.lane_offset(lane)))
            }
            (PathRef::Route { leg, movement }, RoadSpec::Intersection { .. }) => {
                Ok((leg.index() * 3 + movement.index(), 0.0))
            }
            (PathRef::Lane { .. }, _) => Err(Error::Scenario("lane on an intersection".into())),
            (PathRef::Route { .. }, _) => Err(Error::Scenario("route on a corridor".into())),
        }
    }

    pub fn path(&self, i: usize) -> &Path {
        &self.paths[i]
    }
}

fn check_width(w: f64) -> Result<()> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::Road(format!("lane width {w}")));
    }
    Ok(())
}

/// Half the side of the square conflict area.
pub fn intersection_half_size(lane_width: f64) -> f64 {
    2.0 * lane_width
}

/// Route from the far end of `leg`'s inbound lane through the junction.
fn route_path(leg: Leg, mv: Movement, approach: f64, lane_width: f64) -> Result<Path> {
    let h = intersection_half_size(lane_width);
    let heading = normalize_angle(leg.angle() + PI);
    let start_local = Vec2::new(-approach, -0.5 * lane_width);
    let start_pos = start_local.rotate(heading);
    let start = Pose2::new(start_pos.x, start_pos.y, heading);
    let lead = approach - h;
    let segments = match mv {
        Movement::Straight => [
            SegmentSpec::Straight { length: lead },
            SegmentSpec::Straight { length: 2.0 * h },
            SegmentSpec::Straight { length: lead },
        ],
        Movement::Right => {
            let r = h - 0.5 * lane_width;
            [
                SegmentSpec::Straight { length: lead },
                SegmentSpec::Arc {
                    length: FRAC_PI_2 * r,
                    curvature: -1.0 / r,
                },
                SegmentSpec::Straight { length: lead },
            ]
        }
        Movement::Left => {
            let r = h + 0.5 * lane_width;
            [
                SegmentSpec::Straight { length: lead },
                SegmentSpec::Arc {
                    length: FRAC_PI_2 * r,
                    curvature: 1.0 / r,
                },
                SegmentSpec::Straight { length: lead },
            ]
        }
    };
    Path::from_segments(start, &segments)
}
