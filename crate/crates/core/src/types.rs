//! Geometric and kinematic vocabulary shared by every other module.

use core::f64::consts::PI;
use core::ops::{Add, Mul, Neg, Sub};

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wrap an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if !theta.is_finite() {
        return theta;
    }
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Plain 2-D vector in meters (or m/s, depending on context).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `heading`.
    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// World pose. `heading` is measured counterclockwise from world +x and kept
/// in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unit vector along the heading.
    pub fn forward(&self) -> Vec2 {
        Vec2::from_heading(self.heading)
    }

    /// Unit vector to the left of the heading.
    pub fn left(&self) -> Vec2 {
        self.forward().perp()
    }

    /// Map a point expressed in this pose's frame (x forward, y left) to world.
    pub fn to_world(&self, local: Vec2) -> Vec2 {
        self.position() + local.rotate(self.heading)
    }

    /// Map a world point into this pose's frame.
    pub fn to_local(&self, world: Vec2) -> Vec2 {
        (world - self.position()).rotate(-self.heading)
    }

    /// The pose `local` (given relative to `self`) expressed in world.
    pub fn compose(&self, local: &Pose2) -> Pose2 {
        let p = self.to_world(local.position());
        Pose2::new(p.x, p.y, self.heading + local.heading)
    }

    /// Rigid rotation of the whole pose about the world origin followed by a
    /// translation.
    pub fn transformed(&self, rotation: f64, translation: Vec2) -> Pose2 {
        let p = self.position().rotate(rotation) + translation;
        Pose2::new(p.x, p.y, self.heading + rotation)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

/// Planar velocity in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity2 {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity2 {
    pub const ZERO: Velocity2 = Velocity2 { vx: 0.0, vy: 0.0 };

    pub const fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn from_speed_heading(speed: f64, heading: f64) -> Self {
        let u = Vec2::from_heading(heading) * speed;
        Self::new(u.x, u.y)
    }

    pub fn as_vec(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    /// Magnitude in m/s.
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn rotate(&self, angle: f64) -> Velocity2 {
        let v = self.as_vec().rotate(angle);
        Velocity2::new(v.x, v.y)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite()
    }
}

/// Speed magnitude converted to km/h.
pub fn speed_kmh(v: Velocity2) -> f64 {
    3.6 * v.speed()
}

/// Rectangle of `length` along the heading of `center` and `width` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Pose2,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Pose2, length: f64, width: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParameter {
                what: "box length",
                value: length,
            });
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidParameter {
                what: "box width",
                value: width,
            });
        }
        if !center.is_finite() {
            return Err(Error::NonFinite("box center"));
        }
        Ok(Self {
            center,
            length,
            width,
        })
    }

    pub fn half_extents(&self) -> (f64, f64) {
        (0.5 * self.length, 0.5 * self.width)
    }

    /// Corners in counterclockwise order starting at rear-right.
    pub fn corners(&self) -> [Vec2; 4] {
        let (hl, hw) = self.half_extents();
        [
            Vec2::new(-hl, -hw),
            Vec2::new(hl, -hw),
            Vec2::new(hl, hw),
            Vec2::new(-hl, hw),
        ]
        .map(|c| self.center.to_world(c))
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let local = self.center.to_local(p);
        let (hl, hw) = self.half_extents();
        local.x.abs() <= hl && local.y.abs() <= hw
    }

    /// Half-width of the box's shadow on the unit axis `axis`.
    pub fn projected_radius(&self, axis: Vec2) -> f64 {
        let (hl, hw) = self.half_extents();
        hl * self.center.forward().dot(axis).abs() + hw * self.center.left().dot(axis).abs()
    }

    pub fn with_center(&self, center: Pose2) -> OrientedBox {
        OrientedBox { center, ..*self }
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }
}

/// Separating-axis test over the four edge normals. Touching boxes overlap.
pub fn obb_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let d = b.center.position() - a.center.position();
    let axes = [
        a.center.forward(),
        a.center.left(),
        b.center.forward(),
        b.center.left(),
    ];
    axes.iter()
        .all(|&n| d.dot(n).abs() <= a.projected_radius(n) + b.projected_radius(n))
}

/// Traffic participant classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantKind {
    Car,
    Truck,
    Bus,
    Bicycle,
    Pedestrian,
}

impl ParticipantKind {
    pub const ALL: [ParticipantKind; 5] = [
        ParticipantKind::Car,
        ParticipantKind::Truck,
        ParticipantKind::Bus,
        ParticipantKind::Bicycle,
        ParticipantKind::Pedestrian,
    ];

    /// Fleet-average `(length, width)` in meters, used when perception does
    /// not report dimensions.
    pub fn default_dimensions(self) -> (f64, f64) {
        match self {
            ParticipantKind::Car => (4.5, 1.8),
            ParticipantKind::Truck => (8.0, 2.4),
            ParticipantKind::Bus => (12.0, 2.5),
            ParticipantKind::Bicycle => (1.8, 0.6),
            ParticipantKind::Pedestrian => (0.5, 0.5),
        }
    }

    /// Motor vehicles are confined to drivable space; pedestrians and
    /// bicycles are not.
    pub fn is_vehicle(self) -> bool {
        matches!(
            self,
            ParticipantKind::Car | ParticipantKind::Truck | ParticipantKind::Bus
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParticipantKind::Car => "car",
            ParticipantKind::Truck => "truck",
            ParticipantKind::Bus => "bus",
            ParticipantKind::Bicycle => "bicycle",
            ParticipantKind::Pedestrian => "pedestrian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AgentId(pub u32);

/// Snapshot of one traffic participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: ParticipantKind,
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    pub velocity: Velocity2,
    /// Signed, along the heading.
    pub acceleration: f64,
    pub yaw_rate: f64,
}

impl AgentState {
    /// Agent with the kind's default footprint.
    pub fn with_default_dimensions(
        id: AgentId,
        kind: ParticipantKind,
        pose: Pose2,
        velocity: Velocity2,
    ) -> Self {
        let (length, width) = kind.default_dimensions();
        Self {
            id,
            kind,
            bbox: OrientedBox {
                center: pose,
                length,
                width,
            },
            velocity,
            acceleration: 0.0,
            yaw_rate: 0.0,
        }
    }

    pub fn pose(&self) -> Pose2 {
        self.bbox.center
    }

    pub fn is_finite(&self) -> bool {
        self.bbox.center.is_finite()
            && self.bbox.length.is_finite()
            && self.bbox.width.is_finite()
            && self.velocity.is_finite()
            && self.acceleration.is_finite()
            && self.yaw_rate.is_finite()
    }

    /// Speed projected on the heading; negative when reversing.
    pub fn longitudinal_speed(&self) -> f64 {
        self.velocity.as_vec().dot(self.pose().forward())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose2,
    pub velocity: Velocity2,
}

/// Uniformly sampled plan of the AV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    samples: alloc::vec::Vec<TrajectorySample>,
    dt: f64,
}

impl PlannedTrajectory {
    /// Spacing tolerance between consecutive samples.
    pub const SPACING_TOLERANCE: f64 = 1e-9;

    pub fn new(samples: alloc::vec::Vec<TrajectorySample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyTrajectory)?;
        if !first.t.is_finite() {
            return Err(Error::NonFinite("trajectory time"));
        }
        let dt = if samples.len() > 1 {
            samples[1].t - samples[0].t
        } else {
            0.0
        };
        if samples.len() > 1 && !(dt > 0.0) {
            return Err(Error::NonUniformTrajectory(1));
        }
        for (i, w) in samples.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if !(step > 0.0) || (step - dt).abs() > Self::SPACING_TOLERANCE {
                return Err(Error::NonUniformTrajectory(i + 1));
            }
        }
        Ok(Self { samples, dt })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    /// Sample spacing; zero for a single-sample plan.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Sample whose time lies within `tol` of `t`.
    pub fn sample_at(&self, t: f64, tol: f64) -> Option<&TrajectorySample> {
        self.samples.iter().find(|s| (s.t - t).abs() <= tol)
    }
}
