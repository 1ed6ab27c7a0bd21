//! Seeded kinematic traffic microsimulator.
//!
//! A [`ScenarioSpec`] fully determines an episode: road, spawned agents with
//! their scripts, driver parameters and the seed for per-agent noise.
//! [`run_episode`] advances the scene at a fixed tick, lets the AV (and any
//! controller-driven vehicles) act on a risk metric through a threshold
//! policy, and logs conflicts, collisions, metric values and rewards.

mod batch;
mod engine;
mod generate;
pub mod road;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AgentId, ParticipantKind};

pub use batch::{run_batch, BatchSummary};
pub use engine::{
    ego_plan, initial_states, run_episode, ControllerPolicy, EpisodeReport, MetricKind, MetricTrace, Outcome, PolicyAction,
    RewardWeights, SimConfig, TrajectoryRow,
};
pub use generate::{
    approach_separate_scenario, controlled_agents, generate_scenario, make_penetration_sweep,
    mixed_family_specs, FamilyParams, EVENT_ID_BASE,
};
pub use road::{Leg, Movement, PathRef, Road, RoadSpec, SegmentSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Nominal,
    PedestrianViolation,
    LaneIncursion,
    BrakeCutin,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Nominal,
        Family::PedestrianViolation,
        Family::LaneIncursion,
        Family::BrakeCutin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Nominal => "nominal",
            Family::PedestrianViolation => "pedestrian_violation",
            Family::LaneIncursion => "lane_incursion",
            Family::BrakeCutin => "brake_cutin",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

/// Who decides an agent's longitudinal acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Gap-keeping background law plus script overrides.
    Background,
    /// Same threshold policy as the AV, on its own path.
    Controlled,
}

/// Initial placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Placement {
    /// On a road path at `station` m from its start.
    OnPath { path: PathRef, station: f64 },
    /// Off-path, moving in a straight line along `heading` (rad).
    Free { x: f64, y: f64, heading: f64 },
}

/// Scripted override, active from `at` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScriptEvent {
    /// Free agents stand still until `at`.
    Depart { at: f64 },
    /// Move to another corridor lane over `duration` seconds.
    LaneChange {
        at: f64,
        target_lane: usize,
        duration: f64,
    },
    /// Hold a deceleration for `duration` seconds, ignoring the driving law.
    Brake { at: f64, decel: f64, duration: f64 },
    /// Replace the desired speed.
    SetSpeed { at: f64, speed: f64 },
}

impl ScriptEvent {
    pub fn at(&self) -> f64 {
        match *self {
            ScriptEvent::Depart { at }
            | ScriptEvent::LaneChange { at, .. }
            | ScriptEvent::Brake { at, .. }
            | ScriptEvent::SetSpeed { at, .. } => at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpawn {
    pub id: AgentId,
    pub kind: ParticipantKind,
    pub placement: Placement,
    /// Initial speed, m/s.
    pub speed: f64,
    /// Cruise speed; defaults to the initial speed.
    #[serde(default)]
    pub desired_speed: Option<f64>,
    /// Footprint override `(length, width)`.
    #[serde(default)]
    pub dimensions: Option<(f64, f64)>,
    #[serde(default = "default_role")]
    pub role: Role,
    #[serde(default)]
    pub script: Vec<ScriptEvent>,
}

fn default_role() -> Role {
    Role::Background
}

impl AgentSpawn {
    pub fn dimensions(&self) -> (f64, f64) {
        self.dimensions
            .unwrap_or_else(|| self.kind.default_dimensions())
    }

    pub fn desired_speed(&self) -> f64 {
        self.desired_speed.unwrap_or(self.speed)
    }
}

/// The AV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSpawn {
    pub path: PathRef,
    pub station: f64,
    pub speed: f64,
    pub desired_speed: f64,
    /// Station at which the AV has arrived; `None` means never.
    #[serde(default)]
    pub goal_station: Option<f64>,
    #[serde(default)]
    pub dimensions: Option<(f64, f64)>,
}

impl EgoSpawn {
    pub fn dimensions(&self) -> (f64, f64) {
        self.dimensions
            .unwrap_or_else(|| ParticipantKind::Car.default_dimensions())
    }
}

/// Gap-keeping law and kinematic limits for non-AV vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverParams {
    /// Desired time headway, s.
    pub headway: f64,
    /// Standstill bumper gap, m.
    pub min_gap: f64,
    /// Speed-tracking gain, 1/s.
    pub speed_gain: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    /// Leader search distance, m.
    pub lookahead: f64,
    /// Half-width of uniform acceleration noise, m/s^2.
    pub accel_noise: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        Self {
            headway: 1.5,
            min_gap: 2.0,
            speed_gain: 0.6,
            max_accel: 2.0,
            max_decel: 8.0,
            lookahead: 150.0,
            accel_noise: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// s.
    pub duration: f64,
    /// s.
    pub tick_dt: f64,
    pub road: RoadSpec,
    pub family: Family,
    /// Fraction of vehicle agents driven by the AV controller.
    #[serde(default)]
    pub av_penetration: f64,
    /// Upper speed bound for every vehicle, m/s.
    pub speed_limit: f64,
    #[serde(default)]
    pub driver: DriverParams,
    pub ego: EgoSpawn,
    #[serde(default)]
    pub agents: Vec<AgentSpawn>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |what: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { what, value: v })
            }
        };
        positive("tick_dt", self.tick_dt)?;
        positive("duration", self.duration)?;
        positive("speed limit", self.speed_limit)?;
        if !(0.0..=1.0).contains(&self.av_penetration) {
            return Err(Error::InvalidParameter {
                what: "av_penetration",
                value: self.av_penetration,
            });
        }
        let d = &self.driver;
        for (what, v) in [
            ("headway", d.headway),
            ("speed gain", d.speed_gain),
            ("max accel", d.max_accel),
            ("max decel", d.max_decel),
            ("lookahead", d.lookahead),
        ] {
            positive(what, v)?;
        }
        if !(d.min_gap.is_finite() && d.min_gap >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "min gap",
                value: d.min_gap,
            });
        }
        if !(d.accel_noise.is_finite() && d.accel_noise >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "accel noise",
                value: d.accel_noise,
            });
        }
        let e = &self.ego;
        for (what, v) in [("ego speed", e.speed), ("ego desired speed", e.desired_speed)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter { what, value: v });
            }
        }
        let mut ids: Vec<u32> = self.agents.iter().map(|a| a.id.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Scenario("duplicate agent id".into()));
        }
        if ids.contains(&EGO_ID.0) {
            return Err(Error::Scenario(format!("agent id {} is reserved for the AV", EGO_ID.0)));
        }
        for a in &self.agents {
            if !(a.speed.is_finite() && a.speed >= 0.0) {
                return Err(Error::InvalidParameter {
                    what: "agent speed",
                    value: a.speed,
                });
            }
            let (l, w) = a.dimensions();
            if !(l > 0.0 && w > 0.0 && l.is_finite() && w.is_finite()) {
                return Err(Error::Scenario(format!("agent {} has bad dimensions", a.id.0)));
            }
            if a.role == Role::Controlled {
                if !a.kind.is_vehicle() {
                    return Err(Error::Scenario(format!(
                        "agent {} is not a vehicle and cannot be controller-driven",
                        a.id.0
                    )));
                }
                if matches!(a.placement, Placement::Free { .. }) {
                    return Err(Error::Scenario(format!(
                        "controller-driven agent {} needs a path",
                        a.id.0
                    )));
                }
            }
            for ev in &a.script {
                if !(ev.at().is_finite() && ev.at() >= 0.0) {
                    return Err(Error::Scenario(format!("agent {} has a bad script time", a.id.0)));
                }
                match *ev {
                    ScriptEvent::LaneChange { duration, .. } | ScriptEvent::Brake { duration, .. }
                        if !(duration.is_finite() && duration > 0.0) =>
                    {
                        return Err(Error::Scenario(format!(
                            "agent {} has a non-positive event duration",
                            a.id.0
                        )));
                    }
                    ScriptEvent::Brake { decel, .. } if !(decel.is_finite() && decel >= 0.0) => {
                        return Err(Error::Scenario(format!("agent {} has a bad brake", a.id.0)));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Reserved id of the AV.
pub const EGO_ID: AgentId = AgentId(0);
