//! Seeded scenario generators.
//!
//! Every family shares the same background layout for a given seed; the
//! rare-event families only add their event actors, drawn from a separate
//! random stream. A family whose event is switched off therefore produces
//! exactly the nominal scene.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::road::{PathRef, Road, RoadSpec, SegmentSpec};
use super::{
    AgentSpawn, DriverParams, EgoSpawn, Family, Placement, Role, ScenarioSpec, ScriptEvent,
};
use crate::error::{Error, Result};
use crate::risk::{stopping_sight_distance, SsdParams};
use crate::types::{AgentId, ParticipantKind};

const LAYOUT_STREAM: u64 = 1 << 40;
const EVENT_STREAM: u64 = (1 << 40) + 1;
const SELECTION_STREAM: u64 = (1 << 40) + 2;

/// First id handed to event actors.
pub const EVENT_ID_BASE: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub duration: f64,
    pub tick_dt: f64,
    pub lane_width: f64,
    /// Inclusive range of background vehicle counts.
    pub background: (usize, usize),
    /// AV cruise speed range, m/s.
    pub speed_range: (f64, f64),
    /// Fixed braking deceleration for `brake_cutin`; drawn from 4-8 m/s^2
    /// when absent. Zero disables the event.
    pub brake_magnitude: Option<f64>,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self {
            duration: 20.0,
            tick_dt: 0.1,
            lane_width: 3.5,
            background: (3, 7),
            speed_range: (12.0, 24.0),
            brake_magnitude: None,
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

const EGO_STATION: f64 = 30.0;

/// Scenario of `family` for `seed`.
pub fn generate_scenario(family: Family, seed: u64, params: &FamilyParams) -> Result<ScenarioSpec> {
    let mut rng = stream(seed, LAYOUT_STREAM);
    let lw = params.lane_width;
    let bend = uniform(&mut rng, -1.0, 1.0) / 500.0;
    let segments = if rng.random::<f64>() < 0.5 {
        vec![SegmentSpec::Straight { length: 1500.0 }]
    } else {
        vec![
            SegmentSpec::Straight { length: 150.0 },
            SegmentSpec::Arc {
                length: 250.0,
                curvature: bend,
            },
            SegmentSpec::Straight { length: 1100.0 },
        ]
    };
    let road_spec = RoadSpec::Corridor {
        lane_count: 2,
        lane_width: lw,
        segments,
    };
    let v = uniform(&mut rng, params.speed_range.0, params.speed_range.1);
    let speed_limit = v + 6.0;
    let ego = EgoSpawn {
        path: PathRef::Lane { lane: 0 },
        station: EGO_STATION,
        speed: v,
        desired_speed: v,
        goal_station: None,
        dimensions: None,
    };

    let (lo, hi) = params.background;
    let n = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    let mut agents: Vec<AgentSpawn> = Vec::with_capacity(n + 1);
    let mut taken: Vec<(usize, f64)> = vec![(0, EGO_STATION)];
    let mut next_id = 1;
    for _ in 0..n {
        for _attempt in 0..50 {
            let lane = rng.random_range(0..2usize);
            let station = uniform(&mut rng, EGO_STATION - 60.0, EGO_STATION + 250.0);
            let factor = uniform(&mut rng, 0.7, 1.1);
            let kind = if rng.random::<f64>() < 0.15 {
                ParticipantKind::Truck
            } else {
                ParticipantKind::Car
            };
            let clear = taken.iter().all(|(l, s)| *l != lane || (station - s).abs() > 15.0);
            // Keep the AV's own lane clear just around it at spawn.
            let near_ego = lane == 0 && station > EGO_STATION - 25.0 && station < EGO_STATION + 40.0;
            if !clear || near_ego {
                continue;
            }
            taken.push((lane, station));
            agents.push(AgentSpawn {
                id: AgentId(next_id),
                kind,
                placement: Placement::OnPath {
                    path: PathRef::Lane { lane },
                    station,
                },
                speed: (v * factor).min(speed_limit),
                desired_speed: None,
                dimensions: None,
                role: Role::Background,
                script: Vec::new(),
            });
            next_id += 1;
            break;
        }
    }

    let mut spec = ScenarioSpec {
        seed,
        duration: params.duration,
        tick_dt: params.tick_dt,
        road: road_spec,
        family,
        av_penetration: 0.0,
        speed_limit,
        driver: DriverParams::default(),
        ego,
        agents,
    };
    add_event(&mut spec, v, params)?;
    spec.validate()?;
    Ok(spec)
}

fn add_event(spec: &mut ScenarioSpec, v: f64, params: &FamilyParams) -> Result<()> {
    let mut rng = stream(spec.seed, EVENT_STREAM);
    let road = Road::build(&spec.road)?;
    let lw = params.lane_width;
    let id = AgentId(EVENT_ID_BASE);
    match spec.family {
        Family::Nominal => {}
        Family::PedestrianViolation => {
            let depart = uniform(&mut rng, 2.0, 7.0);
            let arrival = uniform(&mut rng, 1.5, 4.5);
            let walk = uniform(&mut rng, 1.2, 2.4);
            let from_right = rng.random::<f64>() < 0.7;
            let station = EGO_STATION + v * (depart + arrival);
            let (d, turn) = if from_right {
                (road.lane_offset(0) - 0.5 * lw - 1.0, FRAC_PI_2)
            } else {
                (road.lane_offset(1) + 0.5 * lw + 1.0, -FRAC_PI_2)
            };
            let p = road.path(0).offset_pose(station, d);
            clear_around(spec, station, 20.0);
            spec.agents.push(AgentSpawn {
                id,
                kind: ParticipantKind::Pedestrian,
                placement: Placement::Free {
                    x: p.x,
                    y: p.y,
                    heading: p.heading + turn,
                },
                speed: walk,
                desired_speed: None,
                dimensions: None,
                role: Role::Background,
                script: vec![ScriptEvent::Depart { at: depart }],
            });
        }
        Family::LaneIncursion | Family::BrakeCutin => {
            let cutin = spec.family == Family::BrakeCutin;
            let magnitude = if cutin {
                match params.brake_magnitude {
                    Some(m) => m,
                    None => uniform(&mut rng, 4.0, 8.0),
                }
            } else {
                0.0
            };
            if cutin && magnitude <= 0.0 {
                return Ok(());
            }
            let trigger = uniform(&mut rng, 2.0, 7.0);
            let duration = if cutin {
                uniform(&mut rng, 1.5, 2.5)
            } else {
                uniform(&mut rng, 1.0, 2.0)
            };
            let (gap, dv) = if cutin {
                (uniform(&mut rng, 8.0, 20.0), uniform(&mut rng, -1.0, 2.0))
            } else {
                (uniform(&mut rng, 1.0, 10.0), -uniform(&mut rng, 0.0, 5.0))
            };
            let speed = (v + dv).max(2.0);
            let center_gap = gap + 4.5;
            let station = EGO_STATION + (v - speed) * trigger + center_gap;
            clear_around(spec, station, 25.0);
            let mut script = vec![ScriptEvent::LaneChange {
                at: trigger,
                target_lane: 0,
                duration,
            }];
            if cutin {
                script.push(ScriptEvent::Brake {
                    at: trigger + duration * uniform(&mut rng, 0.6, 1.0),
                    decel: magnitude,
                    duration: uniform(&mut rng, 1.5, 3.5),
                });
            }
            spec.agents.push(AgentSpawn {
                id,
                kind: ParticipantKind::Car,
                placement: Placement::OnPath {
                    path: PathRef::Lane { lane: 1 },
                    station,
                },
                speed,
                desired_speed: None,
                dimensions: None,
                role: Role::Background,
                script,
            });
        }
    }
    Ok(())
}

/// Drop background agents whose spawn station is within `margin` of
/// `station`, so event actors start from a clean slot.
fn clear_around(spec: &mut ScenarioSpec, station: f64, margin: f64) {
    spec.agents.retain(|a| match a.placement {
        Placement::OnPath { station: s, .. } => (s - station).abs() > margin,
        Placement::Free { .. } => true,
    });
}

/// Vehicles that run the AV controller.
pub fn controlled_agents(spec: &ScenarioSpec) -> Vec<AgentId> {
    spec.agents
        .iter()
        .filter(|a| a.role == Role::Controlled)
        .map(|a| a.id)
        .collect()
}

/// For each level, `episodes_per_level` copies of `base` with consecutive
/// seeds and `round(level * n)` of its on-path vehicles switched to the
/// controller; the choice is a seeded shuffle.
pub fn make_penetration_sweep(
    base: &ScenarioSpec,
    levels: &[f64],
    episodes_per_level: usize,
) -> Result<Vec<ScenarioSpec>> {
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::InvalidParameter {
            what: "penetration level",
            value: *l,
        });
    }
    let eligible: Vec<usize> = base
        .agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind.is_vehicle() && matches!(a.placement, Placement::OnPath { .. }))
        .map(|(i, _)| i)
        .collect();
    let mut out = Vec::with_capacity(levels.len() * episodes_per_level);
    for &level in levels {
        let count = (level * eligible.len() as f64).round() as usize;
        for e in 0..episodes_per_level {
            let mut spec = base.clone();
            spec.seed = base.seed.wrapping_add(e as u64);
            spec.av_penetration = level;
            let mut order = eligible.clone();
            let mut rng = stream(spec.seed, SELECTION_STREAM);
            order.shuffle(&mut rng);
            for a in &mut spec.agents {
                a.role = Role::Background;
            }
            for &i in &order[..count] {
                spec.agents[i].role = Role::Controlled;
            }
            out.push(spec);
        }
    }
    Ok(out)
}

/// `n` episodes cycling through `families`; episode `i` uses seed `seed0 + i`.
pub fn mixed_family_specs(
    families: &[Family],
    n: usize,
    seed0: u64,
    params: &FamilyParams,
) -> Result<Vec<ScenarioSpec>> {
    if families.is_empty() {
        return Err(Error::EmptyInput("families"));
    }
    (0..n)
        .map(|i| generate_scenario(families[i % families.len()], seed0 + i as u64, params))
        .collect()
}

/// Two vehicles in one lane whose gap drifts back and forth around the front
/// edge of the AV's safety box: the leader alternates between a faster and a
/// slower cruise speed.
pub fn approach_separate_scenario(seed: u64, duration: f64, tick_dt: f64) -> Result<ScenarioSpec> {
    let mut rng = stream(seed, LAYOUT_STREAM);
    let v = uniform(&mut rng, 10.0, 18.0);
    let swing = uniform(&mut rng, 2.0, 5.0);
    let period = uniform(&mut rng, 3.0, 6.0);
    let front = 4.5 + stopping_sight_distance(v * 3.6, &SsdParams::default());
    let mut script = Vec::new();
    let mut t = uniform(&mut rng, 0.0, period);
    let mut faster = rng.random::<f64>() < 0.5;
    // The first half-cycle moves the gap by swing * period; start half of that
    // on the other side of the edge so the sawtooth straddles it.
    let sign = if faster { -1.0 } else { 1.0 };
    let station = EGO_STATION + front + sign * 0.5 * swing * period + uniform(&mut rng, -2.0, 2.0);
    while t < duration {
        let speed = if faster { v + swing } else { v - swing };
        script.push(ScriptEvent::SetSpeed { at: t, speed });
        faster = !faster;
        t += period * uniform(&mut rng, 0.8, 1.2);
    }
    let spec = ScenarioSpec {
        seed,
        duration,
        tick_dt,
        road: RoadSpec::Corridor {
            lane_count: 1,
            lane_width: 3.5,
            segments: vec![SegmentSpec::Straight { length: 2000.0 }],
        },
        family: Family::Nominal,
        av_penetration: 0.0,
        speed_limit: v + swing + 5.0,
        driver: DriverParams::default(),
        ego: EgoSpawn {
            path: PathRef::Lane { lane: 0 },
            station: EGO_STATION,
            speed: v,
            desired_speed: v,
            goal_station: None,
            dimensions: None,
        },
        agents: vec![AgentSpawn {
            id: AgentId(1),
            kind: ParticipantKind::Car,
            placement: Placement::OnPath {
                path: PathRef::Lane { lane: 0 },
                station,
            },
            speed: v,
            desired_speed: None,
            dimensions: None,
            role: Role::Background,
            script,
        }],
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_episode, MetricKind, SimConfig};

    #[test]
    fn families_share_background() {
        let p = FamilyParams::default();
        let nominal = generate_scenario(Family::Nominal, 11, &p).unwrap();
        for fam in [Family::PedestrianViolation, Family::LaneIncursion, Family::BrakeCutin] {
            let s = generate_scenario(fam, 11, &p).unwrap();
            assert_eq!(s.ego, nominal.ego);
            assert_eq!(s.road, nominal.road);
            let events: Vec<_> = s.agents.iter().filter(|a| a.id.0 >= EVENT_ID_BASE).collect();
            assert_eq!(events.len(), 1, "{fam:?}");
            // Background agents are a subset of the nominal ones.
            for a in s.agents.iter().filter(|a| a.id.0 < EVENT_ID_BASE) {
                assert!(nominal.agents.contains(a));
            }
        }
    }

    #[test]
    fn null_brake_event_matches_nominal() {
        let p = FamilyParams {
            brake_magnitude: Some(0.0),
            ..FamilyParams::default()
        };
        for seed in 0..3 {
            let nominal = generate_scenario(Family::Nominal, seed, &p).unwrap();
            let null = generate_scenario(Family::BrakeCutin, seed, &p).unwrap();
            let cfg = SimConfig::with_metric(MetricKind::Ttc1);
            let a = run_episode(&nominal, &cfg).unwrap();
            let b = run_episode(&null, &cfg).unwrap();
            assert_eq!(a.metric_trace, b.metric_trace);
            assert_eq!(a.reward_trace, b.reward_trace);
            assert_eq!(a.min_ttc2_trace, b.min_ttc2_trace);
            assert_eq!((a.conflicts, a.collisions), (b.conflicts, b.collisions));
        }
    }

    #[test]
    fn penetration_levels() {
        let mut base = generate_scenario(Family::Nominal, 5, &FamilyParams::default()).unwrap();
        base.agents = (1..=10)
            .map(|i| AgentSpawn {
                id: AgentId(i),
                kind: ParticipantKind::Car,
                placement: Placement::OnPath {
                    path: PathRef::Lane { lane: 1 },
                    station: 20.0 * i as f64,
                },
                speed: 10.0,
                desired_speed: None,
                dimensions: None,
                role: Role::Background,
                script: vec![],
            })
            .collect();
        let sweep = make_penetration_sweep(&base, &[0.0, 0.5, 1.0], 2).unwrap();
        assert_eq!(sweep.len(), 6);
        assert!(controlled_agents(&sweep[0]).is_empty());
        assert_eq!(controlled_agents(&sweep[2]).len(), 5);
        assert_eq!(controlled_agents(&sweep[4]).len(), 10);
        let again = make_penetration_sweep(&base, &[0.5], 1).unwrap();
        assert_eq!(controlled_agents(&again[0]), controlled_agents(&sweep[2]));
        assert!(make_penetration_sweep(&base, &[1.5], 1).is_err());
    }

    #[test]
    fn generated_specs_validate_and_run() {
        let p = FamilyParams {
            duration: 3.0,
            ..FamilyParams::default()
        };
        for fam in Family::ALL {
            for seed in 0..4 {
                let s = generate_scenario(fam, seed, &p).unwrap();
                run_episode(&s, &SimConfig::default()).unwrap();
            }
        }
        approach_separate_scenario(1, 30.0, 0.1).unwrap();
    }
}
