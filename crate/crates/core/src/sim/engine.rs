use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::road::{Path, Road};
use super::{Family, Placement, Role, ScenarioSpec, ScriptEvent, EGO_ID};
use crate::error::{Error, Result};
use crate::grid::{covering_spec, resample_window, GridSpec};
use crate::predictor::{predict_at, PredictorConfig};
use crate::risk::{
    build_safety_box, collision_given_occupancy, cox_adjust, max_reduce, RiskParams,
};
use crate::surrogates::{
    min_ttc1_over_agents, min_ttc2_over_agents, ttc_to_risk, Ttc2Params, CONFLICT_TTC,
};
use crate::types::{
    normalize_angle, obb_overlap, AgentId, AgentState, OrientedBox, ParticipantKind,
    PlannedTrajectory, Pose2, TrajectorySample, Velocity2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Pora,
    Ttc1,
    Ttc2,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Pora, MetricKind::Ttc1, MetricKind::Ttc2];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Pora => "pora",
            MetricKind::Ttc1 => "ttc1",
            MetricKind::Ttc2 => "ttc2",
        }
    }

    pub fn parse(s: &str) -> Option<MetricKind> {
        MetricKind::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAction {
    Proceed,
    Replan,
    Brake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerPolicy {
    pub proceed_below: f64,
    pub brake_above: f64,
    /// Deceleration in the middle band, m/s^2.
    pub replan_decel: f64,
    /// Deceleration above `brake_above`, m/s^2.
    pub brake_decel: f64,
    /// Acceleration cap while returning to the desired speed, m/s^2.
    pub cruise_accel: f64,
    /// Proceeding below `proceed_below` but at or above this level holds the
    /// current speed instead of speeding back up.
    #[serde(default = "default_resume_below")]
    pub resume_below: f64,
}

fn default_resume_below() -> f64 {
    0.5
}

impl Default for ControllerPolicy {
    fn default() -> Self {
        Self {
            proceed_below: 0.65,
            brake_above: 0.9,
            replan_decel: 2.0,
            brake_decel: 7.0,
            cruise_accel: 1.5,
            resume_below: default_resume_below(),
        }
    }
}

impl ControllerPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.resume_below
            && self.resume_below <= self.proceed_below
            && self.proceed_below <= self.brake_above
            && self.brake_above <= 1.0)
        {
            return Err(Error::InvalidParameter {
                what: "policy thresholds",
                value: self.proceed_below,
            });
        }
        for (what, v) in [
            ("replan decel", self.replan_decel),
            ("brake decel", self.brake_decel),
            ("cruise accel", self.cruise_accel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter { what, value: v });
            }
        }
        Ok(())
    }

    pub fn decide(&self, risk: f64) -> PolicyAction {
        if risk >= self.brake_above {
            PolicyAction::Brake
        } else if risk >= self.proceed_below {
            PolicyAction::Replan
        } else {
            PolicyAction::Proceed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Per second travelled.
    pub alpha: f64,
    /// Per conflict or collision.
    pub delta: f64,
    /// Per unit of the risk metric.
    pub gamma: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            delta: 50.0,
            gamma: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Metric the controller acts on.
    pub metric: MetricKind,
    pub policy: ControllerPolicy,
    pub risk: RiskParams,
    pub predictor: PredictorConfig,
    pub ttc2: Ttc2Params,
    /// TTC mapped to risk as `1 - ttc / cap`.
    pub ttc_risk_cap: f64,
    pub conflict_ttc: f64,
    pub reward: RewardWeights,
    /// Extra AV metrics logged every tick without affecting control.
    #[serde(default)]
    pub record_metrics: Vec<MetricKind>,
    #[serde(default)]
    pub record_trajectory: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            metric: MetricKind::Pora,
            policy: ControllerPolicy::default(),
            risk: RiskParams::default(),
            predictor: PredictorConfig::default(),
            ttc2: Ttc2Params::default(),
            ttc_risk_cap: 10.0,
            conflict_ttc: CONFLICT_TTC,
            reward: RewardWeights::default(),
            record_metrics: Vec::new(),
            record_trajectory: false,
        }
    }
}

impl SimConfig {
    pub fn with_metric(metric: MetricKind) -> Self {
        Self {
            metric,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.risk.ssd.validate()?;
        self.risk.cox.validate()?;
        self.predictor.validate()?;
        self.ttc2.validate()?;
        if !(self.risk.cell_size.is_finite() && self.risk.cell_size > 0.0) {
            return Err(Error::InvalidParameter {
                what: "cell size",
                value: self.risk.cell_size,
            });
        }
        if !(self.ttc_risk_cap.is_finite() && self.ttc_risk_cap > 0.0) {
            return Err(Error::InvalidParameter {
                what: "ttc risk cap",
                value: self.ttc_risk_cap,
            });
        }
        if !(self.conflict_ttc.is_finite() && self.conflict_ttc > 0.0) {
            return Err(Error::InvalidParameter {
                what: "conflict ttc",
                value: self.conflict_ttc,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Safe,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub metric: MetricKind,
    pub values: Vec<(f64, f64)>,
}

/// One logged agent state; heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub id: AgentId,
    pub kind: ParticipantKind,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub family: Family,
    pub metric: MetricKind,
    pub outcome: Outcome,
    pub conflicts: u32,
    pub collisions: u32,
    /// Controller metric on the risk scale, one entry per tick.
    pub metric_trace: Vec<(f64, f64)>,
    pub reward_trace: Vec<(f64, f64)>,
    /// Smallest TTC-2 between the AV and anyone else, per tick.
    pub min_ttc2_trace: Vec<(f64, Option<f64>)>,
    pub travel_time: f64,
    pub episode_return: f64,
    pub reached_goal: bool,
    #[serde(default)]
    pub recorded: Vec<MetricTrace>,
    #[serde(default)]
    pub trajectory: Vec<TrajectoryRow>,
}

impl EpisodeReport {
    pub fn recorded_trace(&self, metric: MetricKind) -> Option<&[(f64, f64)]> {
        if metric == self.metric {
            return Some(&self.metric_trace);
        }
        self.recorded
            .iter()
            .find(|m| m.metric == metric)
            .map(|m| m.values.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Driver {
    Ego,
    Background,
    Controlled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LaneChange {
    from: f64,
    to: f64,
    start: f64,
    duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Motion {
    OnPath { path: usize, s: f64, d: f64 },
    Free { departed: bool, speed: f64 },
}

#[derive(Debug, Clone)]
struct SimAgent {
    state: AgentState,
    driver: Driver,
    motion: Motion,
    desired_speed: f64,
    script: Vec<(ScriptEvent, bool)>,
    brake: Option<(f64, f64)>,
    lane_change: Option<LaneChange>,
    rng: ChaCha8Rng,
}

struct World<'a> {
    spec: &'a ScenarioSpec,
    road: Road,
    agents: Vec<SimAgent>,
}

fn agent_rng(seed: u64, id: AgentId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.0 as u64);
    rng
}

impl<'a> World<'a> {
    fn build(spec: &'a ScenarioSpec) -> Result<World<'a>> {
        spec.validate()?;
        let road = Road::build(&spec.road)?;
        let mut agents = Vec::with_capacity(spec.agents.len() + 1);
        let (path, d) = road.resolve(spec.ego.path)?;
        let (l, w) = spec.ego.dimensions();
        let ego_speed = spec.ego.speed.min(spec.speed_limit);
        let pose = road.path(path).offset_pose(spec.ego.station, d);
        agents.push(SimAgent {
            state: AgentState {
                id: EGO_ID,
                kind: ParticipantKind::Car,
                bbox: OrientedBox::new(pose, l, w)?,
                velocity: Velocity2::from_speed_heading(ego_speed, pose.heading),
                acceleration: 0.0,
                yaw_rate: 0.0,
            },
            driver: Driver::Ego,
            motion: Motion::OnPath {
                path,
                s: spec.ego.station,
                d,
            },
            desired_speed: spec.ego.desired_speed.min(spec.speed_limit),
            script: Vec::new(),
            brake: None,
            lane_change: None,
            rng: agent_rng(spec.seed, EGO_ID),
        });
        for a in &spec.agents {
            let (l, w) = a.dimensions();
            let vmax = speed_cap(spec, a.kind);
            let speed = a.speed.min(vmax);
            let waits = a
                .script
                .iter()
                .any(|e| matches!(e, ScriptEvent::Depart { at } if *at > 0.0));
            let (pose, motion, velocity) = match a.placement {
                Placement::OnPath { path, station } => {
                    let (pi, d) = road.resolve(path)?;
                    let pose = road.path(pi).offset_pose(station, d);
                    (
                        pose,
                        Motion::OnPath {
                            path: pi,
                            s: station,
                            d,
                        },
                        Velocity2::from_speed_heading(speed, pose.heading),
                    )
                }
                Placement::Free { x, y, heading } => {
                    let pose = Pose2::new(x, y, heading);
                    let v = if waits { 0.0 } else { speed };
                    (
                        pose,
                        Motion::Free {
                            departed: !waits,
                            speed,
                        },
                        Velocity2::from_speed_heading(v, pose.heading),
                    )
                }
            };
            for ev in &a.script {
                if let ScriptEvent::LaneChange { target_lane, .. } = ev {
                    if !matches!(motion, Motion::OnPath { .. }) || *target_lane >= road.lane_count() {
                        return Err(Error::Scenario(format!(
                            "agent {} cannot change to lane {}",
                            a.id.0, target_lane
                        )));
                    }
                }
            }
            agents.push(SimAgent {
                state: AgentState {
                    id: a.id,
                    kind: a.kind,
                    bbox: OrientedBox::new(pose, l, w)?,
                    velocity,
                    acceleration: 0.0,
                    yaw_rate: 0.0,
                },
                driver: match a.role {
                    Role::Background => Driver::Background,
                    Role::Controlled => Driver::Controlled,
                },
                motion,
                desired_speed: a.desired_speed().min(vmax),
                script: a.script.iter().map(|e| (*e, false)).collect(),
                brake: None,
                lane_change: None,
                rng: agent_rng(spec.seed, a.id),
            });
        }
        Ok(World { spec, road, agents })
    }

    fn states_except(&self, i: usize) -> Vec<AgentState> {
        self.agents
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, a)| a.state)
            .collect()
    }

    fn fire_scripts(&mut self, t: f64) {
        let limit = self.spec.speed_limit;
        for i in 0..self.agents.len() {
            let lane_offsets: Vec<f64> = (0..self.road.lane_count())
                .map(|l| self.road.lane_offset(l))
                .collect();
            let a = &mut self.agents[i];
            for k in 0..a.script.len() {
                let (ev, fired) = a.script[k];
                if fired || ev.at() > t + 1e-9 {
                    continue;
                }
                a.script[k].1 = true;
                match ev {
                    ScriptEvent::Depart { .. } => {
                        if let Motion::Free { departed, speed } = &mut a.motion {
                            *departed = true;
                            a.state.velocity =
                                Velocity2::from_speed_heading(*speed, a.state.bbox.center.heading);
                        }
                    }
                    ScriptEvent::LaneChange {
                        target_lane,
                        duration,
                        ..
                    } => {
                        if let Motion::OnPath { d, .. } = a.motion {
                            a.lane_change = Some(LaneChange {
                                from: d,
                                to: lane_offsets[target_lane],
                                start: t,
                                duration,
                            });
                        }
                    }
                    ScriptEvent::Brake {
                        decel, duration, ..
                    } => a.brake = Some((decel, t + duration)),
                    ScriptEvent::SetSpeed { speed, .. } => {
                        a.desired_speed = speed.max(0.0).min(speed_cap(self.spec, a.state.kind).min(limit))
                    }
                }
            }
        }
    }

    /// Controller metric of agent `i` on the common risk scale.
    fn metric(&self, i: usize, kind: MetricKind, cfg: &SimConfig, t: f64) -> Result<f64> {
        let me = &self.agents[i].state;
        let others = self.states_except(i);
        match kind {
            MetricKind::Ttc1 => Ok(ttc_to_risk(
                min_ttc1_over_agents(me, &others).value,
                cfg.ttc_risk_cap,
            )),
            MetricKind::Ttc2 => Ok(ttc_to_risk(
                min_ttc2_over_agents(me, &others, &cfg.ttc2)?.value,
                cfg.ttc_risk_cap,
            )),
            MetricKind::Pora => self.pora(i, &others, cfg, t),
        }
    }

    /// Worst Cox-adjusted step along a constant-speed plan on the agent's path.
    fn pora(&self, i: usize, others: &[AgentState], cfg: &SimConfig, t: f64) -> Result<f64> {
        if others.is_empty() {
            return Ok(0.0);
        }
        let a = &self.agents[i];
        let Motion::OnPath { path, s, d } = a.motion else {
            return Ok(0.0);
        };
        let path = self.road.path(path);
        let v = a.state.velocity.speed();
        let k_max = cfg.predictor.horizon_steps;
        let offsets: Vec<f64> = (0..=k_max)
            .map(|k| k as f64 * cfg.predictor.step_dt)
            .collect();
        let poses: Vec<Pose2> = offsets
            .iter()
            .map(|tau| path.offset_pose(s + v * tau, d))
            .collect();
        let boxes: Vec<OrientedBox> = others.iter().map(|o| o.bbox).collect();
        let av = a.state.bbox.with_center(poses[0]);
        let bx0 = build_safety_box(&av, v * 3.6, &boxes, &cfg.risk.ssd)?;
        let cell = cfg.risk.cell_size;
        let windows: Vec<GridSpec> = poses
            .iter()
            .map(|p| bx0.anchored_at(*p).window_spec(cell))
            .collect::<Result<_>>()?;
        let global = covering_spec(&windows, cell)?;
        let grids = predict_at(others, &global, &cfg.predictor, t, &offsets)?;
        let pco = collision_given_occupancy(&bx0, &windows[0])?;
        let mut prev = resample_window(&grids[0], &windows[0]).into_values();
        let mut best = 0.0f64;
        let mut delta = alloc::vec![0.0; prev.len()];
        let mut pc = alloc::vec![0.0; prev.len()];
        for k in 1..=k_max {
            let curr = resample_window(&grids[k], &windows[k]).into_values();
            for j in 0..curr.len() {
                delta[j] = (curr[j] - prev[j]).clamp(-1.0, 1.0);
                pc[j] = pco[j] * curr[j];
            }
            let r = cox_adjust(&pc, &delta, cfg.risk.cox, k + 1)?;
            best = best.max(max_reduce(&r));
            prev = curr;
        }
        Ok(best)
    }

    fn leader_gap(&self, i: usize) -> Option<(f64, f64)> {
        let me = &self.agents[i].state;
        let fwd = me.pose().forward();
        let left = fwd.perp();
        let mut best: Option<(f64, f64)> = None;
        for (j, o) in self.agents.iter().enumerate() {
            if j == i {
                continue;
            }
            let rel = o.state.bbox.center.position() - me.bbox.center.position();
            let x = rel.dot(fwd);
            if x <= 0.0 || x > self.spec.driver.lookahead {
                continue;
            }
            let y = rel.dot(left).abs();
            if y > 0.5 * me.bbox.width + o.state.bbox.projected_radius(left) + 0.2 {
                continue;
            }
            let gap = x - 0.5 * me.bbox.length - o.state.bbox.projected_radius(fwd);
            let lead_speed = o.state.velocity.as_vec().dot(fwd);
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, lead_speed));
            }
        }
        best
    }

    fn background_accel(&mut self, i: usize, t: f64) -> f64 {
        let p = self.spec.driver;
        let leader = self.leader_gap(i);
        let a = &mut self.agents[i];
        let noise = if p.accel_noise > 0.0 {
            (a.rng.random::<f64>() * 2.0 - 1.0) * p.accel_noise
        } else {
            0.0
        };
        if let Some((decel, until)) = a.brake {
            if t < until - 1e-9 {
                return -decel.min(p.max_decel);
            }
            a.brake = None;
        }
        let v = a.state.velocity.speed();
        let mut acc = p.speed_gain * (a.desired_speed - v);
        if let Some((gap, lead_speed)) = leader {
            let desired = p.min_gap + v * p.headway;
            if gap < desired {
                acc = acc.min(-p.max_decel * (1.0 - gap.max(0.0) / desired));
            }
            let closing = v - lead_speed;
            if closing > 0.0 {
                let room = (gap - 0.5 * p.min_gap).max(0.1);
                acc = acc.min(-closing * closing / (2.0 * room));
            }
        }
        (acc + noise).clamp(-p.max_decel, p.max_accel)
    }

    fn controller_accel(&self, i: usize, risk: f64, policy: &ControllerPolicy) -> f64 {
        let a = &self.agents[i];
        match policy.decide(risk) {
            PolicyAction::Proceed => {
                let v = a.state.velocity.speed();
                let cap = if risk < policy.resume_below {
                    policy.cruise_accel
                } else {
                    0.0
                };
                (self.spec.driver.speed_gain * (a.desired_speed - v)).clamp(-policy.replan_decel, cap)
            }
            PolicyAction::Replan => -policy.replan_decel,
            PolicyAction::Brake => -policy.brake_decel,
        }
    }

    fn integrate(&mut self, i: usize, acc: f64, t_next: f64) {
        let dt = self.spec.tick_dt;
        let vmax = speed_cap(self.spec, self.agents[i].state.kind);
        let a = &mut self.agents[i];
        let prev_heading = a.state.bbox.center.heading;
        match &mut a.motion {
            Motion::Free { departed, speed } => {
                if *departed {
                    let p = a.state.bbox.center;
                    let pos = p.position() + p.forward() * (*speed * dt);
                    a.state.bbox.center = Pose2::new(pos.x, pos.y, p.heading);
                }
                a.state.acceleration = 0.0;
                a.state.yaw_rate = 0.0;
            }
            Motion::OnPath { path, s, d } => {
                let v0 = a.state.velocity.speed();
                let v1 = (v0 + acc * dt).clamp(0.0, vmax);
                let path: &Path = self.road.path(*path);
                let (_, kappa) = path.pose_at(*s);
                let along = 0.5 * (v0 + v1) * dt;
                let stretch = (1.0 - kappa * *d).max(0.1);
                *s += along / stretch;
                let d0 = *d;
                if let Some(lc) = a.lane_change {
                    let u = ((t_next - lc.start) / lc.duration).clamp(0.0, 1.0);
                    *d = lc.from + (lc.to - lc.from) * 0.5 * (1.0 - (PI * u).cos());
                    if u >= 1.0 {
                        a.lane_change = None;
                    }
                }
                let base = path.offset_pose(*s, *d);
                let slip = if along > 1e-9 {
                    (*d - d0).atan2(along)
                } else {
                    0.0
                };
                let heading = normalize_angle(base.heading + slip);
                a.state.bbox.center = Pose2::new(base.x, base.y, heading);
                a.state.velocity = Velocity2::from_speed_heading(v1, heading);
                a.state.acceleration = (v1 - v0) / dt;
                a.state.yaw_rate = normalize_angle(heading - prev_heading) / dt;
            }
        }
    }

    fn ego_station(&self) -> f64 {
        match self.agents[0].motion {
            Motion::OnPath { s, .. } => s,
            Motion::Free { .. } => 0.0,
        }
    }

    fn log(&self, t: f64, rows: &mut Vec<TrajectoryRow>) {
        for a in &self.agents {
            let s = &a.state;
            rows.push(TrajectoryRow {
                t,
                id: s.id,
                kind: s.kind,
                x: s.bbox.center.x,
                y: s.bbox.center.y,
                heading: s.bbox.center.heading,
                vx: s.velocity.vx,
                vy: s.velocity.vy,
                ax: s.acceleration,
                length: s.bbox.length,
                width: s.bbox.width,
            });
        }
    }
}

fn speed_cap(spec: &ScenarioSpec, kind: ParticipantKind) -> f64 {
    match kind {
        ParticipantKind::Pedestrian => spec.speed_limit.min(4.0),
        ParticipantKind::Bicycle => spec.speed_limit.min(12.0),
        _ => spec.speed_limit,
    }
}

/// World-aligned grid covering every window.
/// Agent states at `t = 0`, AV first.
pub fn initial_states(spec: &ScenarioSpec) -> Result<Vec<AgentState>> {
    Ok(World::build(spec)?.agents.iter().map(|a| a.state).collect())
}

/// The AV holding its initial speed along its path, sampled at `offsets`
/// seconds from the start.
pub fn ego_plan(spec: &ScenarioSpec, offsets: &[f64]) -> Result<PlannedTrajectory> {
    spec.validate()?;
    let road = Road::build(&spec.road)?;
    let (path, d) = road.resolve(spec.ego.path)?;
    let path = road.path(path);
    let v = spec.ego.speed.min(spec.speed_limit);
    let samples = offsets
        .iter()
        .map(|&tau| {
            let pose = path.offset_pose(spec.ego.station + v * tau, d);
            TrajectorySample {
                t: tau,
                pose,
                velocity: Velocity2::from_speed_heading(v, pose.heading),
            }
        })
        .collect();
    PlannedTrajectory::new(samples)
}

/// Simulate one episode.
pub fn run_episode(spec: &ScenarioSpec, cfg: &SimConfig) -> Result<EpisodeReport> {
    cfg.validate()?;
    let mut world = World::build(spec)?;
    let dt = spec.tick_dt;
    let ticks = (spec.duration / dt).round().max(1.0) as u64;
    let mut report = EpisodeReport {
        seed: spec.seed,
        family: spec.family,
        metric: cfg.metric,
        outcome: Outcome::Safe,
        conflicts: 0,
        collisions: 0,
        metric_trace: Vec::with_capacity(ticks as usize),
        reward_trace: Vec::with_capacity(ticks as usize),
        min_ttc2_trace: Vec::with_capacity(ticks as usize),
        travel_time: 0.0,
        episode_return: 0.0,
        reached_goal: false,
        recorded: cfg
            .record_metrics
            .iter()
            .filter(|m| **m != cfg.metric)
            .map(|m| MetricTrace {
                metric: *m,
                values: Vec::new(),
            })
            .collect(),
        trajectory: Vec::new(),
    };
    let mut in_conflict = false;
    for step in 0..ticks {
        let t = step as f64 * dt;
        let t_next = (step + 1) as f64 * dt;
        world.fire_scripts(t);
        if cfg.record_trajectory {
            world.log(t, &mut report.trajectory);
        }

        let risk = world.metric(0, cfg.metric, cfg, t)?;
        report.metric_trace.push((t, risk));
        for rec in &mut report.recorded {
            let v = world.metric(0, rec.metric, cfg, t)?;
            rec.values.push((t, v));
        }
        let others = world.states_except(0);
        let ttc2 = min_ttc2_over_agents(&world.agents[0].state, &others, &cfg.ttc2)?.value;
        report.min_ttc2_trace.push((t, ttc2));
        let below = ttc2.is_some_and(|v| v < cfg.conflict_ttc);
        let new_conflict = below && !in_conflict;
        in_conflict = below;
        if new_conflict {
            report.conflicts += 1;
        }

        let mut accels = Vec::with_capacity(world.agents.len());
        for i in 0..world.agents.len() {
            let acc = match world.agents[i].driver {
                Driver::Ego => world.controller_accel(0, risk, &cfg.policy),
                Driver::Controlled => {
                    let r = world.metric(i, cfg.metric, cfg, t)?;
                    world.controller_accel(i, r, &cfg.policy)
                }
                Driver::Background => match world.agents[i].motion {
                    Motion::OnPath { .. } => world.background_accel(i, t),
                    Motion::Free { .. } => 0.0,
                },
            };
            accels.push(acc);
        }
        for (i, acc) in accels.into_iter().enumerate() {
            world.integrate(i, acc, t_next);
        }

        let ego_box = world.agents[0].state.bbox;
        let hits = world.agents[1..]
            .iter()
            .filter(|a| obb_overlap(&ego_box, &a.state.bbox))
            .count() as u32;
        let penalties = new_conflict as u32 + hits;
        let w = cfg.reward;
        let r = -w.alpha * dt - w.delta * penalties as f64 - w.gamma * risk;
        report.reward_trace.push((t, r));
        report.episode_return += r;
        report.travel_time = t_next;
        if hits > 0 {
            report.collisions = hits;
            report.outcome = Outcome::Crash;
            break;
        }
        if let Some(goal) = spec.ego.goal_station {
            if world.ego_station() >= goal {
                report.reached_goal = true;
                break;
            }
        }
    }
    if cfg.record_trajectory {
        world.log(report.travel_time, &mut report.trajectory);
    }
    Ok(report)
}
