//! End-to-end use of the public API: predict, score, simulate.

use proptest::prelude::*;

use pora_core::grid::{GridSpec, OccupancyGrid};
use pora_core::predictor::{predict_occupancy, PredictorConfig};
use pora_core::risk::{pora_trajectory, RiskParams};
use pora_core::sim::{
    ego_plan, generate_scenario, initial_states, run_episode, BatchSummary, Family,
    FamilyParams, MetricKind, SimConfig,
};
use pora_core::types::{
    AgentId, AgentState, OrientedBox, ParticipantKind, PlannedTrajectory, Pose2,
    TrajectorySample, Velocity2,
};

fn straight_plan(speed: f64, steps: usize, dt: f64) -> PlannedTrajectory {
    let samples = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            TrajectorySample {
                t,
                pose: Pose2::new(speed * t, 0.0, 0.0),
                velocity: Velocity2::new(speed, 0.0),
            }
        })
        .collect();
    PlannedTrajectory::new(samples).unwrap()
}

fn world() -> GridSpec {
    GridSpec::new(Pose2::new(-20.0, -15.0, 0.0), 0.5, 60, 240).unwrap()
}

fn car(id: u32, x: f64, y: f64, heading: f64, speed: f64) -> AgentState {
    AgentState::with_default_dimensions(
        AgentId(id),
        ParticipantKind::Car,
        Pose2::new(x, y, heading),
        Velocity2::from_speed_heading(speed, heading),
    )
}

#[test]
fn stopped_car_ahead_scores_higher_than_empty_road() {
    let cfg = PredictorConfig::default();
    let plan = straight_plan(12.0, cfg.horizon_steps, cfg.step_dt);
    let dims = [OrientedBox::new(Pose2::default(), 4.5, 1.8).unwrap()];
    let risk = RiskParams {
        cox: pora_core::risk::CoxParams { beta: 0.25 },
        ..RiskParams::default()
    };

    let blocked = predict_occupancy(&[car(1, 45.0, 0.0, 0.0, 0.0)], &world(), &cfg).unwrap();
    let empty: Vec<OccupancyGrid> = predict_occupancy(&[], &world(), &cfg).unwrap();
    let a = pora_trajectory(&plan, &blocked, (4.5, 2.0), &dims, &risk).unwrap();
    let b = pora_trajectory(&plan, &empty, (4.5, 2.0), &dims, &risk).unwrap();
    assert_eq!(a.len(), cfg.horizon_steps);
    assert!(b.iter().all(|s| s.score == 0.0));
    // The gap closes step by step, so the last step carries the highest risk.
    let last = a.last().unwrap().score;
    assert!(last > 0.5, "{last}");
    assert!(a.iter().all(|s| s.score <= last + 1e-12));
}

#[test]
fn scenario_plan_and_states_agree() {
    let spec = generate_scenario(Family::LaneIncursion, 9, &FamilyParams::default()).unwrap();
    let states = initial_states(&spec).unwrap();
    let plan = ego_plan(&spec, &[0.0, 0.5, 1.0]).unwrap();
    let first = plan.samples()[0].pose;
    assert_eq!(states[0].id, AgentId(0));
    assert!((first.position() - states[0].pose().position()).norm() < 1e-9);
    assert!(states.len() > 1);
}

#[test]
fn episode_replays_identically() {
    let p = FamilyParams {
        duration: 6.0,
        ..FamilyParams::default()
    };
    for family in Family::ALL {
        let spec = generate_scenario(family, 77, &p).unwrap();
        let cfg = SimConfig {
            record_metrics: vec![MetricKind::Ttc1, MetricKind::Ttc2],
            record_trajectory: true,
            ..SimConfig::default()
        };
        let a = run_episode(&spec, &cfg).unwrap();
        let b = run_episode(&spec, &cfg).unwrap();
        assert_eq!(a, b);
        let s = BatchSummary::from_reports(&[a]).unwrap();
        assert_eq!(s.episodes, 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_stay_in_unit_interval(
        x in 8.0..80.0f64, y in -4.0..4.0f64, h in -3.1..3.1f64, v in 0.0..15.0f64,
        av_speed in 0.0..25.0f64, beta in 0.0..5.0f64,
    ) {
        let cfg = PredictorConfig::default();
        let plan = straight_plan(av_speed, cfg.horizon_steps, cfg.step_dt);
        let grids = predict_occupancy(&[car(1, x, y, h, v)], &world(), &cfg).unwrap();
        let dims = [OrientedBox::new(Pose2::default(), 4.5, 1.8).unwrap()];
        let risk = RiskParams {
            cox: pora_core::risk::CoxParams { beta },
            ..RiskParams::default()
        };
        let scores = pora_trajectory(&plan, &grids, (4.5, 2.0), &dims, &risk).unwrap();
        for s in &scores {
            prop_assert!((0.0..=1.0).contains(&s.score), "{}", s.score);
            let f = s.field.as_ref().unwrap();
            prop_assert!(f.risk_norm.iter().zip(&f.p_coll).all(|(r, p)| *r <= *p + 1e-12 || s.k > 1));
        }
        // k = 1 is the plain maximum of P(C|O) * P(O).
        let f = scores[0].field.as_ref().unwrap();
        let direct = f.p_coll_given_occ.iter().zip(&f.p_occ).map(|(a, b)| a * b).fold(0.0, f64::max);
        prop_assert!((scores[0].score - direct).abs() <= 1e-12);
    }
}
