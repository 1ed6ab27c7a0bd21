use std::path::Path;

use proptest::prelude::*;

use pora::io::{
    grid_from_csv, grid_from_json, grid_to_csv, grid_to_json, plan_from_csv, plan_to_csv,
    scenario_from_json, scenario_to_json,
};
use pora_core::grid::{GridSpec, OccupancyGrid};
use pora_core::sim::{generate_scenario, Family, FamilyParams};
use pora_core::types::{PlannedTrajectory, Pose2, TrajectorySample, Velocity2};

fn grid_strategy() -> impl Strategy<Value = OccupancyGrid> {
    (1usize..12, 1usize..12, 0.05..3.0f64, -1e3..1e3f64, -1e3..1e3f64, -3.0..3.0f64, 0.0..100.0f64)
        .prop_flat_map(|(rows, cols, cell, x, y, h, t)| {
            prop::collection::vec(0.0..=1.0f64, rows * cols).prop_map(move |values| {
                let spec = GridSpec::new(Pose2::new(x, y, h), cell, rows, cols).unwrap();
                OccupancyGrid::new(spec, t, values).unwrap()
            })
        })
}

proptest! {
    #[test]
    fn grid_csv_is_bit_exact(g in grid_strategy()) {
        let back = grid_from_csv(Path::new("g.csv"), &grid_to_csv(&g)).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn grid_json_is_bit_exact(g in grid_strategy()) {
        let back = grid_from_json(Path::new("g.json"), &grid_to_json(&g)).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn plan_csv_is_bit_exact(
        t0 in -10.0..10.0f64, dt in 0.01..1.0f64,
        pts in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64, -3.0..3.0f64, 0.0..40.0f64), 1..20),
    ) {
        let samples = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y, h, v))| TrajectorySample {
                t: t0 + i as f64 * dt,
                pose: Pose2::new(x, y, h),
                velocity: Velocity2::from_speed_heading(v, h),
            })
            .collect();
        let plan = PlannedTrajectory::new(samples).unwrap();
        let back = plan_from_csv(Path::new("p.csv"), &plan_to_csv(&plan)).unwrap();
        prop_assert_eq!(back, plan);
    }

    #[test]
    fn scenario_json_round_trips(seed in 0u64..500, family in 0usize..4) {
        let spec = generate_scenario(Family::ALL[family], seed, &FamilyParams::default()).unwrap();
        let back = scenario_from_json(Path::new("s.json"), &scenario_to_json(&spec)).unwrap();
        prop_assert_eq!(back, spec);
    }
}
