//! Wall-clock latency of the three per-step risk stages.

use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use pora_core::grid::{resample_window, GridSpec, OccupancyGrid};
use pora_core::risk::{
    collision_given_occupancy, collision_probability, cox_adjust, max_reduce, CoxParams, SafetyBox,
};
use pora_core::types::Pose2;

pub const STAGES: [&str; 3] = ["crop+rotate", "collision map P(C|O)", "cox adj. + reduce"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    /// `rows x cols` of the AV window.
    pub window: String,
    pub stage: String,
    pub median_ms: f64,
    pub p95_ms: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Smooth deterministic field in `[0, 1]`.
fn global_grid(side: usize, cell: f64) -> OccupancyGrid {
    let half = side as f64 * cell / 2.0;
    let spec = GridSpec::new(Pose2::new(-half, -half, 0.0), cell, side, side).expect("spec");
    let values = (0..side * side)
        .map(|i| {
            let (r, c) = ((i / side) as f64, (i % side) as f64);
            0.5 + 0.5 * (0.11 * r).sin() * (0.07 * c + 0.3).cos()
        })
        .collect();
    OccupancyGrid::new(spec, 0.0, values).expect("grid")
}

fn window_box(rows: usize, cols: usize, cell: f64) -> SafetyBox {
    let length = cols as f64 * cell;
    SafetyBox {
        width: rows as f64 * cell,
        length,
        sub_length: 0.3 * length,
        sub_width: 0.5 * rows as f64 * cell,
        rear_offset: 0.25 * length,
        anchor: Pose2::new(1.3, -0.7, 0.4),
    }
}

/// Medians and 95th percentiles per stage, plus their per-repetition total.
pub fn bench_latency(windows: &[(usize, usize)], repetitions: usize) -> Vec<BenchRow> {
    let cell = 0.5;
    let cox = CoxParams::default();
    let mut out = Vec::new();
    for &(rows, cols) in windows {
        let side = 2 * rows.max(cols) + 16;
        let global = global_grid(side, cell);
        let bx = window_box(rows, cols, cell);
        let spec = bx.window_spec(cell).expect("window");
        let prev = resample_window(&global, &spec);
        let mut times = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for _ in 0..repetitions {
            let t0 = Instant::now();
            let p_occ = resample_window(black_box(&global), black_box(&spec)).into_values();
            let t1 = Instant::now();
            let pco = collision_given_occupancy(black_box(&bx), &spec).expect("pco");
            let p_coll = collision_probability(&pco, &p_occ).expect("p_coll");
            let t2 = Instant::now();
            let delta: Vec<f64> = p_occ
                .iter()
                .zip(prev.values())
                .map(|(a, b)| (a - b).clamp(-1.0, 1.0))
                .collect();
            let score = max_reduce(&cox_adjust(&p_coll, &delta, cox, 2).expect("cox"));
            let t3 = Instant::now();
            black_box(score);
            let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
            times[0].push(ms(t0, t1));
            times[1].push(ms(t1, t2));
            times[2].push(ms(t2, t3));
            times[3].push(ms(t0, t3));
        }
        for (name, mut samples) in STAGES.iter().copied().chain(["total"]).zip(times) {
            samples.sort_by(f64::total_cmp);
            out.push(BenchRow {
                window: format!("{rows}x{cols}"),
                stage: name.to_string(),
                median_ms: quantile(&samples, 0.5),
                p95_ms: quantile(&samples, 0.95),
            });
        }
    }
    out
}

pub fn bench_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("window,stage,median_ms,p95_ms\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.window, r.stage, r.median_ms, r.p95_ms));
    }
    out
}
