//! Occupancy grids and the spatial algebra used to cut AV-centered windows
//! out of them.
//!
//! Convention: the grid's local frame has its origin at the outer corner of
//! cell `(0, 0)` and its x-axis along `origin.heading`. Columns advance along
//! local x, rows along local y. Continuous coordinate `(row, col)` = `(y, x) /
//! cell_size`, so cell `(r, c)` covers `[r, r + 1) x [c, c + 1)` and its
//! center sits at `(r + 0.5, c + 0.5)`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Pose2, Vec2};

/// Default cell edge in meters for both global and AV-centered grids.
pub const DEFAULT_CELL_SIZE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Pose2,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(origin: Pose2, cell_size: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidParameter {
                what: "cell size",
                value: cell_size,
            });
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter {
                what: "grid extent",
                value: (rows.min(cols)) as f64,
            });
        }
        if !origin.is_finite() {
            return Err(Error::NonFinite("grid origin"));
        }
        Ok(Self {
            origin,
            cell_size,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Continuous `(row, col)` of a world point.
    pub fn world_to_cell(&self, p: Vec2) -> (f64, f64) {
        let local = self.origin.to_local(p);
        (local.y / self.cell_size, local.x / self.cell_size)
    }

    /// Inverse of [`GridSpec::world_to_cell`].
    pub fn cell_to_world(&self, row: f64, col: f64) -> Vec2 {
        self.origin
            .to_world(Vec2::new(col * self.cell_size, row * self.cell_size))
    }

    pub fn cell_center_world(&self, row: usize, col: usize) -> Vec2 {
        self.cell_to_world(row as f64 + 0.5, col as f64 + 0.5)
    }

    /// Geometric equality up to `tol` (meters / radians).
    pub fn approx_eq(&self, other: &GridSpec, tol: f64) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (self.cell_size - other.cell_size).abs() <= tol
            && (self.origin.x - other.origin.x).abs() <= tol
            && (self.origin.y - other.origin.y).abs() <= tol
            && crate::types::normalize_angle(self.origin.heading - other.origin.heading).abs()
                <= tol
    }
}

/// Free function form of [`GridSpec::world_to_cell`].
pub fn world_to_cell(spec: &GridSpec, p: Pose2) -> (f64, f64) {
    spec.world_to_cell(p.position())
}

/// Timestamped probability field. Every value is finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    spec: GridSpec,
    t: f64,
    values: Vec<f64>,
}

impl OccupancyGrid {
    pub fn new(spec: GridSpec, t: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::ShapeMismatch {
                expected: spec.len(),
                found: values.len(),
            });
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("grid timestamp"));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::ProbabilityOutOfRange { index, value });
        }
        Ok(Self { spec, t, values })
    }

    pub fn zeros(spec: GridSpec, t: f64) -> Self {
        Self {
            spec,
            t,
            values: vec![0.0; spec.len()],
        }
    }

    /// Builds a grid from values the caller guarantees to be valid
    /// probabilities (internal rasterizers clamp before calling this).
    pub(crate) fn from_trusted(spec: GridSpec, t: f64, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, t, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.spec.index(row, col)]
    }

    /// Re-stamp the grid with a new time.
    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `(row, col, value)` of the largest cell; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, 0.0);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 / self.spec.cols, best.0 % self.spec.cols, best.1)
    }

    #[inline]
    fn cell_or_zero(&self, row: i64, col: i64) -> f64 {
        if row < 0 || col < 0 || row as usize >= self.spec.rows || col as usize >= self.spec.cols {
            0.0
        } else {
            self.values[row as usize * self.spec.cols + col as usize]
        }
    }
}

/// Bilinear interpolation between cell centers with zero padding. Points
/// outside `[0, rows) x [0, cols)` read as 0.
pub fn sample_bilinear(g: &OccupancyGrid, row: f64, col: f64) -> f64 {
    let spec = &g.spec;
    if !(row >= 0.0 && col >= 0.0 && row < spec.rows as f64 && col < spec.cols as f64) {
        return 0.0;
    }
    let u = row - 0.5;
    let v = col - 0.5;
    let r0 = u.floor();
    let c0 = v.floor();
    let fr = u - r0;
    let fc = v - c0;
    let (r0, c0) = (r0 as i64, c0 as i64);
    let v00 = g.cell_or_zero(r0, c0);
    let v01 = g.cell_or_zero(r0, c0 + 1);
    let v10 = g.cell_or_zero(r0 + 1, c0);
    let v11 = g.cell_or_zero(r0 + 1, c0 + 1);
    let top = v00 * (1.0 - fc) + v01 * fc;
    let bottom = v10 * (1.0 - fc) + v11 * fc;
    (top * (1.0 - fr) + bottom * fr).clamp(0.0, 1.0)
}

/// Sample `src` at the world center of every cell of `window`. The output
/// keeps the source timestamp.
pub fn resample_window(src: &OccupancyGrid, window: &GridSpec) -> OccupancyGrid {
    let mut values = vec![0.0; window.len()];
    // The window-cell -> source-cell map is affine; evaluate it once.
    let base = src.spec.world_to_cell(window.cell_center_world(0, 0));
    let row_step = {
        let p = src.spec.world_to_cell(window.cell_to_world(1.5, 0.5));
        (p.0 - base.0, p.1 - base.1)
    };
    let col_step = {
        let p = src.spec.world_to_cell(window.cell_to_world(0.5, 1.5));
        (p.0 - base.0, p.1 - base.1)
    };
    for r in 0..window.rows {
        let rf = r as f64;
        for c in 0..window.cols {
            let cf = c as f64;
            let row = base.0 + rf * row_step.0 + cf * col_step.0;
            let col = base.1 + rf * row_step.1 + cf * col_step.1;
            values[r * window.cols + c] = sample_bilinear(src, row, col);
        }
    }
    OccupancyGrid::from_trusted(*window, src.t, values)
}

/// Axis-aligned world grid, snapped to multiples of `cell`, that covers every
/// window with a one-cell margin.
pub fn covering_spec(windows: &[GridSpec], cell: f64) -> Result<GridSpec> {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for w in windows {
        for (r, c) in [
            (0.0, 0.0),
            (w.rows as f64, 0.0),
            (0.0, w.cols as f64),
            (w.rows as f64, w.cols as f64),
        ] {
            let p = w.cell_to_world(r, c);
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
    }
    let x0 = (lo.x / cell).floor() * cell - cell;
    let y0 = (lo.y / cell).floor() * cell - cell;
    let cols = ((hi.x - x0) / cell).ceil() as usize + 1;
    let rows = ((hi.y - y0) / cell).ceil() as usize + 1;
    GridSpec::new(Pose2::new(x0, y0, 0.0), cell, rows, cols)
}

pub fn grid_total_mass(g: &OccupancyGrid) -> f64 {
    g.values.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn spec(rows: usize, cols: usize, cell: f64) -> GridSpec {
        GridSpec::new(Pose2::new(0.0, 0.0, 0.0), cell, rows, cols).unwrap()
    }

    #[test]
    fn origin_maps_to_zero() {
        let s = GridSpec::new(Pose2::new(2.0, -1.0, 0.3), 0.5, 10, 10).unwrap();
        let (r, c) = world_to_cell(&s, Pose2::new(2.0, -1.0, 0.0));
        assert!(r.abs() < 1e-12 && c.abs() < 1e-12);
    }

    #[test]
    fn row_follows_y_and_col_follows_x() {
        let s = spec(10, 10, 0.5);
        let (r, c) = world_to_cell(&s, Pose2::new(1.0, 0.5, 0.0));
        assert!((r - 1.0).abs() < 1e-12);
        assert!((c - 2.0).abs() < 1e-12);
    }

    #[test]
    fn far_point_is_out_of_range() {
        let s = spec(10, 20, 0.5);
        let (r, _) = world_to_cell(&s, Pose2::new(1.0, 10.0, 0.0));
        assert!(r >= 10.0);
        let (_, c) = world_to_cell(&s, Pose2::new(20.0, 1.0, 0.0));
        assert!(c >= 20.0);
    }

    #[test]
    fn bilinear_center_midpoint_and_outside() {
        let s = spec(1, 2, 1.0);
        let g = OccupancyGrid::new(s, 0.0, vec![0.2, 0.6]).unwrap();
        assert_eq!(sample_bilinear(&g, 0.5, 0.5), 0.2);
        assert_eq!(sample_bilinear(&g, 0.5, 1.5), 0.6);
        assert!((sample_bilinear(&g, 0.5, 1.0) - 0.4).abs() < 1e-12);
        assert_eq!(sample_bilinear(&g, -5.0, -5.0), 0.0);
        assert_eq!(sample_bilinear(&g, 0.5, 2.0), 0.0);
        assert_eq!(sample_bilinear(&g, f64::NAN, 0.5), 0.0);
    }

    #[test]
    fn identity_resample() {
        let s = GridSpec::new(Pose2::new(1.0, 2.0, 0.4), 0.5, 8, 9).unwrap();
        let values: Vec<f64> = (0..s.len()).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let g = OccupancyGrid::new(s, 1.5, values).unwrap();
        let out = resample_window(&g, &s);
        assert_eq!(out.t(), 1.5);
        for (a, b) in out.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn window_outside_is_zero() {
        let s = spec(10, 10, 0.5);
        let g = OccupancyGrid::new(s, 0.0, vec![1.0; 100]).unwrap();
        let w = GridSpec::new(Pose2::new(100.0, 100.0, 1.0), 0.5, 5, 5).unwrap();
        assert!(resample_window(&g, &w).values().iter().all(|&v| v == 0.0));
    }

    /// Nearest-neighbor rotation oracle: the window cell whose center is
    /// closest to the source peak's center.
    #[test]
    fn rotated_delta_lands_in_mapped_cell() {
        let s = spec(21, 21, 0.5);
        let mut values = vec![0.0; s.len()];
        let (pr, pc) = (6usize, 14usize);
        values[s.index(pr, pc)] = 1.0;
        let g = OccupancyGrid::new(s, 0.0, values).unwrap();
        // Window rotated 90 degrees about the center of cell (10, 10).
        let pivot = s.cell_center_world(10, 10);
        let half = 10.5 * 0.5;
        let corner = pivot + Vec2::new(-half, -half).rotate(PI / 2.0);
        let w = GridSpec::new(Pose2::new(corner.x, corner.y, PI / 2.0), 0.5, 21, 21).unwrap();
        let out = resample_window(&g, &w);
        let (r, c, v) = out.argmax();

        let peak = s.cell_center_world(pr, pc);
        let (mut best, mut best_d) = ((0, 0), f64::INFINITY);
        for rr in 0..w.rows {
            for cc in 0..w.cols {
                let d = (w.cell_center_world(rr, cc) - peak).norm();
                if d < best_d {
                    best_d = d;
                    best = (rr, cc);
                }
            }
        }
        assert!((r as i64 - best.0 as i64).abs() <= 1);
        assert!((c as i64 - best.1 as i64).abs() <= 1);
        assert!(v > 0.9);
    }

    #[test]
    fn total_mass() {
        let s = spec(10, 10, 0.5);
        assert_eq!(grid_total_mass(&OccupancyGrid::zeros(s, 0.0)), 0.0);
        let mut one = vec![0.0; 100];
        one[17] = 1.0;
        assert_eq!(grid_total_mass(&OccupancyGrid::new(s, 0.0, one).unwrap()), 1.0);
        let uniform = OccupancyGrid::new(s, 0.0, vec![0.1; 100]).unwrap();
        assert!((grid_total_mass(&uniform) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_values() {
        let s = spec(1, 2, 1.0);
        assert!(OccupancyGrid::new(s, 0.0, vec![0.5]).is_err());
        assert!(OccupancyGrid::new(s, 0.0, vec![0.5, 1.5]).is_err());
        assert!(OccupancyGrid::new(s, 0.0, vec![0.5, f64::NAN]).is_err());
        assert!(GridSpec::new(Pose2::default(), 0.0, 1, 1).is_err());
        assert!(GridSpec::new(Pose2::default(), 1.0, 0, 1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn gaussian_grid(s: GridSpec, center: Vec2, sigma: f64) -> OccupancyGrid {
            let mut values = vec![0.0; s.len()];
            for r in 0..s.rows {
                for c in 0..s.cols {
                    let d = s.cell_center_world(r, c) - center;
                    values[s.index(r, c)] = (-0.5 * d.dot(d) / (sigma * sigma)).exp();
                }
            }
            OccupancyGrid::new(s, 0.0, values).unwrap()
        }

        proptest! {
            #[test]
            fn resampled_values_stay_in_unit_interval(
                seed in 0u64..1000, ox in -3.0..3.0f64, oy in -3.0..3.0f64,
                h in -PI..PI, cell in 0.2..1.5f64,
            ) {
                let s = spec(12, 12, 0.5);
                let values: Vec<f64> = (0..s.len())
                    .map(|i| (((i as u64 + 1) * (seed + 7919)) % 1009) as f64 / 1008.0)
                    .collect();
                let g = OccupancyGrid::new(s, 0.0, values).unwrap();
                let w = GridSpec::new(Pose2::new(ox, oy, h), cell, 9, 7).unwrap();
                let out = resample_window(&g, &w);
                prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }

            #[test]
            fn cell_world_round_trip(
                ox in -50.0..50.0f64, oy in -50.0..50.0f64, h in -PI..PI,
                cell in 0.1..2.0f64, r in 0.0..40.0f64, c in 0.0..40.0f64,
            ) {
                let s = GridSpec::new(Pose2::new(ox, oy, h), cell, 40, 40).unwrap();
                let p = s.cell_to_world(r, c);
                let (r2, c2) = s.world_to_cell(p);
                prop_assert!(((r2 - r) * cell).abs() < 1e-9);
                prop_assert!(((c2 - c) * cell).abs() < 1e-9);
            }

            #[test]
            fn interior_crop_conserves_gaussian_mass(
                sigma_cells in 2.0..4.0f64, h in -PI..PI,
                dx in -1.0..1.0f64, dy in -1.0..1.0f64,
            ) {
                let s = spec(80, 80, 0.5);
                let center = Vec2::new(20.0, 20.0);
                let g = gaussian_grid(s, center, sigma_cells * 0.5);
                // 40x40 window rotated about the blob, >= 2 cells from the border.
                let half = 20.0 * 0.5;
                let pivot = center + Vec2::new(dx, dy);
                let corner = pivot + Vec2::new(-half, -half).rotate(h);
                let w = GridSpec::new(Pose2::new(corner.x, corner.y, h), 0.5, 40, 40).unwrap();
                let src_mass = grid_total_mass(&g);
                let out_mass = grid_total_mass(&resample_window(&g, &w));
                prop_assert!((out_mass - src_mass).abs() / src_mass < 0.05);
            }
        }
    }
}
