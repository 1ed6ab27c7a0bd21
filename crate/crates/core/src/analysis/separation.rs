//! How well a risk metric separates crash episodes from safe ones.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `KL(crash || safe)`.
    #[default]
    CrashSafe,
    /// `KL(safe || crash)`.
    SafeCrash,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSuggestion {
    /// Largest bin edge below which the safe density beats the crash density
    /// in every bin.
    pub proceed_below: Option<f64>,
    /// Smallest bin edge above which the crash density beats the safe density
    /// in every bin.
    pub brake_above: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub bins: usize,
    pub safe_samples: usize,
    pub crash_samples: usize,
    /// Smoothed and normalized.
    pub safe_hist: Vec<f64>,
    pub crash_hist: Vec<f64>,
    pub direction: KlDirection,
    /// Nats.
    pub kl: f64,
    pub threshold_suggestions: ThresholdSuggestion,
}

/// Counts over `bins` equal bins on `[0, 1]`; values outside are clamped and
/// 1.0 falls in the last bin.
pub fn histogram(samples: &[f64], bins: usize) -> Vec<u64> {
    let mut out = vec![0u64; bins];
    for &s in samples {
        let b = ((s.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        out[b] += 1;
    }
    out
}

/// Add-one smoothing, normalized to sum 1.
pub fn laplace_density(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    let den = (total + counts.len() as u64) as f64;
    counts.iter().map(|&c| (c + 1) as f64 / den).collect()
}

/// `sum p ln(p / q)`; both must be strictly positive where `p` is.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

fn thresholds(safe: &[f64], crash: &[f64]) -> ThresholdSuggestion {
    let bins = safe.len();
    let width = 1.0 / bins as f64;
    let low = (0..bins).take_while(|&b| safe[b] > crash[b]).count();
    let high = (0..bins).rev().take_while(|&b| crash[b] > safe[b]).count();
    ThresholdSuggestion {
        proceed_below: (low > 0).then_some(low as f64 * width),
        brake_above: (high > 0).then(|| (bins - high) as f64 * width),
    }
}

pub fn kl_separation(
    safe: &[f64],
    crash: &[f64],
    bins: usize,
    direction: KlDirection,
) -> Result<SeparationReport> {
    if safe.is_empty() {
        return Err(Error::EmptyInput("safe samples"));
    }
    if crash.is_empty() {
        return Err(Error::EmptyInput("crash samples"));
    }
    if bins < 2 {
        return Err(Error::InvalidParameter {
            what: "bin count",
            value: bins as f64,
        });
    }
    if safe.iter().chain(crash).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric samples"));
    }
    let safe_hist = laplace_density(&histogram(safe, bins));
    let crash_hist = laplace_density(&histogram(crash, bins));
    let kl = match direction {
        KlDirection::CrashSafe => kl_divergence(&crash_hist, &safe_hist),
        KlDirection::SafeCrash => kl_divergence(&safe_hist, &crash_hist),
    };
    Ok(SeparationReport {
        bins,
        safe_samples: safe.len(),
        crash_samples: crash.len(),
        threshold_suggestions: thresholds(&safe_hist, &crash_hist),
        safe_hist,
        crash_hist,
        direction,
        kl,
    })
}
