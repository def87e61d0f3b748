//! Dynamic scatter-subregion identification: thresholding of the current
//! permittivity estimate, stability tracking of the active-cell count, and
//! the mask update policy.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::em::PermittivityMap;
use crate::error::{Error, Result};

/// Fraction of the smallest real-part values used for the background statistics.
pub const BACKGROUND_FRACTION: f64 = 0.3;
/// Number of standard deviations above the background mean.
pub const THRESHOLD_SIGMAS: f64 = 3.0;
pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_PERIOD: usize = 100;
pub const DEFAULT_MIN_UPDATE_ITER: usize = 500;

/// Active-cell indicator over the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    bits: Array2<bool>,
    count: usize,
}

impl BinaryMask {
    pub fn from_bits(bits: Array2<bool>) -> Self {
        let count = bits.iter().filter(|&&b| b).count();
        Self { bits, count }
    }

    /// Builds a mask from flat row-major flags.
    pub fn from_flat(n_side: usize, flags: Vec<bool>) -> Result<Self> {
        Array2::from_shape_vec((n_side, n_side), flags)
            .map(Self::from_bits)
            .map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn full(n_side: usize) -> Self {
        Self::from_bits(Array2::from_elem((n_side, n_side), true))
    }

    pub fn empty(n_side: usize) -> Self {
        Self::from_bits(Array2::from_elem((n_side, n_side), false))
    }

    /// Cells whose permittivity differs from the free-space background.
    pub fn support_of(eps: &PermittivityMap) -> Self {
        Self::from_bits(eps.values.mapv(|e| e != num_complex::Complex64::new(1.0, 0.0)))
    }

    /// Number of active cells, C_B.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn n_side(&self) -> usize {
        self.bits.nrows()
    }

    pub fn bits(&self) -> &Array2<bool> {
        &self.bits
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[[i, j]]
    }

    /// Flat row-major indices of active cells, ascending.
    pub fn active_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
            .collect()
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_bits(ndarray::Zip::from(&self.bits).and(&other.bits).map_collect(|&a, &b| a || b))
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.bits.iter().zip(other.bits.iter()).filter(|(a, b)| **a && **b).count()
    }

    pub fn is_superset_of(&self, other: &Self) -> bool {
        self.intersection_count(other) == other.count
    }
}

/// Thresholds Re(ε̂) at μ + 3σ, where μ and σ (population) are the mean and
/// standard deviation of the smallest ⌈0.3 N⌉ real parts over the whole map.
///
/// Cells strictly above the threshold are active. When no cell is strictly
/// above it (a uniform map) the comparison is inclusive, which makes every
/// cell active.
pub fn threshold_mask(eps: &PermittivityMap) -> BinaryMask {
    let re: Vec<f64> = eps.values.iter().map(|z| z.re).collect();
    let threshold = background_threshold(&re);
    let strict = eps.values.mapv(|z| z.re > threshold);
    if strict.iter().any(|&b| b) {
        BinaryMask::from_bits(strict)
    } else {
        BinaryMask::from_bits(eps.values.mapv(|z| z.re >= threshold))
    }
}

/// μ + 3σ of the smallest ⌈0.3 N⌉ values.
pub fn background_threshold(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let take = ((BACKGROUND_FRACTION * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let (mean, std) = mean_std(&sorted[..take]);
    mean + THRESHOLD_SIGMAS * std
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Recent active-cell counts and their statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTracker {
    history: VecDeque<usize>,
    window: usize,
    mean: f64,
    std: f64,
}

impl StabilityTracker {
    pub fn new(window: usize) -> Self {
        Self {
            history: VecDeque::with_capacity(window),
            window: window.max(1),
            mean: 0.0,
            std: 0.0,
        }
    }

    pub fn history(&self) -> impl Iterator<Item = usize> + '_ {
        self.history.iter().copied()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn push(&mut self, count: usize) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(count);
        let vals: Vec<f64> = self.history.iter().map(|&c| c as f64).collect();
        (self.mean, self.std) = mean_std(&vals);
    }

    /// Tests `count` against the buffered statistics (closed interval
    /// |C_B − μ_C| ≤ σ_C), then records it. Never stable before the buffer
    /// holds a full window.
    pub fn update(&mut self, count: usize) -> bool {
        let stable = self.history.len() == self.window
            && (count as f64 - self.mean).abs() <= self.std;
        self.push(count);
        stable
    }
}

/// Functional form of [`StabilityTracker::update`].
pub fn stability_update(tracker: &StabilityTracker, count: usize) -> (StabilityTracker, bool) {
    let mut next = tracker.clone();
    let stable = next.update(count);
    (next, stable)
}

/// Outcome of a mask update attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskUpdate {
    Updated(BinaryMask),
    /// The proposed mask was empty; the current mask stays in place.
    KeptCurrent,
}

/// First update: B⁽⁰⁾ ∪ B⁽ᵏ⁾. Later updates: B⁽ᵏ⁾. An empty result keeps the
/// current mask.
pub fn update_mask(
    current: &BinaryMask,
    proposed: &BinaryMask,
    initial: &BinaryMask,
    is_first_update: bool,
) -> MaskUpdate {
    let next = if is_first_update {
        initial.union(proposed)
    } else {
        proposed.clone()
    };
    if next.is_empty() {
        log::warn!("subregion update produced an empty mask; keeping the current {} cells", current.count());
        MaskUpdate::KeptCurrent
    } else {
        MaskUpdate::Updated(next)
    }
}

/// What the training loop does at an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    None,
    /// Record the active-cell count only.
    ThresholdOnly,
    /// Record the count and update the mask if it is stable.
    ThresholdAndMaybeUpdate,
}

/// Thresholding cadence and the earliest iteration allowed to change the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub period: usize,
    pub min_update_iter: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            period: DEFAULT_PERIOD,
            min_update_iter: DEFAULT_MIN_UPDATE_ITER,
        }
    }
}

impl Schedule {
    pub fn new(period: usize, min_update_iter: usize) -> Result<Self> {
        if period == 0 || min_update_iter < period {
            return Err(Error::Config(format!(
                "need period > 0 and min_update_iter >= period, got {period} and {min_update_iter}"
            )));
        }
        Ok(Self { period, min_update_iter })
    }

    pub fn action(&self, iter: usize) -> ScheduleAction {
        if iter == 0 || !iter.is_multiple_of(self.period) {
            ScheduleAction::None
        } else if iter < self.min_update_iter {
            ScheduleAction::ThresholdOnly
        } else {
            ScheduleAction::ThresholdAndMaybeUpdate
        }
    }
}

/// Action at iteration `k` under the default schedule.
pub fn schedule(k: usize) -> ScheduleAction {
    Schedule::default().action(k)
}
