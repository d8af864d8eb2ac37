//! Inter-frame redundancy: per-patch RMS differences and the frame-level
//! redundancy score that decides whole-frame cache reuse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{Frame, PatchGrid};
use crate::scalar::{unit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalConfig<T> {
    /// Per-patch RMS difference below which a patch counts as unchanged.
    pub tau_t: T,
    /// Fraction of unchanged patches above which the frame is redundant.
    pub theta_r: T,
}

impl<T: Scalar> Default for TemporalConfig<T> {
    fn default() -> Self {
        Self {
            tau_t: T::of(0.02),
            theta_r: T::of(0.90),
        }
    }
}

impl<T: Scalar> TemporalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.tau_t.is_nan() || self.tau_t < T::zero() {
            return Err(Error::Config(format!("tau_t must be >= 0, got {}", self.tau_t)));
        }
        if !(self.theta_r >= T::zero() && self.theta_r <= T::one()) {
            return Err(Error::Config(format!(
                "theta_r must lie in [0, 1], got {}",
                self.theta_r
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Redundant,
    Novel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedundancyReport<T> {
    pub deltas: Vec<T>,
    pub redundant_mask: Vec<bool>,
    pub r_frame: T,
    pub verdict: Verdict,
}

/// Source of per-patch change magnitudes between consecutive frames.
pub trait TemporalSignal<T: Scalar> {
    fn patch_deltas(&self, prev: &Frame, curr: &Frame, grid: &PatchGrid) -> Result<Vec<T>>;
}

/// RMS pixel difference over each patch's `3 P^2` channel values, in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PatchDifference;

impl<T: Scalar> TemporalSignal<T> for PatchDifference {
    fn patch_deltas(&self, prev: &Frame, curr: &Frame, grid: &PatchGrid) -> Result<Vec<T>> {
        patch_deltas(prev, curr, grid)
    }
}

pub fn patch_deltas<T: Scalar>(prev: &Frame, curr: &Frame, grid: &PatchGrid) -> Result<Vec<T>> {
    grid.check(prev)?;
    grid.check(curr)?;
    let width = grid.width();
    let n = T::of_usize(3 * grid.patch_area());
    let (a, b) = (prev.pixels(), curr.pixels());
    let deltas = (0..grid.patch_count())
        .map(|p| {
            let r = grid.rect(p);
            let mut sum = T::zero();
            for y in r.y0..r.y0 + r.size {
                let row = (y * width + r.x0) * 3;
                for i in row..row + r.size * 3 {
                    let d = unit::<T>(b[i]) - unit::<T>(a[i]);
                    sum += d * d;
                }
            }
            (sum / n).sqrt()
        })
        .collect();
    Ok(deltas)
}

/// Classifies a frame from its patch deltas. Both comparisons are strict.
pub fn frame_redundancy<T: Scalar>(
    deltas: &[T],
    config: &TemporalConfig<T>,
) -> Result<RedundancyReport<T>> {
    if deltas.is_empty() {
        return Err(Error::Empty("delta list"));
    }
    let redundant_mask: Vec<bool> = deltas.iter().map(|&d| d < config.tau_t).collect();
    let count = redundant_mask.iter().filter(|&&r| r).count();
    let r_frame = T::of_usize(count) / T::of_usize(deltas.len());
    let verdict = if r_frame > config.theta_r {
        Verdict::Redundant
    } else {
        Verdict::Novel
    };
    Ok(RedundancyReport {
        deltas: deltas.to_vec(),
        redundant_mask,
        r_frame,
        verdict,
    })
}

/// Convenience: deltas plus classification for `curr` against its predecessor.
pub fn classify<T: Scalar>(
    prev: &Frame,
    curr: &Frame,
    grid: &PatchGrid,
    config: &TemporalConfig<T>,
) -> Result<RedundancyReport<T>> {
    frame_redundancy(&patch_deltas(prev, curr, grid)?, config)
}
