//! Spatial saliency and tier assignment.
//!
//! The pixel map is `S = clamp(w_e * edge + w_c * var, 0, 1)` where `edge`
//! is a binary Canny map and `var` the normalized local chromatic (a*, b*)
//! variance. Patch scores are means of `S`; tiers follow fixed thresholds.

pub mod canny;
pub mod lab;
pub mod variance;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{Frame, PatchGrid};
use crate::scalar::Scalar;

pub use canny::{canny_edges, EdgeMap};
pub use lab::{rgb_pixel_to_lab, rgb_to_lab, LabImage};
pub use variance::chromatic_variance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencyConfig<T> {
    pub gaussian_sigma: T,
    pub canny_low: T,
    pub canny_high: T,
    pub variance_window: usize,
    pub edge_weight: T,
    pub variance_weight: T,
    pub tau_high: T,
    pub tau_med: T,
    pub tau_low: T,
}

impl<T: Scalar> Default for SaliencyConfig<T> {
    fn default() -> Self {
        Self {
            gaussian_sigma: T::of(1.4),
            canny_low: T::of(0.10),
            canny_high: T::of(0.25),
            variance_window: 11,
            edge_weight: T::of(0.5),
            variance_weight: T::of(0.5),
            tau_high: T::of(0.60),
            tau_med: T::of(0.35),
            tau_low: T::of(0.15),
        }
    }
}

impl<T: Scalar> SaliencyConfig<T> {
    /// Sets `edge_weight` and derives `variance_weight = 1 - edge_weight`.
    pub fn with_edge_weight(mut self, w: T) -> Self {
        self.edge_weight = w;
        self.variance_weight = T::one() - w;
        self
    }

    pub fn with_tiers(mut self, high: T, med: T, low: T) -> Self {
        self.tau_high = high;
        self.tau_med = med;
        self.tau_low = low;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        if self.gaussian_sigma.is_nan() || self.gaussian_sigma < zero {
            return Err(Error::Config("gaussian sigma must be >= 0".into()));
        }
        if !(zero < self.canny_low && self.canny_low < self.canny_high && self.canny_high <= one) {
            return Err(Error::Config(format!(
                "canny thresholds need 0 < low < high <= 1, got low={} high={}",
                self.canny_low, self.canny_high
            )));
        }
        if self.variance_window < 3 || self.variance_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "variance window must be odd and >= 3, got {}",
                self.variance_window
            )));
        }
        let wsum = self.edge_weight + self.variance_weight;
        if !(self.edge_weight >= zero && self.variance_weight >= zero)
            || (wsum - one).abs() > T::of(1e-6)
        {
            return Err(Error::Config(format!(
                "fusion weights must be >= 0 and sum to 1, got {} + {}",
                self.edge_weight, self.variance_weight
            )));
        }
        if !(zero <= self.tau_low
            && self.tau_low < self.tau_med
            && self.tau_med < self.tau_high
            && self.tau_high <= one)
        {
            return Err(Error::Config(format!(
                "tier thresholds need 0 <= low < med < high <= 1, got ({}, {}, {})",
                self.tau_high, self.tau_med, self.tau_low
            )));
        }
        Ok(())
    }
}

/// Per-pixel saliency in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap<T> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> SaliencyMap<T> {
    pub fn at(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }
}

/// Storage tier of one patch token. Ordered by precision: `Prune < Int4 < Int8 < Fp16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Prune,
    Int4,
    Int8,
    Fp16,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Fp16, Tier::Int8, Tier::Int4, Tier::Prune];
}

pub fn fuse_saliency<T: Scalar>(
    edges: &EdgeMap,
    variance: &[T],
    config: &SaliencyConfig<T>,
) -> Result<SaliencyMap<T>> {
    if edges.edges.len() != variance.len() {
        return Err(Error::DimensionMismatch {
            expected_w: edges.width,
            expected_h: edges.height,
            got_w: variance.len(),
            got_h: 1,
        });
    }
    let values = edges
        .edges
        .iter()
        .zip(variance)
        .map(|(&e, &v)| {
            let e = if e { T::one() } else { T::zero() };
            (config.edge_weight * e + config.variance_weight * v)
                .max(T::zero())
                .min(T::one())
        })
        .collect();
    Ok(SaliencyMap {
        width: edges.width,
        height: edges.height,
        values,
    })
}

/// Full pixel-level pipeline for one frame.
pub fn saliency_map<T: Scalar>(frame: &Frame, config: &SaliencyConfig<T>) -> Result<SaliencyMap<T>> {
    let edges = canny_edges(frame, config);
    let variance = chromatic_variance(&rgb_to_lab(frame), config.variance_window)?;
    fuse_saliency(&edges, &variance, config)
}

/// Mean of `S` over each patch.
pub fn patch_saliency<T: Scalar>(map: &SaliencyMap<T>, grid: &PatchGrid) -> Result<Vec<T>> {
    if map.width != grid.width() || map.height != grid.height() {
        return Err(Error::DimensionMismatch {
            expected_w: grid.width(),
            expected_h: grid.height(),
            got_w: map.width,
            got_h: map.height,
        });
    }
    let area = T::of_usize(grid.patch_area());
    Ok((0..grid.patch_count())
        .map(|p| {
            let r = grid.rect(p);
            let mut sum = T::zero();
            for y in r.y0..r.y0 + r.size {
                let row = y * map.width;
                for &v in &map.values[row + r.x0..row + r.x0 + r.size] {
                    sum += v;
                }
            }
            sum / area
        })
        .collect())
}

pub fn assign_tier<T: Scalar>(s: T, config: &SaliencyConfig<T>) -> Tier {
    if s > config.tau_high {
        Tier::Fp16
    } else if s > config.tau_med {
        Tier::Int8
    } else if s > config.tau_low {
        Tier::Int4
    } else {
        Tier::Prune
    }
}

/// Patch scores and their tiers for one frame.
pub fn patch_tiers<T: Scalar>(
    frame: &Frame,
    grid: &PatchGrid,
    config: &SaliencyConfig<T>,
) -> Result<(Vec<T>, Vec<Tier>)> {
    grid.check(frame)?;
    let scores = patch_saliency(&saliency_map(frame, config)?, grid)?;
    let tiers = scores.iter().map(|&s| assign_tier(s, config)).collect();
    Ok((scores, tiers))
}
