//! Canny edge detector: luma, Gaussian blur, Sobel, non-maximum suppression,
//! double-threshold hysteresis. All windowed steps replicate the border.

use std::collections::VecDeque;

use super::SaliencyConfig;
use crate::frames::Frame;
use crate::scalar::{unit, Scalar};

/// Binary edge map, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<bool>,
}

impl EdgeMap {
    pub fn is_empty(&self) -> bool {
        !self.edges.iter().any(|&e| e)
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / self.edges.len() as f64
    }

    pub fn at(&self, x: usize, y: usize) -> bool {
        self.edges[y * self.width + x]
    }
}

/// Real-valued single-channel image used between stages.
#[derive(Debug, Clone)]
pub(crate) struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    #[inline]
    fn clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

/// ITU-R 601 luma in `[0, 1]`.
pub(crate) fn luma<T: Scalar>(frame: &Frame) -> Plane<T> {
    let (wr, wg, wb) = (T::of(0.299), T::of(0.587), T::of(0.114));
    let data = frame
        .pixels()
        .chunks_exact(3)
        .map(|p| wr * unit::<T>(p[0]) + wg * unit::<T>(p[1]) + wb * unit::<T>(p[2]))
        .collect();
    Plane {
        width: frame.width(),
        height: frame.height(),
        data,
    }
}

/// Normalized Gaussian taps for radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel<T: Scalar>(sigma: T) -> Vec<T> {
    if sigma <= T::zero() {
        return vec![T::one()];
    }
    let radius = (T::of(3.0) * sigma).ceil().to_usize().unwrap_or(0);
    let two_s2 = T::of(2.0) * sigma * sigma;
    let taps: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = T::of_usize(i) - T::of_usize(radius);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let total: T = taps.iter().copied().sum();
    taps.into_iter().map(|t| t / total).collect()
}

pub(crate) fn gaussian_blur<T: Scalar>(src: &Plane<T>, sigma: T) -> Plane<T> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (src.width, src.height);
    let mut tmp = Plane {
        width: w,
        height: h,
        data: vec![T::zero(); w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * src.clamped(x as isize + i as isize - r, y as isize);
            }
            tmp.data[y * w + x] = acc;
        }
    }
    let mut out = Plane {
        width: w,
        height: h,
        data: vec![T::zero(); w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * tmp.clamped(x as isize, y as isize + i as isize - r);
            }
            out.data[y * w + x] = acc;
        }
    }
    out
}

/// Sobel 3x3 gradients `(gx, gy)`; `gy` grows downward.
pub(crate) fn sobel<T: Scalar>(src: &Plane<T>) -> (Plane<T>, Plane<T>) {
    let (w, h) = (src.width, src.height);
    let two = T::of(2.0);
    let mut gx = vec![T::zero(); w * h];
    let mut gy = vec![T::zero(); w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| src.clamped(x + dx, y + dy);
            let i = y as usize * w + x as usize;
            gx[i] = (p(1, -1) + two * p(1, 0) + p(1, 1)) - (p(-1, -1) + two * p(-1, 0) + p(-1, 1));
            gy[i] = (p(-1, 1) + two * p(0, 1) + p(1, 1)) - (p(-1, -1) + two * p(0, -1) + p(1, -1));
        }
    }
    (
        Plane { width: w, height: h, data: gx },
        Plane { width: w, height: h, data: gy },
    )
}

/// Neighbor offset along the gradient, quantized to 0/45/90/135 degrees.
fn gradient_step<T: Scalar>(gx: T, gy: T) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < T::zero() {
        angle += T::of(180.0);
    }
    let a = angle.as_f64();
    if !(22.5..157.5).contains(&a) {
        (1, 0)
    } else if a < 67.5 {
        (1, 1)
    } else if a < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Relative magnitude difference treated as a tie during non-maximum suppression.
const NMS_TIE: f64 = 1e-5;

pub fn canny_edges<T: Scalar>(frame: &Frame, config: &SaliencyConfig<T>) -> EdgeMap {
    let (w, h) = (frame.width(), frame.height());
    let empty = EdgeMap {
        width: w,
        height: h,
        edges: vec![false; w * h],
    };

    let blurred = gaussian_blur(&luma::<T>(frame), config.gaussian_sigma);
    let (gx, gy) = sobel(&blurred);
    let mut mag = Plane {
        width: w,
        height: h,
        data: gx.data.iter().zip(&gy.data).map(|(&a, &b)| a.hypot(b)).collect(),
    };
    let max = mag.data.iter().copied().fold(T::zero(), T::max);
    if max <= T::zero() {
        return empty;
    }
    for m in &mut mag.data {
        *m /= max;
    }

    // Keep a pixel if it strictly beats the neighbor behind it and is not
    // beaten by the one ahead; a plateau of two thus yields one pixel.
    // Magnitudes within `tie` count as equal so rounding cannot pick the side.
    let tie = T::of(NMS_TIE);
    let mut thin = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag.data[i];
            if m <= T::zero() {
                continue;
            }
            let (dx, dy) = gradient_step(gx.data[i], gy.data[i]);
            let (xi, yi) = (x as isize, y as isize);
            let behind = mag.clamped(xi - dx, yi - dy);
            let ahead = mag.clamped(xi + dx, yi + dy);
            let behind_is_self = (xi - dx).clamp(0, w as isize - 1) == xi
                && (yi - dy).clamp(0, h as isize - 1) == yi;
            if (m > behind + tie || behind_is_self) && m + tie >= ahead {
                thin[i] = m;
            }
        }
    }

    let mut edges = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= config.canny_high {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && thin[j] >= config.canny_low {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    EdgeMap {
        width: w,
        height: h,
        edges,
    }
}
