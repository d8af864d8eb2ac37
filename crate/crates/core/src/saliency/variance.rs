use super::lab::LabImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Local chromatic variance `var(a) + var(b)` over a `window x window`
/// neighborhood (replicated border), normalized by the frame maximum.
///
/// Deviations are taken from the window's center pixel before squaring, so
/// constant windows produce exactly zero.
pub fn chromatic_variance<T: Scalar>(lab: &LabImage<T>, window: usize) -> Result<Vec<T>> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "variance window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = (lab.width, lab.height);
    let r = (window / 2) as isize;
    let n = T::of_usize(window * window);
    let mut raw = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = lab.data[y as usize * w + x as usize];
            let (mut sa, mut sb, mut sa2, mut sb2) = (T::zero(), T::zero(), T::zero(), T::zero());
            for yy in y - r..=y + r {
                let row = yy.clamp(0, h as isize - 1) as usize * w;
                for xx in x - r..=x + r {
                    let p = lab.data[row + xx.clamp(0, w as isize - 1) as usize];
                    let (da, db) = (p[1] - c[1], p[2] - c[2]);
                    sa += da;
                    sb += db;
                    sa2 += da * da;
                    sb2 += db * db;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let var = (sa2 / n - ma * ma).max(T::zero()) + (sb2 / n - mb * mb).max(T::zero());
            raw.push(var);
        }
    }
    let max = raw.iter().copied().fold(T::zero(), T::max);
    if max > T::zero() {
        for v in &mut raw {
            *v /= max;
        }
    }
    Ok(raw)
}
