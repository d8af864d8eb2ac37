use crate::frames::Frame;
use crate::scalar::{unit, Scalar};

/// Per-pixel CIELAB triples `[L, a, b]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[T; 3]>,
}

// sRGB primaries, D65 white.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];
const WHITE_D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];

fn srgb_to_linear<T: Scalar>(c: T) -> T {
    if c <= T::of(0.040_45) {
        c / T::of(12.92)
    } else {
        ((c + T::of(0.055)) / T::of(1.055)).powf(T::of(2.4))
    }
}

fn lab_f<T: Scalar>(t: T) -> T {
    let delta = T::of(6.0 / 29.0);
    if t > delta * delta * delta {
        t.cbrt()
    } else {
        t / (T::of(3.0) * delta * delta) + T::of(4.0 / 29.0)
    }
}

pub fn rgb_pixel_to_lab<T: Scalar>(rgb: [u8; 3]) -> [T; 3] {
    let lin = rgb.map(|c| srgb_to_linear(unit::<T>(c)));
    let mut f = [T::zero(); 3];
    for (k, row) in RGB_TO_XYZ.iter().enumerate() {
        let xyz = T::of(row[0]) * lin[0] + T::of(row[1]) * lin[1] + T::of(row[2]) * lin[2];
        f[k] = lab_f(xyz / T::of(WHITE_D65[k]));
    }
    [
        T::of(116.0) * f[1] - T::of(16.0),
        T::of(500.0) * (f[0] - f[1]),
        T::of(200.0) * (f[1] - f[2]),
    ]
}

pub fn rgb_to_lab<T: Scalar>(frame: &Frame) -> LabImage<T> {
    let data = frame
        .pixels()
        .chunks_exact(3)
        .map(|p| rgb_pixel_to_lab([p[0], p[1], p[2]]))
        .collect();
    LabImage {
        width: frame.width(),
        height: frame.height(),
        data,
    }
}
