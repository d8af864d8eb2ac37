//! Tier codecs for cache blocks: binary16, symmetric INT8 and affine INT4.
//!
//! A block is one K or V vector of one token at one layer. Rounding is
//! round-half-to-even throughout so codes are reproducible across platforms.

use half::f16;

use crate::error::{Error, Result};
use crate::saliency::Tier;

/// Metadata bytes per INT8 block (one `f32` scale).
pub const INT8_METADATA_BYTES: usize = 4;
/// Metadata bytes per INT4 block (two `f32`: offset and scale/range).
pub const INT4_METADATA_BYTES: usize = 8;

fn check_block(block: &[f32]) -> Result<()> {
    if block.is_empty() {
        return Err(Error::Empty("quantization block"));
    }
    match block.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantBlockInt8 {
    /// `max|x| / 127`; zero iff the source block was all zeros.
    pub scale: f32,
    pub values: Vec<i8>,
}

pub fn quantize_int8(block: &[f32]) -> Result<QuantBlockInt8> {
    check_block(block)?;
    let max_abs = block.iter().fold(0.0f32, |m, x| m.max(x.abs()));
    if max_abs == 0.0 {
        return Ok(QuantBlockInt8 {
            scale: 0.0,
            values: vec![0; block.len()],
        });
    }
    // x / scale evaluated as x * 127 / max|x| in f64, so ties such as 63.5 stay ties
    let inv = 127.0 / max_abs as f64;
    let values = block
        .iter()
        .map(|&x| (x as f64 * inv).round_ties_even().clamp(-127.0, 127.0) as i8)
        .collect();
    Ok(QuantBlockInt8 {
        scale: max_abs / 127.0,
        values,
    })
}

pub fn dequantize_int8(block: &QuantBlockInt8) -> Vec<f32> {
    block
        .values
        .iter()
        .map(|&q| block.scale * q as f32)
        .collect()
}

/// Affine 4-bit block. Codes are packed two per byte, even element in the low nibble.
///
/// The block stores its exact minimum (`offset`) and maximum; the step
/// `scale = (max - min) / 15` is derived. Dequantization interpolates between
/// the two endpoints, so codes 0 and 15 reproduce the block min and max exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantBlockInt4 {
    pub offset: f32,
    pub max: f32,
    pub packed: Vec<u8>,
    pub len: usize,
}

impl QuantBlockInt4 {
    /// Quantization step `(max - min) / 15`.
    pub fn scale(&self) -> f32 {
        ((self.max as f64 - self.offset as f64) / 15.0) as f32
    }

    /// Builds a block from an offset, a step and unpacked codes.
    pub fn from_parts(offset: f32, scale: f32, codes: &[u8]) -> Self {
        Self {
            offset,
            max: (offset as f64 + 15.0 * scale as f64) as f32,
            packed: pack_nibbles(codes),
            len: codes.len(),
        }
    }

    pub fn codes(&self) -> Vec<u8> {
        unpack_nibbles(&self.packed, self.len)
    }
}

pub fn pack_nibbles(codes: &[u8]) -> Vec<u8> {
    codes
        .chunks(2)
        .map(|pair| {
            debug_assert!(pair.iter().all(|&c| c <= 15));
            (pair[0] & 0x0f) | (pair.get(1).copied().unwrap_or(0) & 0x0f) << 4
        })
        .collect()
}

pub fn unpack_nibbles(packed: &[u8], len: usize) -> Vec<u8> {
    (0..len)
        .map(|i| {
            let b = packed[i / 2];
            if i % 2 == 0 {
                b & 0x0f
            } else {
                b >> 4
            }
        })
        .collect()
}

pub fn quantize_int4(block: &[f32]) -> Result<QuantBlockInt4> {
    check_block(block)?;
    let (min, max) = block
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = max as f64 - min as f64;
    let codes: Vec<u8> = if range == 0.0 {
        vec![0; block.len()]
    } else {
        block
            .iter()
            .map(|&x| ((x as f64 - min as f64) * 15.0 / range).round_ties_even().clamp(0.0, 15.0) as u8)
            .collect()
    };
    Ok(QuantBlockInt4 {
        offset: min,
        max,
        packed: pack_nibbles(&codes),
        len: block.len(),
    })
}

pub fn dequantize_int4(block: &QuantBlockInt4) -> Vec<f32> {
    let (lo, hi) = (block.offset as f64, block.max as f64);
    block
        .codes()
        .into_iter()
        .map(|q| {
            let t = q as f64 / 15.0;
            ((1.0 - t) * lo + t * hi) as f32
        })
        .collect()
}

/// Binary16 block.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfBlock {
    pub values: Vec<f16>,
}

/// Round-to-nearest-even conversion; values that round to infinity are rejected.
pub fn to_half(block: &[f32]) -> Result<HalfBlock> {
    let values = block
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            if !x.is_finite() {
                return Err(Error::NonFinite { index });
            }
            let h = f16::from_f32(x);
            if h.is_infinite() {
                Err(Error::HalfOverflow(x))
            } else {
                Ok(h)
            }
        })
        .collect::<Result<_>>()?;
    Ok(HalfBlock { values })
}

pub fn from_half(block: &HalfBlock) -> Vec<f32> {
    block.values.iter().map(|h| h.to_f32()).collect()
}

/// One stored block in its tier's encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodedBlock {
    Half(HalfBlock),
    Int8(QuantBlockInt8),
    Int4(QuantBlockInt4),
}

impl EncodedBlock {
    /// Encodes `block` at `tier`. `Tier::Prune` has no encoding.
    pub fn encode(tier: Tier, block: &[f32]) -> Result<Self> {
        match tier {
            Tier::Fp16 => Ok(Self::Half(to_half(block)?)),
            Tier::Int8 => Ok(Self::Int8(quantize_int8(block)?)),
            Tier::Int4 => Ok(Self::Int4(quantize_int4(block)?)),
            Tier::Prune => Err(Error::Invariant("pruned blocks carry no payload".into())),
        }
    }

    pub fn decode(&self) -> Vec<f32> {
        match self {
            Self::Half(b) => from_half(b),
            Self::Int8(b) => dequantize_int8(b),
            Self::Int4(b) => dequantize_int4(b),
        }
    }

    /// Bytes actually held by codes (excluding scales/offsets).
    pub fn payload_bytes(&self) -> usize {
        match self {
            Self::Half(b) => 2 * b.values.len(),
            Self::Int8(b) => b.values.len(),
            Self::Int4(b) => b.packed.len(),
        }
    }

    pub fn metadata_bytes(&self) -> usize {
        match self {
            Self::Half(_) => 0,
            Self::Int8(_) => INT8_METADATA_BYTES,
            Self::Int4(_) => INT4_METADATA_BYTES,
        }
    }
}

/// `(payload, metadata)` bytes for one block of `len` elements at `tier`.
pub fn block_bytes(tier: Tier, len: usize) -> (usize, usize) {
    match tier {
        Tier::Fp16 => (2 * len, 0),
        Tier::Int8 => (len, INT8_METADATA_BYTES),
        Tier::Int4 => (len.div_ceil(2), INT4_METADATA_BYTES),
        Tier::Prune => (0, 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn int8_hand_example() {
        let q = quantize_int8(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(q.scale, 2.0f32 / 127.0);
        assert!((q.scale - 0.015_748).abs() < 1e-6);
        assert_eq!(q.values, vec![64, -127, 32]);
        let d = dequantize_int8(&q);
        assert!((d[0] - 1.007_874).abs() < 1e-5);
        assert_eq!(d[1], -2.0);
        assert!((d[2] - 0.503_937).abs() < 1e-5);
    }

    #[test]
    fn int8_zero_block_and_single_extremum() {
        let q = quantize_int8(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((q.scale, q.values.clone()), (0.0, vec![0, 0, 0]));
        assert_eq!(dequantize_int8(&q), vec![0.0; 3]);
        let q = quantize_int8(&[3.0]).unwrap();
        assert_eq!(q.values, vec![127]);
        assert_eq!(dequantize_int8(&q), vec![3.0]);
    }

    #[test]
    fn int8_rejects_nan_and_empty() {
        assert!(matches!(quantize_int8(&[1.0, f32::NAN]), Err(Error::NonFinite { index: 1 })));
        assert!(quantize_int8(&[f32::INFINITY]).is_err());
        assert!(quantize_int8(&[]).is_err());
    }

    #[test]
    fn int4_hand_examples() {
        let q = quantize_int4(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(q.offset, 0.0);
        assert_eq!(q.scale(), 0.2);
        assert_eq!(q.codes(), vec![0, 5, 10, 15]);
        assert_eq!(dequantize_int4(&q), vec![0.0, 1.0, 2.0, 3.0]);

        let q = quantize_int4(&[-1.0, -1.0]).unwrap();
        assert_eq!((q.scale(), q.offset), (0.0, -1.0));
        assert_eq!(dequantize_int4(&q), vec![-1.0, -1.0]);

        let q = quantize_int4(&[-2.0, 1.0]).unwrap();
        assert_eq!(q.codes(), vec![0, 15]);
        assert_eq!(dequantize_int4(&q), vec![-2.0, 1.0]);
    }

    #[test]
    fn int4_from_parts() {
        let b = QuantBlockInt4::from_parts(0.0, 0.2, &[0, 5, 10, 15]);
        assert_eq!(dequantize_int4(&b), vec![0.0, 1.0, 2.0, 3.0]);
        let b = QuantBlockInt4::from_parts(4.5, 0.0, &[0, 0, 0]);
        assert_eq!(dequantize_int4(&b), vec![4.5; 3]);
    }

    #[test]
    fn nibble_layout() {
        assert_eq!(pack_nibbles(&[1, 2, 3]), vec![0x21, 0x03]);
        assert_eq!(unpack_nibbles(&[0x21, 0x03], 3), vec![1, 2, 3]);
    }

    #[test]
    fn half_examples() {
        assert_eq!(from_half(&to_half(&[1.0]).unwrap()), vec![1.0]);
        let h = to_half(&[0.1]).unwrap();
        assert_eq!(h.values[0].to_bits(), 0x2E66);
        assert_eq!(from_half(&h)[0] as f64, 0.099_975_585_937_5);
        assert!(matches!(to_half(&[65520.0]), Err(Error::HalfOverflow(_))));
        assert!(to_half(&[65504.0]).is_ok());
        assert!(to_half(&[-65520.0]).is_err());
    }

    #[test]
    fn bytes_per_element() {
        assert_eq!(block_bytes(Tier::Fp16, 32), (64, 0));
        assert_eq!(block_bytes(Tier::Int8, 32), (32, 4));
        assert_eq!(block_bytes(Tier::Int4, 8), (4, 8));
        assert_eq!(block_bytes(Tier::Int4, 7), (4, 8));
        assert_eq!(block_bytes(Tier::Prune, 32), (0, 0));
        for tier in [Tier::Fp16, Tier::Int8, Tier::Int4] {
            let e = EncodedBlock::encode(tier, &[0.5; 9]).unwrap();
            assert_eq!((e.payload_bytes(), e.metadata_bytes()), block_bytes(tier, 9));
        }
        assert!(EncodedBlock::encode(Tier::Prune, &[0.5]).is_err());
    }

    fn block() -> impl Strategy<Value = Vec<f32>> {
        proptest::collection::vec(-10.0f32..10.0, 1..65)
    }

    proptest! {
        #[test]
        fn int8_error_bound(b in block()) {
            let q = quantize_int8(&b).unwrap();
            let max_abs = b.iter().fold(0.0f32, |m, x| m.max(x.abs()));
            prop_assert!(q.values.iter().all(|&v| (-127..=127).contains(&v)));
            for (x, y) in b.iter().zip(dequantize_int8(&q)) {
                prop_assert!((x - y).abs() <= q.scale / 2.0 + 1e-6);
                prop_assert!((x - y).abs() <= max_abs / 254.0 + 1e-6);
            }
        }

        #[test]
        fn int4_error_bound_and_endpoints(b in block()) {
            let q = quantize_int4(&b).unwrap();
            let d = dequantize_int4(&q);
            let (lo, hi) = b.iter().fold((f32::MAX, f32::MIN), |(l, h), &x| (l.min(x), h.max(x)));
            for (x, y) in b.iter().zip(&d) {
                prop_assert!((x - y).abs() <= q.scale() / 2.0 + 1e-6);
                prop_assert!((x - y).abs() <= (hi - lo) / 30.0 + 1e-6);
            }
            prop_assert_eq!(d.iter().copied().fold(f32::MAX, f32::min), lo);
            prop_assert_eq!(d.iter().copied().fold(f32::MIN, f32::max), hi);
            prop_assert_eq!(q.packed.len(), b.len().div_ceil(2));
            if b.len() % 2 == 1 {
                prop_assert_eq!(q.packed.last().unwrap() >> 4, 0);
            }
        }

        #[test]
        fn requantizing_is_idempotent(b in block()) {
            let q8 = quantize_int8(&b).unwrap();
            prop_assert_eq!(&quantize_int8(&dequantize_int8(&q8)).unwrap().values, &q8.values);
            let q4 = quantize_int4(&b).unwrap();
            prop_assert_eq!(quantize_int4(&dequantize_int4(&q4)).unwrap().codes(), q4.codes());
        }

        #[test]
        fn nibbles_round_trip(codes in proptest::collection::vec(0u8..16, 0..40)) {
            prop_assert_eq!(unpack_nibbles(&pack_nibbles(&codes), codes.len()), codes);
        }

        #[test]
        fn half_relative_error(x in prop_oneof![-60000.0f32..-6.2e-5, 6.2e-5f32..60000.0]) {
            let y = from_half(&to_half(&[x]).unwrap())[0];
            prop_assert!(((x - y) / x).abs() <= 2f32.powi(-11));
        }
    }
}
