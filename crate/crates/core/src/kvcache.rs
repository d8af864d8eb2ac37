//! Mixed-precision, write-once KV store keyed by `(frame, patch)`.
//!
//! Each committed frame is either computed (every patch stored at its tier or
//! pruned) or reused (a single handle to an earlier computed frame). Reads
//! dequantize on demand. [`TokenStore`] is the flat, evictable counterpart
//! used by the eviction baselines.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{block_bytes, EncodedBlock};
use crate::saliency::Tier;

/// Metadata bytes charged per reused frame (one handle).
pub const REUSE_HANDLE_BYTES: usize = 8;
/// Bytes per element of the uncompressed reference cache.
pub const BASELINE_DTYPE_BYTES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheShape {
    pub n_layers: usize,
    pub n_kv_heads: usize,
    pub head_dim: usize,
}

impl CacheShape {
    pub fn new(n_layers: usize, n_kv_heads: usize, head_dim: usize) -> Result<Self> {
        let s = Self {
            n_layers,
            n_kv_heads,
            head_dim,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.n_kv_heads == 0 || self.head_dim == 0 {
            return Err(Error::Config(format!("cache shape must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Width of one K or V vector, `n_kv_heads * head_dim`.
    pub fn d_kv(&self) -> usize {
        self.n_kv_heads * self.head_dim
    }

    /// Floats per token across all layers for K (or V).
    pub fn token_stride(&self) -> usize {
        self.n_layers * self.d_kv()
    }

    /// Uncompressed bytes for `tokens` tokens: `2 * n_l * L * d_kv * sizeof(f16)`.
    pub fn baseline_bytes(&self, tokens: usize) -> usize {
        2 * self.n_layers * tokens * self.d_kv() * BASELINE_DTYPE_BYTES
    }
}

/// Global token ordinal in arrival order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId(pub usize);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// K and V for a batch of tokens, laid out `[token][layer][d_kv]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KvTensors {
    pub tokens: usize,
    pub keys: Vec<f32>,
    pub values: Vec<f32>,
}

impl KvTensors {
    pub fn zeros(shape: &CacheShape, tokens: usize) -> Self {
        let n = tokens * shape.token_stride();
        Self {
            tokens,
            keys: vec![0.0; n],
            values: vec![0.0; n],
        }
    }

    fn check(&self, shape: &CacheShape) -> Result<()> {
        let n = self.tokens * shape.token_stride();
        if self.keys.len() != n || self.values.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} tokens need {n} floats per tensor, got K={} V={}",
                self.tokens,
                self.keys.len(),
                self.values.len()
            )));
        }
        Ok(())
    }

    fn range(shape: &CacheShape, token: usize, layer: usize) -> std::ops::Range<usize> {
        let start = token * shape.token_stride() + layer * shape.d_kv();
        start..start + shape.d_kv()
    }

    pub fn key(&self, shape: &CacheShape, token: usize, layer: usize) -> &[f32] {
        &self.keys[Self::range(shape, token, layer)]
    }

    pub fn value(&self, shape: &CacheShape, token: usize, layer: usize) -> &[f32] {
        &self.values[Self::range(shape, token, layer)]
    }

    pub fn key_mut(&mut self, shape: &CacheShape, token: usize, layer: usize) -> &mut [f32] {
        &mut self.keys[Self::range(shape, token, layer)]
    }

    pub fn value_mut(&mut self, shape: &CacheShape, token: usize, layer: usize) -> &mut [f32] {
        &mut self.values[Self::range(shape, token, layer)]
    }
}

/// Patch counts per storage class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierHistogram {
    pub reused: usize,
    pub pruned: usize,
    pub int4: usize,
    pub int8: usize,
    pub fp16: usize,
}

impl TierHistogram {
    pub fn total(&self) -> usize {
        self.reused + self.pruned + self.int4 + self.int8 + self.fp16
    }

    pub fn add_tier(&mut self, tier: Tier, n: usize) {
        match tier {
            Tier::Prune => self.pruned += n,
            Tier::Int4 => self.int4 += n,
            Tier::Int8 => self.int8 += n,
            Tier::Fp16 => self.fp16 += n,
        }
    }

    pub fn merge(&mut self, other: &TierHistogram) {
        self.reused += other.reused;
        self.pruned += other.pruned;
        self.int4 += other.int4;
        self.int8 += other.int8;
        self.fp16 += other.fp16;
    }

    /// Shares in percent, ordered reused, pruned, int4, int8, fp16. All zero when empty.
    pub fn percentages(&self) -> TierPercentages {
        let t = self.total();
        let pct = |n: usize| if t == 0 { 0.0 } else { 100.0 * n as f64 / t as f64 };
        TierPercentages {
            reused: pct(self.reused),
            pruned: pct(self.pruned),
            int4: pct(self.int4),
            int8: pct(self.int8),
            fp16: pct(self.fp16),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TierPercentages {
    pub reused: f64,
    pub pruned: f64,
    pub int4: f64,
    pub int8: f64,
    pub fp16: f64,
}

impl TierPercentages {
    pub fn sum(&self) -> f64 {
        self.reused + self.pruned + self.int4 + self.int8 + self.fp16
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    /// Token positions covered by the cache, reused aliases and pruned tokens included.
    pub logical_tokens: usize,
    pub baseline_bytes: usize,
    pub actual_payload_bytes: usize,
    /// Scales, offsets and reuse handles.
    pub metadata_bytes: usize,
    /// `baseline / (payload + metadata)`; `1.0` for an empty cache, infinite if nothing is stored.
    pub compression_ratio: f64,
    /// `baseline / payload`, metadata excluded.
    pub logical_compression_ratio: f64,
    pub tier_histogram: TierHistogram,
}

pub(crate) fn ratio(baseline: usize, actual: usize) -> f64 {
    match (baseline, actual) {
        (0, _) => 1.0,
        (_, 0) => f64::INFINITY,
        (b, a) => b as f64 / a as f64,
    }
}

#[derive(Debug, Clone)]
enum PatchSlot {
    Stored {
        tier: Tier,
        /// `(K, V)` per layer.
        layers: Vec<(EncodedBlock, EncodedBlock)>,
    },
    Pruned,
}

#[derive(Debug, Clone)]
enum FrameSlot {
    Computed(Vec<PatchSlot>),
    Reused { source: usize },
}

/// Read-only view of one `(frame, patch)` entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheEntry {
    Stored { tier: Tier },
    Pruned,
    Reused { source_frame: usize },
}

/// Anything attention can read: the live tokens of one layer, dequantized.
pub trait KvSource {
    fn shape(&self) -> CacheShape;

    /// Live tokens for `layer`, in ascending id order.
    fn live_tokens(&self, layer: usize) -> Result<Vec<LiveToken>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveToken {
    pub id: TokenId,
    pub key: Vec<f32>,
    pub value: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct KvCache {
    shape: CacheShape,
    patches_per_frame: usize,
    frames: BTreeMap<usize, FrameSlot>,
    payload_bytes: usize,
    metadata_bytes: usize,
    histogram: TierHistogram,
}

impl KvCache {
    pub fn new(shape: CacheShape, patches_per_frame: usize) -> Result<Self> {
        shape.validate()?;
        if patches_per_frame == 0 {
            return Err(Error::Config("patches per frame must be positive".into()));
        }
        Ok(Self {
            shape,
            patches_per_frame,
            frames: BTreeMap::new(),
            payload_bytes: 0,
            metadata_bytes: 0,
            histogram: TierHistogram::default(),
        })
    }

    pub fn shape(&self) -> CacheShape {
        self.shape
    }

    pub fn patches_per_frame(&self) -> usize {
        self.patches_per_frame
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.keys().copied()
    }

    pub fn token_id(&self, frame: usize, patch: usize) -> TokenId {
        TokenId(frame * self.patches_per_frame + patch)
    }

    fn check_order(&self, frame_idx: usize) -> Result<()> {
        if self.frames.contains_key(&frame_idx) {
            return Err(Error::DuplicateFrame(frame_idx));
        }
        if let Some((&last, _)) = self.frames.last_key_value() {
            if frame_idx < last {
                return Err(Error::OutOfOrder {
                    frame: frame_idx,
                    last,
                });
            }
        }
        Ok(())
    }

    /// Commits a computed frame. `kv` holds one token per patch.
    pub fn store_frame(&mut self, frame_idx: usize, decisions: &[Tier], kv: &KvTensors) -> Result<()> {
        self.check_order(frame_idx)?;
        if decisions.len() != self.patches_per_frame || kv.tokens != self.patches_per_frame {
            return Err(Error::ShapeMismatch(format!(
                "expected {} patches, got {} decisions and {} tokens",
                self.patches_per_frame,
                decisions.len(),
                kv.tokens
            )));
        }
        kv.check(&self.shape)?;

        let mut slots = Vec::with_capacity(decisions.len());
        let (mut payload, mut meta) = (0, 0);
        let mut hist = TierHistogram::default();
        for (patch, &tier) in decisions.iter().enumerate() {
            hist.add_tier(tier, 1);
            if tier == Tier::Prune {
                slots.push(PatchSlot::Pruned);
                continue;
            }
            let layers = (0..self.shape.n_layers)
                .map(|l| {
                    let k = EncodedBlock::encode(tier, kv.key(&self.shape, patch, l))?;
                    let v = EncodedBlock::encode(tier, kv.value(&self.shape, patch, l))?;
                    payload += k.payload_bytes() + v.payload_bytes();
                    meta += k.metadata_bytes() + v.metadata_bytes();
                    Ok((k, v))
                })
                .collect::<Result<Vec<_>>>()?;
            slots.push(PatchSlot::Stored { tier, layers });
        }
        self.frames.insert(frame_idx, FrameSlot::Computed(slots));
        self.payload_bytes += payload;
        self.metadata_bytes += meta;
        self.histogram.merge(&hist);
        Ok(())
    }

    /// Commits `frame_idx` as an alias of `source_frame_idx`; chains collapse to the root.
    pub fn store_reused_frame(&mut self, frame_idx: usize, source_frame_idx: usize) -> Result<()> {
        if source_frame_idx >= frame_idx {
            return Err(Error::ForwardReference {
                frame: frame_idx,
                source_frame: source_frame_idx,
            });
        }
        let root = match self.frames.get(&source_frame_idx) {
            None => return Err(Error::UnknownSource(source_frame_idx)),
            Some(FrameSlot::Reused { source }) => *source,
            Some(FrameSlot::Computed(_)) => source_frame_idx,
        };
        self.check_order(frame_idx)?;
        self.frames.insert(frame_idx, FrameSlot::Reused { source: root });
        self.metadata_bytes += REUSE_HANDLE_BYTES;
        self.histogram.reused += self.patches_per_frame;
        Ok(())
    }

    fn computed_slot(&self, frame: usize) -> Option<(usize, &[PatchSlot])> {
        match self.frames.get(&frame)? {
            FrameSlot::Computed(slots) => Some((frame, slots)),
            FrameSlot::Reused { source } => match self.frames.get(source)? {
                FrameSlot::Computed(slots) => Some((*source, slots)),
                FrameSlot::Reused { .. } => None,
            },
        }
    }

    pub fn entry(&self, frame: usize, patch: usize) -> Result<CacheEntry> {
        let unknown = Error::UnknownEntry {
            frame,
            patch,
            layer: 0,
        };
        if patch >= self.patches_per_frame {
            return Err(unknown);
        }
        match self.frames.get(&frame) {
            None => Err(unknown),
            Some(FrameSlot::Reused { source }) => Ok(CacheEntry::Reused {
                source_frame: *source,
            }),
            Some(FrameSlot::Computed(slots)) => Ok(match &slots[patch] {
                PatchSlot::Stored { tier, .. } => CacheEntry::Stored { tier: *tier },
                PatchSlot::Pruned => CacheEntry::Pruned,
            }),
        }
    }

    /// Dequantized `(K, V)` for one patch and layer; `None` if the patch was pruned.
    pub fn fetch(&self, frame: usize, patch: usize, layer: usize) -> Result<Option<(Vec<f32>, Vec<f32>)>> {
        let unknown = || Error::UnknownEntry { frame, patch, layer };
        if patch >= self.patches_per_frame || layer >= self.shape.n_layers {
            return Err(unknown());
        }
        let (_, slots) = self.computed_slot(frame).ok_or_else(unknown)?;
        Ok(match &slots[patch] {
            PatchSlot::Pruned => None,
            PatchSlot::Stored { layers, .. } => {
                let (k, v) = &layers[layer];
                Some((k.decode(), v.decode()))
            }
        })
    }

    pub fn memory_report(&self) -> MemoryReport {
        let logical_tokens = self.frames.len() * self.patches_per_frame;
        let baseline_bytes = self.shape.baseline_bytes(logical_tokens);
        MemoryReport {
            logical_tokens,
            baseline_bytes,
            actual_payload_bytes: self.payload_bytes,
            metadata_bytes: self.metadata_bytes,
            compression_ratio: ratio(baseline_bytes, self.payload_bytes + self.metadata_bytes),
            logical_compression_ratio: ratio(baseline_bytes, self.payload_bytes),
            tier_histogram: self.histogram,
        }
    }

    /// Payload and metadata recomputed from scratch by walking every entry.
    pub fn recount_bytes(&self) -> (usize, usize) {
        let d = self.shape.d_kv();
        let (mut payload, mut meta) = (0, 0);
        for slot in self.frames.values() {
            match slot {
                FrameSlot::Reused { .. } => meta += REUSE_HANDLE_BYTES,
                FrameSlot::Computed(slots) => {
                    for s in slots {
                        if let PatchSlot::Stored { tier, .. } = s {
                            let (p, m) = block_bytes(*tier, d);
                            payload += 2 * self.shape.n_layers * p;
                            meta += 2 * self.shape.n_layers * m;
                        }
                    }
                }
            }
        }
        (payload, meta)
    }
}

impl KvSource for KvCache {
    fn shape(&self) -> CacheShape {
        self.shape
    }

    fn live_tokens(&self, layer: usize) -> Result<Vec<LiveToken>> {
        if layer >= self.shape.n_layers {
            return Err(Error::Config(format!("layer {layer} out of range")));
        }
        let mut out = Vec::new();
        for &frame in self.frames.keys() {
            let (_, slots) = self
                .computed_slot(frame)
                .ok_or_else(|| Error::Invariant(format!("dangling reuse handle at frame {frame}")))?;
            for (patch, slot) in slots.iter().enumerate() {
                if let PatchSlot::Stored { layers, .. } = slot {
                    let (k, v) = &layers[layer];
                    out.push(LiveToken {
                        id: self.token_id(frame, patch),
                        key: k.decode(),
                        value: v.decode(),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Storage precision of a [`TokenStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorePrecision {
    /// Values kept as given (`f32`); bytes are still accounted at binary16.
    Exact,
    /// Values rounded through binary16 on insert.
    Half,
}

/// Flat token store with removal, used by the uncompressed reference and the
/// eviction baselines. Every token is accounted at binary16.
#[derive(Debug, Clone)]
pub struct TokenStore {
    shape: CacheShape,
    precision: StorePrecision,
    /// Per token: K and V, each `[layer][d_kv]`.
    tokens: BTreeMap<TokenId, (Vec<f32>, Vec<f32>)>,
}

impl TokenStore {
    pub fn new(shape: CacheShape, precision: StorePrecision) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            shape,
            precision,
            tokens: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.tokens.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.tokens.keys().copied()
    }

    /// Inserts `kv.tokens` tokens with ids `first_id, first_id + 1, ...`.
    pub fn insert_batch(&mut self, first_id: TokenId, kv: &KvTensors) -> Result<()> {
        kv.check(&self.shape)?;
        let stride = self.shape.token_stride();
        for t in 0..kv.tokens {
            let id = TokenId(first_id.0 + t);
            if self.tokens.contains_key(&id) {
                return Err(Error::Invariant(format!("token {id} inserted twice")));
            }
            let mut k = kv.keys[t * stride..(t + 1) * stride].to_vec();
            let mut v = kv.values[t * stride..(t + 1) * stride].to_vec();
            if self.precision == StorePrecision::Half {
                k = crate::quant::from_half(&crate::quant::to_half(&k)?);
                v = crate::quant::from_half(&crate::quant::to_half(&v)?);
            }
            self.tokens.insert(id, (k, v));
        }
        Ok(())
    }

    pub fn remove(&mut self, id: TokenId) -> bool {
        self.tokens.remove(&id).is_some()
    }

    /// Bytes held, at binary16 per element.
    pub fn payload_bytes(&self) -> usize {
        self.shape.baseline_bytes(self.tokens.len())
    }
}

impl KvSource for TokenStore {
    fn shape(&self) -> CacheShape {
        self.shape
    }

    fn live_tokens(&self, layer: usize) -> Result<Vec<LiveToken>> {
        if layer >= self.shape.n_layers {
            return Err(Error::Config(format!("layer {layer} out of range")));
        }
        let d = self.shape.d_kv();
        let r = layer * d..(layer + 1) * d;
        Ok(self
            .tokens
            .iter()
            .map(|(&id, (k, v))| LiveToken {
                id,
                key: k[r.clone()].to_vec(),
                value: v[r.clone()].to_vec(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n_layers: usize, d: usize) -> CacheShape {
        CacheShape::new(n_layers, 1, d).unwrap()
    }

    fn ramp(shape: &CacheShape, tokens: usize, seed: f32) -> KvTensors {
        let mut kv = KvTensors::zeros(shape, tokens);
        for (i, x) in kv.keys.iter_mut().enumerate() {
            *x = ((i as f32 * 0.37 + seed).sin()) * 0.9;
        }
        for (i, x) in kv.values.iter_mut().enumerate() {
            *x = ((i as f32 * 0.11 - seed).cos()) * 0.9;
        }
        kv
    }

    #[test]
    fn fp16_plus_prune_accounting() {
        let s = shape(2, 8);
        let mut c = KvCache::new(s, 2).unwrap();
        c.store_frame(0, &[Tier::Fp16, Tier::Prune], &ramp(&s, 2, 0.0)).unwrap();
        let r = c.memory_report();
        assert_eq!(r.actual_payload_bytes, 2 * 2 * 8 * 2);
        assert_eq!(r.metadata_bytes, 0);
        assert_eq!(c.entry(0, 0).unwrap(), CacheEntry::Stored { tier: Tier::Fp16 });
        assert_eq!(c.entry(0, 1).unwrap(), CacheEntry::Pruned);
        assert_eq!(c.fetch(0, 1, 0).unwrap(), None);
    }

    #[test]
    fn all_prune_has_no_payload() {
        let s = shape(1, 4);
        let mut c = KvCache::new(s, 3).unwrap();
        c.store_frame(0, &[Tier::Prune; 3], &ramp(&s, 3, 1.0)).unwrap();
        let r = c.memory_report();
        assert_eq!((r.actual_payload_bytes, r.metadata_bytes), (0, 0));
        assert_eq!(r.tier_histogram.pruned, 3);
        assert!(r.compression_ratio.is_infinite());
    }

    #[test]
    fn int4_block_bytes() {
        let s = shape(1, 8);
        let mut c = KvCache::new(s, 1).unwrap();
        c.store_frame(0, &[Tier::Int4], &ramp(&s, 1, 2.0)).unwrap();
        let r = c.memory_report();
        assert_eq!(r.actual_payload_bytes, 2 * 4);
        assert_eq!(r.metadata_bytes, 2 * 8);
    }

    #[test]
    fn reuse_chain_collapses_to_root() {
        let s = shape(1, 4);
        let mut c = KvCache::new(s, 2).unwrap();
        c.store_frame(1, &[Tier::Fp16, Tier::Int8], &ramp(&s, 2, 0.5)).unwrap();
        c.store_reused_frame(2, 1).unwrap();
        c.store_reused_frame(3, 2).unwrap();
        assert_eq!(c.entry(3, 0).unwrap(), CacheEntry::Reused { source_frame: 1 });
        for patch in 0..2 {
            let direct = c.fetch(1, patch, 0).unwrap();
            assert_eq!(c.fetch(3, patch, 0).unwrap(), direct);
            assert_eq!(c.fetch(2, patch, 0).unwrap(), direct);
        }
    }

    #[test]
    fn reuse_errors() {
        let s = shape(1, 4);
        let mut c = KvCache::new(s, 1).unwrap();
        assert!(matches!(c.store_reused_frame(1, 0), Err(Error::UnknownSource(0))));
        c.store_frame(0, &[Tier::Fp16], &ramp(&s, 1, 0.0)).unwrap();
        assert!(matches!(c.store_reused_frame(1, 1), Err(Error::ForwardReference { .. })));
        assert!(matches!(c.store_reused_frame(0, 3), Err(Error::ForwardReference { .. })));
    }

    #[test]
    fn ordering_errors() {
        let s = shape(1, 4);
        let kv = ramp(&s, 1, 0.0);
        let mut c = KvCache::new(s, 1).unwrap();
        c.store_frame(3, &[Tier::Fp16], &kv).unwrap();
        assert!(matches!(c.store_frame(3, &[Tier::Fp16], &kv), Err(Error::DuplicateFrame(3))));
        assert!(matches!(c.store_frame(2, &[Tier::Fp16], &kv), Err(Error::OutOfOrder { .. })));
        assert!(matches!(
            c.store_frame(4, &[Tier::Fp16, Tier::Fp16], &kv),
            Err(Error::ShapeMismatch(_))
        ));
        let short = KvTensors { tokens: 1, keys: vec![0.0; 3], values: vec![0.0; 4] };
        assert!(matches!(c.store_frame(4, &[Tier::Fp16], &short), Err(Error::ShapeMismatch(_))));
        // failed stores leave nothing behind
        assert_eq!(c.frame_count(), 1);
    }

    #[test]
    fn static_five_frames() {
        let s = shape(2, 8);
        let mut c = KvCache::new(s, 4).unwrap();
        c.store_frame(0, &[Tier::Fp16; 4], &ramp(&s, 4, 0.0)).unwrap();
        let one_frame = c.memory_report().actual_payload_bytes;
        for f in 1..5 {
            c.store_reused_frame(f, f - 1).unwrap();
        }
        let r = c.memory_report();
        assert_eq!(r.actual_payload_bytes, one_frame);
        assert_eq!(r.logical_tokens, 20);
        assert_eq!(r.metadata_bytes, 4 * REUSE_HANDLE_BYTES);
        assert_eq!(r.tier_histogram.total(), 20);
    }

    #[test]
    fn eq3_hand_value() {
        let s = shape(2, 8);
        let mut c = KvCache::new(s, 10).unwrap();
        c.store_frame(0, &[Tier::Fp16; 10], &ramp(&s, 10, 0.0)).unwrap();
        let r = c.memory_report();
        assert_eq!(r.baseline_bytes, 640);
        assert_eq!(r.actual_payload_bytes, 640);
        assert_eq!(r.compression_ratio, 1.0);
    }

    #[test]
    fn empty_report() {
        let c = KvCache::new(shape(1, 4), 2).unwrap();
        let r = c.memory_report();
        assert_eq!((r.baseline_bytes, r.compression_ratio), (0, 1.0));
    }

    #[test]
    fn fetch_fp16_exact_and_unknown() {
        let s = shape(1, 2);
        let mut c = KvCache::new(s, 1).unwrap();
        let kv = KvTensors { tokens: 1, keys: vec![1.0, 0.5], values: vec![0.25, -1.0] };
        c.store_frame(0, &[Tier::Fp16], &kv).unwrap();
        let (k, v) = c.fetch(0, 0, 0).unwrap().unwrap();
        assert_eq!((k, v), (vec![1.0, 0.5], vec![0.25, -1.0]));
        assert!(c.fetch(1, 0, 0).is_err());
        assert!(c.fetch(0, 1, 0).is_err());
        assert!(c.fetch(0, 0, 1).is_err());
    }

    #[test]
    fn live_tokens_skip_pruned_and_alias_reused() {
        let s = shape(1, 4);
        let mut c = KvCache::new(s, 3).unwrap();
        c.store_frame(0, &[Tier::Fp16, Tier::Prune, Tier::Int4], &ramp(&s, 3, 0.0)).unwrap();
        c.store_reused_frame(1, 0).unwrap();
        let live = c.live_tokens(0).unwrap();
        let ids: Vec<usize> = live.iter().map(|t| t.id.0).collect();
        assert_eq!(ids, vec![0, 2, 3, 5]);
        assert_eq!(live[0].key, live[2].key);
        assert_eq!(live[1].value, live[3].value);
    }

    #[test]
    fn token_store_half_rounding_and_removal() {
        let s = shape(1, 2);
        let kv = KvTensors { tokens: 2, keys: vec![0.1, 0.2, 0.3, 0.4], values: vec![1.0; 4] };
        let mut exact = TokenStore::new(s, StorePrecision::Exact).unwrap();
        let mut half = TokenStore::new(s, StorePrecision::Half).unwrap();
        exact.insert_batch(TokenId(10), &kv).unwrap();
        half.insert_batch(TokenId(10), &kv).unwrap();
        assert_eq!(exact.live_tokens(0).unwrap()[0].key, vec![0.1, 0.2]);
        assert_eq!(half.live_tokens(0).unwrap()[0].key[0] as f64, 0.099_975_585_937_5);
        assert!(half.remove(TokenId(10)));
        assert!(!half.remove(TokenId(10)));
        assert_eq!(half.ids().collect::<Vec<_>>(), vec![TokenId(11)]);
        assert_eq!(half.payload_bytes(), s.baseline_bytes(1));
        assert!(exact.insert_batch(TokenId(11), &kv).is_err());
    }
}
