//! Dual-signal KV-cache compression for video token streams.
//!
//! Video frames are split into patch tokens. A temporal filter detects frames
//! that barely changed and aliases their cache entries to the previous frame;
//! a saliency filter (Canny edges fused with LAB chromatic variance) assigns
//! every remaining patch a storage tier (FP16, INT8, INT4 or pruned). The
//! mixed-precision store dequantizes on read, feeding a grouped-query
//! attention engine. Sliding-window and heavy-hitter eviction baselines run
//! under a fixed token budget for comparison, and [`harness`] ties everything
//! into a reproducible benchmark with JSON/CSV reports.
//!
//! Numeric kernels (temporal differences, saliency, softmax/attention,
//! importance ledger) are generic over [`Scalar`] (`f32` or `f64`). Storage
//! formats are fixed: pixels are 8-bit, cache payloads are binary16, INT8 or
//! packed INT4 with 32-bit float metadata.

pub mod attention;
pub mod baselines;
pub mod error;
pub mod frames;
pub mod harness;
pub mod kvcache;
pub mod quant;
pub mod saliency;
pub mod scalar;
pub mod temporal;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use attention::{AttentionConfig, ImportanceLedger, ProjectionSet, TokenId};
pub use baselines::{BudgetConfig, EvictionTrace, H2oPolicy, SlidingWindow};
pub use frames::{Frame, FrameManifest, PatchGrid, Scenario};
pub use harness::{Method, RunConfig, RunReport};
pub use kvcache::{CacheShape, KvCache, MemoryReport};
pub use quant::{HalfBlock, QuantBlockInt4, QuantBlockInt8};
pub use saliency::{SaliencyConfig, SaliencyMap, Tier};
pub use temporal::{RedundancyReport, TemporalConfig, Verdict};

/// Scalar used by the pipeline for image-derived signals.
pub type Real = f64;

pub type TemporalConfigF32 = TemporalConfig<f32>;
pub type TemporalConfigF64 = TemporalConfig<f64>;
pub type RedundancyReportF32 = RedundancyReport<f32>;
pub type RedundancyReportF64 = RedundancyReport<f64>;
pub type SaliencyConfigF32 = SaliencyConfig<f32>;
pub type SaliencyConfigF64 = SaliencyConfig<f64>;
pub type SaliencyMapF32 = SaliencyMap<f32>;
pub type SaliencyMapF64 = SaliencyMap<f64>;
pub type ImportanceLedgerF32 = ImportanceLedger<f32>;
pub type ImportanceLedgerF64 = ImportanceLedger<f64>;
