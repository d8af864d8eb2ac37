//! Report types and JSON/CSV emission.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::kvcache::{TierHistogram, TierPercentages};
use crate::temporal::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(Error::Config(format!("unknown output format '{s}'"))),
        }
    }
}

/// One method's state after one frame. Byte counts and `cumulative_*` are running totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_idx: usize,
    pub method: Method,
    pub verdict: Option<Verdict>,
    pub r_frame: Option<f64>,
    /// Decisions for this frame's patches.
    pub tiers: TierHistogram,
    pub live_tokens: usize,
    pub evicted: usize,
    pub cumulative_skipped: usize,
    pub cumulative_pruned: usize,
    pub cumulative_evicted: usize,
    pub baseline_bytes: usize,
    pub actual_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub baseline_bytes: usize,
    /// Payload plus metadata.
    pub actual_bytes: usize,
    pub payload_bytes: usize,
    pub metadata_bytes: usize,
    /// `baseline_bytes / actual_bytes`; `null` when nothing is stored.
    pub compression_ratio: Option<f64>,
    /// `baseline_bytes / payload_bytes`, ignoring quantization scales and reuse handles.
    pub logical_compression_ratio: Option<f64>,
    pub live_tokens: usize,
    pub evicted_tokens: usize,
    pub tier_percentages: TierPercentages,
    pub wasted_score_computations: u64,
    /// Wall-clock; excluded from determinism comparisons.
    pub ms_per_frame: f64,
}

/// Probe-query attention fidelity against the uncompressed baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityStats {
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    /// Mean cosine similarity over probes.
    pub cosine: f64,
}

/// Plot-ready cumulative savings of the salicache run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub frame_idx: Vec<usize>,
    pub cumulative_skipped: Vec<usize>,
    pub cumulative_pruned: Vec<usize>,
    pub baseline_bytes: Vec<usize>,
    pub actual_bytes: Vec<usize>,
}

impl Series {
    pub fn from_records(records: &[FrameRecord]) -> Self {
        let mut s = Series::default();
        for r in records {
            s.frame_idx.push(r.frame_idx);
            s.cumulative_skipped.push(r.cumulative_skipped);
            s.cumulative_pruned.push(r.cumulative_pruned);
            s.baseline_bytes.push(r.baseline_bytes);
            s.actual_bytes.push(r.actual_bytes);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    /// Frame-major, one record per selected method.
    pub frames: Vec<FrameRecord>,
    pub methods: BTreeMap<Method, MethodSummary>,
    /// `null` entries mark methods left with no attendable tokens.
    pub fidelity: BTreeMap<Method, Option<FidelityStats>>,
    pub series: Series,
}

fn nondecreasing(xs: &[usize]) -> bool {
    xs.windows(2).all(|w| w[0] <= w[1])
}

impl RunReport {
    /// Copy with every wall-clock field zeroed.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        for s in r.methods.values_mut() {
            s.ms_per_frame = 0.0;
        }
        r
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len() / self.methods.len().max(1)
    }

    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &FrameRecord> {
        self.frames.iter().filter(move |r| r.method == method)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invariant(m));
        for (m, s) in &self.methods {
            let total = s.tier_percentages.sum();
            if (total - 100.0).abs() > 0.1 {
                return fail(format!("{m} tier percentages sum to {total}"));
            }
            if let Some(r) = s.compression_ratio {
                if *m == Method::Salicache && r < 1.0 {
                    return fail(format!("salicache compression ratio {r} below 1"));
                }
            }
        }
        for &m in self.methods.keys() {
            let recs: Vec<&FrameRecord> = self.records_for(m).collect();
            let skipped: Vec<usize> = recs.iter().map(|r| r.cumulative_skipped).collect();
            let pruned: Vec<usize> = recs.iter().map(|r| r.cumulative_pruned).collect();
            if !nondecreasing(&skipped) || !nondecreasing(&pruned) {
                return fail(format!("{m} cumulative series decreased"));
            }
        }
        if !nondecreasing(&self.series.cumulative_skipped) || !nondecreasing(&self.series.cumulative_pruned) {
            return fail("salicache series decreased".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// One row per (frame, method) plus the header.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.frames {
            w.serialize(CsvRow::from(r)).map_err(|e| Error::Serialize(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
    }
}

#[derive(Serialize)]
struct CsvRow {
    frame_idx: usize,
    method: Method,
    verdict: Option<Verdict>,
    r_frame: Option<f64>,
    reused: usize,
    pruned: usize,
    int4: usize,
    int8: usize,
    fp16: usize,
    live_tokens: usize,
    evicted: usize,
    cumulative_skipped: usize,
    cumulative_pruned: usize,
    cumulative_evicted: usize,
    baseline_bytes: usize,
    actual_bytes: usize,
}

impl From<&FrameRecord> for CsvRow {
    fn from(r: &FrameRecord) -> Self {
        Self {
            frame_idx: r.frame_idx,
            method: r.method,
            verdict: r.verdict,
            r_frame: r.r_frame,
            reused: r.tiers.reused,
            pruned: r.tiers.pruned,
            int4: r.tiers.int4,
            int8: r.tiers.int8,
            fp16: r.tiers.fp16,
            live_tokens: r.live_tokens,
            evicted: r.evicted,
            cumulative_skipped: r.cumulative_skipped,
            cumulative_pruned: r.cumulative_pruned,
            cumulative_evicted: r.cumulative_evicted,
            baseline_bytes: r.baseline_bytes,
            actual_bytes: r.actual_bytes,
        }
    }
}

pub fn emit_report(report: &RunReport, path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        OutputFormat::Json => report.to_json()?,
        OutputFormat::Csv => report.to_csv()?,
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
