//! End-to-end runs: the frame loop for every method, memory accounting,
//! probe-query fidelity against the uncompressed baseline, and reports.

pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::{embed_patches, gqa_attention, AttentionConfig, ProjectionSet};
use crate::baselines::{BudgetConfig, H2oPolicy, SlidingWindow};
use crate::error::{Error, Result};
use crate::frames::{load_manifest, make_grid, synth_sequence, Frame, PatchGrid, Scenario};
use crate::kvcache::{ratio, TokenId, KvCache, KvSource, KvTensors, StorePrecision, TierHistogram, TokenStore};
use crate::saliency::{patch_tiers, SaliencyConfig, Tier};
use crate::temporal::{classify, TemporalConfig, Verdict};

pub use report::{
    emit_report, FidelityStats, FrameRecord, MethodSummary, OutputFormat, RunReport, Series,
};

pub const DEFAULT_PROBES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Sliding,
    H2o,
    Salicache,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::Sliding, Method::H2o, Method::Salicache];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Sliding => "sliding",
            Method::H2o => "h2o",
            Method::Salicache => "salicache",
        }
    }

    /// Human-facing label; the heavy-hitter baseline is the simplified
    /// cumulative-score variant, hence "h2o-style".
    pub fn label(self) -> &'static str {
        match self {
            Method::Baseline => "full cache",
            Method::Sliding => "sliding window",
            Method::H2o => "h2o-style",
            Method::Salicache => "salicache",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    Manifest {
        path: PathBuf,
    },
    Synthetic {
        scenario: Scenario,
        frames_count: usize,
        width: usize,
        height: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: InputSource,
    pub patch_size: usize,
    pub temporal: TemporalConfig<f64>,
    pub saliency: SaliencyConfig<f64>,
    pub attention: AttentionConfig,
    pub budget: BudgetConfig,
    pub methods: Vec<Method>,
    /// Compare every method against `baseline` on probe queries.
    pub fidelity: bool,
    /// Probe queries per layer.
    pub probes: usize,
    #[serde(skip)]
    pub output: Option<OutputSpec>,
}

impl RunConfig {
    /// Default desk-scale run over a synthetic scenario.
    pub fn synthetic(scenario: Scenario, frames_count: usize) -> Self {
        Self {
            input: InputSource::Synthetic {
                scenario,
                frames_count,
                width: 64,
                height: 64,
                seed: 0,
            },
            patch_size: 16,
            temporal: TemporalConfig::default(),
            saliency: SaliencyConfig::default(),
            attention: AttentionConfig::default(),
            budget: BudgetConfig::default(),
            methods: Method::ALL.to_vec(),
            fidelity: true,
            probes: DEFAULT_PROBES,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::Config("patch size must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method must be selected".into()));
        }
        let unique: BTreeSet<_> = self.methods.iter().collect();
        if unique.len() != self.methods.len() {
            return Err(Error::Config("methods listed more than once".into()));
        }
        if self.fidelity && !self.methods.contains(&Method::Baseline) {
            return Err(Error::Config("fidelity needs the baseline method".into()));
        }
        if self.fidelity && self.probes == 0 {
            return Err(Error::Config("fidelity needs at least one probe query".into()));
        }
        if let InputSource::Synthetic { frames_count: 0, .. } = self.input {
            return Err(Error::Empty("frames_count must be at least 1"));
        }
        self.temporal.validate()?;
        self.saliency.validate()?;
        self.attention.validate()?;
        self.budget.validate()
    }

    /// Frames for this run, in order.
    pub fn load_frames(&self) -> Result<Vec<Frame>> {
        match &self.input {
            InputSource::Manifest { path } => {
                let manifest = load_manifest(path)?;
                if manifest.patch_size != self.patch_size {
                    return Err(Error::Config(format!(
                        "manifest patch size {} differs from configured {}",
                        manifest.patch_size, self.patch_size
                    )));
                }
                manifest.load_frames()
            }
            &InputSource::Synthetic {
                scenario,
                frames_count,
                width,
                height,
                seed,
            } => synth_sequence(scenario, frames_count, width, height, self.patch_size, seed),
        }
    }
}

/// One salicache frame decision.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDecision {
    pub frame_idx: usize,
    /// `None` for the first frame, which is always processed spatially.
    pub verdict: Option<Verdict>,
    pub r_frame: Option<f64>,
    pub tiers: TierHistogram,
}

#[derive(Debug)]
pub struct SalicacheRun {
    pub cache: KvCache,
    pub decisions: Vec<FrameDecision>,
}

fn frame_kv(frame: &Frame, grid: &PatchGrid, projections: &ProjectionSet) -> (Vec<Vec<f32>>, KvTensors) {
    let embeddings = embed_patches(frame, grid, projections);
    let kv = projections.project_kv(&embeddings);
    (embeddings, kv)
}

fn checked_grid(frames: &[Frame], patch_size: usize) -> Result<PatchGrid> {
    let first = frames.first().ok_or(Error::Empty("no frames to process"))?;
    let grid = make_grid(first, patch_size)?;
    for f in frames {
        grid.check(f)?;
    }
    Ok(grid)
}

/// The salicache frame loop: a redundant frame aliases its predecessor's
/// cache entries; any other frame is embedded, tiered by saliency and stored.
pub fn run_salicache(frames: &[Frame], config: &RunConfig) -> Result<SalicacheRun> {
    config.validate()?;
    let projections = ProjectionSet::new(config.attention);
    let mut decisions = Vec::new();
    let cache = salicache_loop(frames, config, &projections, |d, _| decisions.push(d.clone()))?;
    Ok(SalicacheRun { cache, decisions })
}

fn salicache_loop(
    frames: &[Frame],
    config: &RunConfig,
    projections: &ProjectionSet,
    mut on_frame: impl FnMut(&FrameDecision, &KvCache),
) -> Result<KvCache> {
    let grid = checked_grid(frames, config.patch_size)?;
    let mut cache = KvCache::new(config.attention.cache_shape(), grid.patch_count())?;
    for (t, frame) in frames.iter().enumerate() {
        let mut decision = FrameDecision {
            frame_idx: t,
            verdict: None,
            r_frame: None,
            tiers: TierHistogram::default(),
        };
        if t > 0 {
            let report = classify(&frames[t - 1], frame, &grid, &config.temporal)?;
            decision.verdict = Some(report.verdict);
            decision.r_frame = Some(report.r_frame);
            if report.verdict == Verdict::Redundant {
                cache.store_reused_frame(t, t - 1)?;
                decision.tiers.reused = grid.patch_count();
                on_frame(&decision, &cache);
                continue;
            }
        }
        let (_, tiers) = patch_tiers(frame, &grid, &config.saliency)?;
        let (_, kv) = frame_kv(frame, &grid, projections);
        cache.store_frame(t, &tiers, &kv)?;
        for tier in tiers {
            decision.tiers.add_tier(tier, 1);
        }
        on_frame(&decision, &cache);
    }
    Ok(cache)
}

/// Final state of one method after the frame loop.
struct MethodRun {
    records: Vec<FrameRecord>,
    summary: MethodSummary,
    source: Box<dyn KvSource>,
}

struct Counters {
    skipped: usize,
    pruned: usize,
    evicted: usize,
}

impl Counters {
    fn new() -> Self {
        Self {
            skipped: 0,
            pruned: 0,
            evicted: 0,
        }
    }
}

fn elapsed_ms_per_frame(start: Instant, frames: usize) -> f64 {
    start.elapsed().as_secs_f64() * 1e3 / frames as f64
}

fn fp16_histogram(n: usize) -> TierHistogram {
    let mut h = TierHistogram::default();
    h.add_tier(Tier::Fp16, n);
    h
}

fn run_salicache_method(frames: &[Frame], config: &RunConfig, projections: &ProjectionSet) -> Result<MethodRun> {
    let start = Instant::now();
    let mut records = Vec::with_capacity(frames.len());
    let mut c = Counters::new();
    let mut live = 0;
    let mut last_stored = 0;
    let cache = salicache_loop(frames, config, projections, |d, cache| {
        if d.verdict == Some(Verdict::Redundant) {
            c.skipped += d.tiers.reused;
        } else {
            last_stored = d.tiers.total() - d.tiers.pruned;
            c.pruned += d.tiers.pruned;
        }
        live += last_stored;
        let mem = cache.memory_report();
        records.push(FrameRecord {
            frame_idx: d.frame_idx,
            method: Method::Salicache,
            verdict: d.verdict,
            r_frame: d.r_frame,
            tiers: d.tiers,
            live_tokens: live,
            evicted: 0,
            cumulative_skipped: c.skipped,
            cumulative_pruned: c.pruned,
            cumulative_evicted: 0,
            baseline_bytes: mem.baseline_bytes,
            actual_bytes: mem.actual_payload_bytes + mem.metadata_bytes,
        });
    })?;
    let ms_per_frame = elapsed_ms_per_frame(start, frames.len());
    let mem = cache.memory_report();
    let summary = MethodSummary {
        label: Method::Salicache.label().into(),
        baseline_bytes: mem.baseline_bytes,
        actual_bytes: mem.actual_payload_bytes + mem.metadata_bytes,
        payload_bytes: mem.actual_payload_bytes,
        metadata_bytes: mem.metadata_bytes,
        compression_ratio: finite(mem.compression_ratio),
        logical_compression_ratio: finite(mem.logical_compression_ratio),
        live_tokens: live,
        evicted_tokens: 0,
        tier_percentages: mem.tier_histogram.percentages(),
        wasted_score_computations: 0,
        ms_per_frame,
    };
    Ok(MethodRun {
        records,
        summary,
        source: Box::new(cache),
    })
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Shared driver for the token-store methods (baseline, sliding, h2o).
fn run_store_method(
    method: Method,
    frames: &[Frame],
    config: &RunConfig,
    projections: &ProjectionSet,
) -> Result<MethodRun> {
    let start = Instant::now();
    let grid = checked_grid(frames, config.patch_size)?;
    let shape = config.attention.cache_shape();
    let n_p = grid.patch_count();
    let precision = match method {
        Method::Baseline => StorePrecision::Exact,
        _ => StorePrecision::Half,
    };
    let mut store = TokenStore::new(shape, precision)?;
    let mut sliding = SlidingWindow::new(config.budget.budget);
    let mut h2o = H2oPolicy::<f64>::new(config.budget.budget);
    let mut records = Vec::with_capacity(frames.len());
    let mut c = Counters::new();

    for (t, frame) in frames.iter().enumerate() {
        let (embeddings, kv) = frame_kv(frame, &grid, projections);
        let first = t * n_p;
        store.insert_batch(TokenId(first), &kv)?;
        let ids: Vec<_> = (first..first + n_p).map(TokenId).collect();
        let evicted = match method {
            Method::Baseline => Vec::new(),
            Method::Sliding => sliding.step(&ids),
            Method::H2o => {
                h2o.admit(&ids);
                let per_layer = (0..shape.n_layers)
                    .map(|l| {
                        let queries = projections.project_queries(&embeddings, l);
                        gqa_attention::<f64, _>(&widen(&queries), &store, l, &config.attention)
                    })
                    .collect::<Result<Vec<_>>>()?;
                for q in 0..n_p {
                    h2o.ledger.accumulate_query(&per_layer, q)?;
                }
                h2o.evict(n_p)?
            }
            Method::Salicache => unreachable!("salicache runs through its own loop"),
        };
        for id in &evicted {
            store.remove(*id);
        }
        c.evicted += evicted.len();
        records.push(FrameRecord {
            frame_idx: t,
            method,
            verdict: None,
            r_frame: None,
            tiers: fp16_histogram(n_p),
            live_tokens: store.len(),
            evicted: evicted.len(),
            cumulative_skipped: 0,
            cumulative_pruned: 0,
            cumulative_evicted: c.evicted,
            baseline_bytes: shape.baseline_bytes((t + 1) * n_p),
            actual_bytes: store.payload_bytes(),
        });
    }
    let ms_per_frame = elapsed_ms_per_frame(start, frames.len());
    let baseline_bytes = shape.baseline_bytes(frames.len() * n_p);
    let actual = store.payload_bytes();
    let ratio = ratio(baseline_bytes, actual);
    let summary = MethodSummary {
        label: method.label().into(),
        baseline_bytes,
        actual_bytes: actual,
        payload_bytes: actual,
        metadata_bytes: 0,
        compression_ratio: finite(ratio),
        logical_compression_ratio: finite(ratio),
        live_tokens: store.len(),
        evicted_tokens: c.evicted,
        tier_percentages: fp16_histogram(frames.len() * n_p).percentages(),
        wasted_score_computations: h2o.trace.wasted_score_computations,
        ms_per_frame,
    };
    Ok(MethodRun {
        records,
        summary,
        source: Box::new(store),
    })
}

fn widen(v: &[Vec<f32>]) -> Vec<Vec<f64>> {
    v.iter().map(|q| q.iter().map(|&x| x as f64).collect()).collect()
}

/// Final-layer attention outputs for the probe queries, or `None` when the
/// method has nothing left to attend to.
fn probe_outputs(
    source: &dyn KvSource,
    projections: &ProjectionSet,
    config: &RunConfig,
) -> Result<Option<Vec<Vec<f64>>>> {
    let layer = config.attention.n_layers - 1;
    let probes = projections.probes(layer, config.probes);
    let queries = widen(&projections.project_queries(&probes, layer));
    match gqa_attention::<f64, _>(&queries, source, layer, &config.attention) {
        Ok(out) => Ok(Some(out.outputs)),
        Err(Error::NoAttendableTokens) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Error statistics of `outputs` against `reference`, one row per probe.
pub fn fidelity_stats(reference: &[Vec<f64>], outputs: &[Vec<f64>]) -> FidelityStats {
    let mut max_abs = 0.0f64;
    let mut sum_abs = 0.0;
    let mut n = 0usize;
    let mut cos_sum = 0.0;
    for (r, o) in reference.iter().zip(outputs) {
        let (mut dot, mut rr, mut oo) = (0.0, 0.0, 0.0);
        for (&a, &b) in r.iter().zip(o) {
            let e = (a - b).abs();
            max_abs = max_abs.max(e);
            sum_abs += e;
            n += 1;
            dot += a * b;
            rr += a * a;
            oo += b * b;
        }
        let denom = (rr * oo).sqrt();
        cos_sum += if denom > 0.0 {
            dot / denom
        } else if rr == oo {
            1.0
        } else {
            0.0
        };
    }
    FidelityStats {
        max_abs_err: max_abs,
        mean_abs_err: if n == 0 { 0.0 } else { sum_abs / n as f64 },
        cosine: if reference.is_empty() {
            1.0
        } else {
            cos_sum / reference.len() as f64
        },
    }
}

/// Runs every selected method over the same frames and projections.
pub fn run_comparison(frames: &[Frame], config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::Empty("no frames to process"));
    }
    let projections = ProjectionSet::new(config.attention);
    let mut methods: Vec<Method> = config.methods.clone();
    methods.sort();

    let mut runs = BTreeMap::new();
    for &m in &methods {
        let run = match m {
            Method::Salicache => run_salicache_method(frames, config, &projections)?,
            _ => run_store_method(m, frames, config, &projections)?,
        };
        runs.insert(m, run);
    }

    let mut fidelity = BTreeMap::new();
    if config.fidelity {
        let reference = probe_outputs(runs[&Method::Baseline].source.as_ref(), &projections, config)?
            .ok_or_else(|| Error::Invariant("baseline cache is empty".into()))?;
        for (&m, run) in &runs {
            let stats = probe_outputs(run.source.as_ref(), &projections, config)?
                .map(|out| fidelity_stats(&reference, &out));
            fidelity.insert(m, stats);
        }
    }

    let mut records = Vec::with_capacity(frames.len() * methods.len());
    for t in 0..frames.len() {
        for run in runs.values() {
            records.push(run.records[t].clone());
        }
    }
    let series = runs
        .get(&Method::Salicache)
        .map(|run| Series::from_records(&run.records))
        .unwrap_or_default();
    let report = RunReport {
        config: config.clone(),
        frames: records,
        methods: runs.into_iter().map(|(m, r)| (m, r.summary)).collect(),
        fidelity,
        series,
    };
    report.check_invariants()?;
    Ok(report)
}

/// Loads the configured input and runs the comparison.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let frames = config.load_frames()?;
    run_comparison(&frames, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario, n: usize) -> RunConfig {
        let mut c = RunConfig::synthetic(scenario, n);
        c.input = InputSource::Synthetic {
            scenario,
            frames_count: n,
            width: 32,
            height: 32,
            seed: 1,
        };
        c
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("h2o-full".parse::<Method>().is_err());
        assert_eq!(Method::H2o.label(), "h2o-style");
    }

    #[test]
    fn config_validation() {
        let mut c = small(Scenario::Static, 2);
        c.methods = vec![];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.methods = vec![Method::Salicache];
        assert!(c.validate().is_err());
        c.fidelity = false;
        c.validate().unwrap();
        c.methods = vec![Method::Salicache, Method::Salicache];
        assert!(c.validate().is_err());
    }

    #[test]
    fn static_sequence_reuses_after_first() {
        let c = small(Scenario::Static, 5);
        let frames = c.load_frames().unwrap();
        let run = run_salicache(&frames, &c).unwrap();
        assert_eq!(run.decisions[0].verdict, None);
        for d in &run.decisions[1..] {
            assert_eq!(d.verdict, Some(Verdict::Redundant));
            assert_eq!(d.r_frame, Some(1.0));
            assert_eq!(d.tiers.reused, 4);
        }
        let h = run.cache.memory_report().tier_histogram;
        assert_eq!(h.reused, 16);
        assert_eq!(h.total(), 20);
    }

    #[test]
    fn uniform_frames_prune_then_reuse() {
        let frames: Vec<Frame> = (0..3)
            .map(|i| Frame::uniform(32, 32, [10, 200, 30], i).unwrap())
            .collect();
        let mut c = small(Scenario::Static, 3);
        c.fidelity = false;
        let run = run_salicache(&frames, &c).unwrap();
        assert_eq!(run.decisions[0].tiers.pruned, 4);
        assert_eq!(run.decisions[1].verdict, Some(Verdict::Redundant));
        assert_eq!(run.decisions[2].verdict, Some(Verdict::Redundant));
    }

    #[test]
    fn fidelity_of_identical_outputs() {
        let r = vec![vec![1.0, -2.0], vec![0.5, 0.5]];
        let s = fidelity_stats(&r, &r);
        assert_eq!((s.max_abs_err, s.mean_abs_err), (0.0, 0.0));
        assert!((s.cosine - 1.0).abs() < 1e-12);
        let s = fidelity_stats(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]);
        assert_eq!((s.max_abs_err, s.mean_abs_err, s.cosine), (1.0, 1.0, 0.0));
    }

    #[test]
    fn empty_frames_rejected() {
        let c = small(Scenario::Static, 1);
        assert!(matches!(run_comparison(&[], &c), Err(Error::Empty(_))));
    }
}
