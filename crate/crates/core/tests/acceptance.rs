//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::collections::{BTreeSet, VecDeque};
use std::panic;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use salicache::attention::{gqa_attention, AttentionConfig, ImportanceLedger};
use salicache::baselines::{h2o_step, sliding_window_step};
use salicache::frames::{make_grid, Frame, Scenario};
use salicache::harness::{run, run_salicache, Method, RunConfig};
use salicache::kvcache::{CacheShape, KvCache, KvTensors, StorePrecision, TokenId, TokenStore};
use salicache::quant::{dequantize_int4, dequantize_int8, quantize_int4, quantize_int8};
use salicache::saliency::{canny_edges, patch_tiers, rgb_pixel_to_lab, saliency_map, SaliencyConfig, Tier};
use salicache::temporal::Verdict;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn quant_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst8, mut worst4) = (0.0f64, 0.0f64);
    let blocks = 1000;
    for blk in 0..blocks {
        let len = rng.random_range(16..=64);
        let x: Vec<f32> = (0..len).map(|_| rng.random_range(-10.0f32..=10.0)).collect();

        let q8 = quantize_int8(&x).map_err(|e| e.to_string())?;
        let y8 = dequantize_int8(&q8);
        let bound8 = q8.scale as f64 / 2.0 + 1e-6;
        for (a, y) in x.iter().zip(&y8) {
            let e = (*a as f64 - *y as f64).abs();
            ensure!(e <= bound8, "int8 block {blk}: error {e} > {bound8}");
            worst8 = worst8.max(e / bound8);
        }

        let q4 = quantize_int4(&x).map_err(|e| e.to_string())?;
        let y4 = dequantize_int4(&q4);
        let bound4 = q4.scale() as f64 / 2.0 + 1e-6;
        for (a, y) in x.iter().zip(&y4) {
            let e = (*a as f64 - *y as f64).abs();
            ensure!(e <= bound4, "int4 block {blk}: error {e} > {bound4}");
            worst4 = worst4.max(e / bound4);
        }
        let lo = x.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        for (a, y) in x.iter().zip(&y4) {
            if *a == lo || *a == hi {
                ensure!(a == y, "int4 block {blk}: extreme {a} reconstructed as {y}");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 1.0, "took {secs:.3} s");
    Ok(format!(
        "{blocks} blocks, worst error/bound int8 {worst8:.3} int4 {worst4:.3}, extremes exact, {:.0} ms",
        secs * 1e3
    ))
}

fn accounting() -> Outcome {
    let shape = CacheShape::new(2, 1, 8).map_err(|e| e.to_string())?;
    let mut cache = KvCache::new(shape, 10).map_err(|e| e.to_string())?;
    let mut kv = KvTensors::zeros(&shape, 10);
    kv.keys.iter_mut().enumerate().for_each(|(i, x)| *x = i as f32 * 0.01);
    cache
        .store_frame(0, &[Tier::Fp16; 10], &kv)
        .map_err(|e| e.to_string())?;
    let r = cache.memory_report();
    let expected = 2 * 2 * 10 * 8 * 2;
    ensure!(r.baseline_bytes == expected && expected == 640, "baseline bytes {}", r.baseline_bytes);
    ensure!(r.compression_ratio == 1.0, "ratio {}", r.compression_ratio);
    Ok(format!(
        "baseline_bytes = {} (expected 640), compression_ratio = {}",
        r.baseline_bytes, r.compression_ratio
    ))
}

fn static_reuse() -> Outcome {
    let mut config = RunConfig::synthetic(Scenario::Static, 5);
    config.saliency = config.saliency.with_tiers(0.003, 0.002, 0.001);
    let frames = config.load_frames().map_err(|e| e.to_string())?;
    let n_p = make_grid(&frames[0], config.patch_size).map_err(|e| e.to_string())?.patch_count();
    let run = run_salicache(&frames, &config).map_err(|e| e.to_string())?;
    for d in &run.decisions[1..] {
        ensure!(d.verdict == Some(Verdict::Redundant), "frame {} not reused", d.frame_idx);
    }
    ensure!(run.decisions[0].tiers.fp16 == n_p, "frame 1 not all FP16: {:?}", run.decisions[0].tiers);

    let single = run_salicache(&frames[..1], &config).map_err(|e| e.to_string())?;
    let r = run.cache.memory_report();
    let one = single.cache.memory_report();
    ensure!(
        r.actual_payload_bytes == one.actual_payload_bytes,
        "payload {} vs one frame {}",
        r.actual_payload_bytes,
        one.actual_payload_bytes
    );
    ensure!(r.logical_tokens == 5 * n_p, "logical tokens {}", r.logical_tokens);
    ensure!(r.compression_ratio >= 4.9, "ratio {}", r.compression_ratio);
    Ok(format!(
        "frames 2-5 reused, payload {} B = one frame, L = {} = 5*{}, ratio {:.3} (metadata-free {:.3})",
        r.actual_payload_bytes, r.logical_tokens, n_p, r.compression_ratio, r.logical_compression_ratio
    ))
}

fn distribution_ratio() -> Outcome {
    // 1000 single-patch frames in the target proportions, tiers interleaved.
    let counts = [(Tier::Fp16, 317usize), (Tier::Int8, 71), (Tier::Int4, 214), (Tier::Prune, 131)];
    let reused = 267usize;
    let mut plan: Vec<Option<Tier>> = counts
        .iter()
        .flat_map(|&(t, n)| std::iter::repeat_n(Some(t), n))
        .collect();
    plan.extend(std::iter::repeat_n(None, reused));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // first frame must be computed; shuffle the rest
    for i in (2..plan.len()).rev() {
        let j = rng.random_range(1..=i);
        plan.swap(i, j);
    }
    if plan[0].is_none() {
        let k = plan.iter().position(Option::is_some).unwrap();
        plan.swap(0, k);
    }

    let shape = AttentionConfig::default().cache_shape();
    let mut cache = KvCache::new(shape, 1).map_err(|e| e.to_string())?;
    for (f, step) in plan.iter().enumerate() {
        match step {
            None => cache.store_reused_frame(f, f - 1),
            Some(t) => {
                let mut kv = KvTensors::zeros(&shape, 1);
                kv.keys.iter_mut().chain(kv.values.iter_mut()).for_each(|x| *x = rng.random_range(-1.0..1.0));
                cache.store_frame(f, &[*t], &kv)
            }
        }
        .map_err(|e| e.to_string())?;
    }
    let r = cache.memory_report();
    let p = r.tier_histogram.percentages();
    ensure!(
        (p.reused, p.pruned, p.int4, p.int8, p.fp16) == (26.7, 13.1, 21.4, 7.1, 31.7),
        "proportions {p:?}"
    );
    // independent bytes-per-element oracle: FP16 2, INT8 1, INT4 1/2, reused and pruned 0
    let oracle = 1000.0 * 2.0 / (317.0 * 2.0 + 71.0 * 1.0 + 214.0 * 0.5);
    ensure!((oracle - 2.463f64).abs() < 0.02, "oracle {oracle}");
    ensure!(
        (r.logical_compression_ratio - 2.463).abs() <= 0.02,
        "metadata-free ratio {}",
        r.logical_compression_ratio
    );
    Ok(format!(
        "skipped/pruned/int4/int8/fp16 = {:.1}/{:.1}/{:.1}/{:.1}/{:.1} %, metadata-free ratio {:.4} (target 2.463 +- 0.02), metadata-inclusive ratio {:.4} ({} B metadata)",
        p.reused, p.pruned, p.int4, p.int8, p.fp16, r.logical_compression_ratio, r.compression_ratio, r.metadata_bytes
    ))
}

/// Dense single-head attention in f64.
fn dense_attention(q: &[f64], keys: &[Vec<f64>], values: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (q.len() as f64).sqrt();
    let logits: Vec<f64> = keys
        .iter()
        .map(|k| k.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() * scale)
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let w: Vec<f64> = e.iter().map(|x| x / z).collect();
    let mut out = vec![0.0; q.len()];
    for (wj, v) in w.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += wj * x;
        }
    }
    (w, out)
}

fn attention_oracle() -> Outcome {
    let start = Instant::now();
    let d = 8;
    let cfg = AttentionConfig { n_layers: 1, n_q_heads: 1, n_kv_heads: 1, head_dim: d, seed: 0 };
    let shape = cfg.cache_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut err32, mut err16, mut row_err) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..200 {
        let n = 1 + trial % 8;
        let mut kv = KvTensors::zeros(&shape, n);
        kv.keys.iter_mut().chain(kv.values.iter_mut()).for_each(|x| *x = rng.random_range(-1.0..1.0));
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let keys: Vec<Vec<f64>> = (0..n).map(|t| kv.key(&shape, t, 0).iter().map(|&x| x as f64).collect()).collect();
        let values: Vec<Vec<f64>> = (0..n).map(|t| kv.value(&shape, t, 0).iter().map(|&x| x as f64).collect()).collect();
        let (w_ref, out_ref) = dense_attention(&q, &keys, &values);

        let mut exact = TokenStore::new(shape, StorePrecision::Exact).map_err(|e| e.to_string())?;
        exact.insert_batch(TokenId(0), &kv).map_err(|e| e.to_string())?;
        let a = gqa_attention(std::slice::from_ref(&q), &exact, 0, &cfg).map_err(|e| e.to_string())?;
        for (x, y) in a.outputs[0].iter().zip(&out_ref).chain(a.weights[0][0].iter().zip(&w_ref)) {
            err32 = err32.max((x - y).abs());
        }
        row_err = row_err.max((a.weights[0][0].iter().sum::<f64>() - 1.0).abs());

        let mut cache = KvCache::new(shape, n).map_err(|e| e.to_string())?;
        cache.store_frame(0, &vec![Tier::Fp16; n], &kv).map_err(|e| e.to_string())?;
        let b = gqa_attention(&[q], &cache, 0, &cfg).map_err(|e| e.to_string())?;
        for (x, y) in b.outputs[0].iter().zip(&out_ref) {
            err16 = err16.max((x - y).abs());
        }
        row_err = row_err.max((b.weights[0][0].iter().sum::<f64>() - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(err32 <= 1e-6, "32-bit storage error {err32}");
    ensure!(err16 <= 1e-3, "FP16 storage error {err16}");
    ensure!(row_err <= 1e-6, "softmax row sum error {row_err}");
    ensure!(secs < 1.0, "took {secs:.3} s");
    Ok(format!(
        "200 cases (1-8 tokens): max error 32-bit {err32:.2e}, FP16 {err16:.2e}, row sum {row_err:.2e}, {:.0} ms",
        secs * 1e3
    ))
}

fn h2o_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut max_n = 0;
    for case in 0..500 {
        let n = if case % 50 == 0 { 10_000 } else { rng.random_range(1..=2000) };
        max_n = max_n.max(n);
        let budget = rng.random_range(1..=n + 5);
        // coarse scores in some cases to force ties
        let levels = if case % 3 == 0 { 4 } else { 1_000_000 };
        let mut ledger = ImportanceLedger::<f64>::new();
        let mut live: Vec<TokenId> = Vec::with_capacity(n);
        let mut id = 0;
        for _ in 0..n {
            id += rng.random_range(1..4);
            let s = rng.random_range(0..levels) as f64 / levels as f64;
            ledger.set(TokenId(id), s);
            live.push(TokenId(id));
        }
        let mut sorted: Vec<(f64, TokenId)> = live.iter().map(|&t| (ledger.score(t).unwrap(), t)).collect();
        sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.cmp(&a.1)));
        let expected: BTreeSet<TokenId> = sorted.iter().take(budget).map(|&(_, t)| t).collect();

        let before = live.clone();
        let evicted = h2o_step(&ledger, &mut live, budget).map_err(|e| e.to_string())?;
        let kept: BTreeSet<TokenId> = live.iter().copied().collect();
        ensure!(kept == expected, "case {case}: keep-set differs from sorted top-{budget}");
        ensure!(
            evicted.len() + live.len() == before.len(),
            "case {case}: {} evicted + {} kept != {}",
            evicted.len(),
            live.len(),
            before.len()
        );
    }
    Ok(format!("500 ledgers up to {max_n} tokens match brute-force top-budget with oldest-first ties"))
}

fn sliding_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut checks = 0;
    for case in 0..300 {
        let budget = rng.random_range(1..200);
        let mut live = VecDeque::new();
        let mut all = Vec::new();
        let mut id = 0;
        for _ in 0..rng.random_range(1..30) {
            let batch: Vec<TokenId> = (0..rng.random_range(0..60))
                .map(|_| {
                    id += rng.random_range(1..3);
                    TokenId(id)
                })
                .collect();
            all.extend_from_slice(&batch);
            sliding_window_step(&mut live, &batch, budget);
            let expected: Vec<TokenId> = all[all.len().saturating_sub(budget)..].to_vec();
            let got: Vec<TokenId> = live.iter().copied().collect();
            ensure!(got == expected, "case {case}: live set is not the {budget} highest ids");
            checks += 1;
        }
    }
    Ok(format!("{checks} arrival steps over 300 sequences keep exactly the budget highest ids"))
}

fn saliency_degenerate() -> Outcome {
    let cfg = SaliencyConfig::<f64>::default();
    for rgb in [[0u8, 0, 0], [255, 255, 255], [12, 200, 90], [128, 128, 128]] {
        let f = Frame::uniform(64, 48, rgb, 0).map_err(|e| e.to_string())?;
        let s = saliency_map(&f, &cfg).map_err(|e| e.to_string())?;
        ensure!(s.values.iter().all(|&v| v == 0.0), "uniform {rgb:?}: saliency not identically 0");
        let grid = make_grid(&f, 16).map_err(|e| e.to_string())?;
        let (_, tiers) = patch_tiers(&f, &grid, &cfg).map_err(|e| e.to_string())?;
        ensure!(tiers.iter().all(|&t| t == Tier::Prune), "uniform {rgb:?}: tiers {tiers:?}");
        ensure!(canny_edges(&f, &cfg).is_empty(), "uniform {rgb:?}: edges found");
    }
    let refs: [([u8; 3], [f64; 3], f64); 3] = [
        ([255, 255, 255], [100.0, 0.0, 0.0], 0.01),
        ([0, 0, 0], [0.0, 0.0, 0.0], 0.01),
        ([255, 0, 0], [53.24, 80.09, 67.20], 0.05),
    ];
    let mut worst = 0.0f64;
    for (rgb, lab, tol) in refs {
        let got = rgb_pixel_to_lab::<f64>(rgb);
        for (g, e) in got.iter().zip(lab) {
            let d = (g - e).abs();
            ensure!(d <= tol, "{rgb:?} -> {got:?}, expected {lab:?} +- {tol}");
            worst = worst.max(d);
        }
    }
    Ok(format!("uniform frames: S = 0, all Prune, no edges; LAB reference max deviation {worst:.4}"))
}

fn monotone_savings() -> Outcome {
    let mut config = RunConfig::synthetic(Scenario::Composite, 100);
    config.methods = vec![Method::Salicache];
    config.fidelity = false;
    let report = run(&config).map_err(|e| e.to_string())?;
    let s = &report.series;
    ensure!(s.frame_idx.len() == 100, "{} frames in series", s.frame_idx.len());
    let mono = |v: &[usize]| v.windows(2).all(|w| w[0] <= w[1]);
    ensure!(mono(&s.cumulative_skipped), "skipped series decreases");
    ensure!(mono(&s.cumulative_pruned), "pruned series decreases");
    let (sk, pr) = (s.cumulative_skipped[99], s.cumulative_pruned[99]);
    ensure!(sk > 0 && pr > 0, "skipped {sk}, pruned {pr} at frame 100");
    Ok(format!("composite x100: cumulative skipped {sk}, pruned {pr}, both nondecreasing"))
}

fn determinism() -> Outcome {
    let config = RunConfig::synthetic(Scenario::Composite, 40);
    let a = run(&config).map_err(|e| e.to_string())?;
    let b = run(&config).map_err(|e| e.to_string())?;
    let ja = a.without_timing().to_json().map_err(|e| e.to_string())?;
    let jb = b.without_timing().to_json().map_err(|e| e.to_string())?;
    ensure!(ja == jb, "JSON reports differ");
    let ca = a.to_csv().map_err(|e| e.to_string())?;
    let cb = b.to_csv().map_err(|e| e.to_string())?;
    ensure!(ca == cb, "CSV reports differ");
    Ok(format!("two runs, all methods: {} JSON bytes and {} CSV bytes identical", ja.len(), ca.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("quantization round-trip bounds", quant_round_trip),
        ("byte accounting", accounting),
        ("static-sequence reuse", static_reuse),
        ("tier distribution compression ratio", distribution_ratio),
        ("attention oracle", attention_oracle),
        ("h2o oracle", h2o_oracle),
        ("sliding-window law", sliding_law),
        ("saliency degenerate cases", saliency_degenerate),
        ("monotone savings", monotone_savings),
        ("determinism", determinism),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
