//! Deterministic stand-in for a vision encoder and the per-layer Q/K/V maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::AttentionConfig;
use crate::frames::{Frame, PatchGrid};
use crate::kvcache::{CacheShape, KvTensors};

/// Per-patch features before projection: mean RGB, RGB standard deviation,
/// and sinusoidal encodings of the patch row and column.
pub const FEATURE_DIM: usize = 6 + 4 * POS_FREQS;
const POS_FREQS: usize = 4;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    fn gaussian(rows: usize, cols: usize, scale: f32, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f32 = StandardNormal.sample(rng);
                z * scale
            })
            .collect();
        Self { rows, cols, data }
    }

    pub fn apply(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul(&self, x: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.rows];
        self.apply(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerProjection {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
}

/// Seeded featurizer plus Q/K/V maps for every layer. Same seed, same bits.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    pub config: AttentionConfig,
    pub featurizer: Matrix,
    pub layers: Vec<LayerProjection>,
}

impl ProjectionSet {
    pub fn new(config: AttentionConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let e = config.embed_dim();
        let featurizer = Matrix::gaussian(e, FEATURE_DIM, 1.0 / (FEATURE_DIM as f32).sqrt(), &mut rng);
        let s = 1.0 / (e as f32).sqrt();
        let d_q = config.n_q_heads * config.head_dim;
        let d_kv = config.n_kv_heads * config.head_dim;
        let layers = (0..config.n_layers)
            .map(|_| LayerProjection {
                query: Matrix::gaussian(d_q, e, s, &mut rng),
                key: Matrix::gaussian(d_kv, e, s, &mut rng),
                value: Matrix::gaussian(d_kv, e, s, &mut rng),
            })
            .collect();
        Self {
            config,
            featurizer,
            layers,
        }
    }

    pub fn cache_shape(&self) -> CacheShape {
        self.config.cache_shape()
    }

    /// K/V for every token embedding, laid out for the cache.
    pub fn project_kv(&self, embeddings: &[Vec<f32>]) -> KvTensors {
        let shape = self.cache_shape();
        let mut kv = KvTensors::zeros(&shape, embeddings.len());
        for (t, e) in embeddings.iter().enumerate() {
            for (l, layer) in self.layers.iter().enumerate() {
                layer.key.apply(e, kv.key_mut(&shape, t, l));
                layer.value.apply(e, kv.value_mut(&shape, t, l));
            }
        }
        kv
    }

    /// Query vectors (`n_q_heads * head_dim`) for `layer`.
    pub fn project_queries(&self, embeddings: &[Vec<f32>], layer: usize) -> Vec<Vec<f32>> {
        embeddings
            .iter()
            .map(|e| self.layers[layer].query.mul(e))
            .collect()
    }

    /// `count` unit-norm probe vectors in embedding space, seeded per layer.
    pub fn probes(&self, layer: usize, count: usize) -> Vec<Vec<f32>> {
        let seed = self
            .config
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(layer as u64 + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = self.config.embed_dim();
        (0..count)
            .map(|_| {
                let mut v = Matrix::gaussian(1, e, 1.0, &mut rng).data;
                normalize(&mut v);
                v
            })
            .collect()
    }
}

fn normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v {
            *x = (*x as f64 / n) as f32;
        }
    }
}

pub fn patch_features(frame: &Frame, grid: &PatchGrid, patch: usize) -> [f32; FEATURE_DIM] {
    let r = grid.rect(patch);
    let mut sum = [0f64; 3];
    let mut sq = [0f64; 3];
    for y in r.y0..r.y0 + r.size {
        for x in r.x0..r.x0 + r.size {
            let px = frame.rgb(x, y);
            for c in 0..3 {
                let v = px[c] as f64 / 255.0;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
    }
    let n = grid.patch_area() as f64;
    let mut f = [0f32; FEATURE_DIM];
    for c in 0..3 {
        let mean = sum[c] / n;
        f[c] = mean as f32;
        f[3 + c] = (sq[c] / n - mean * mean).max(0.0).sqrt() as f32;
    }
    let row = (patch / grid.cols()) as f64 / grid.rows() as f64;
    let col = (patch % grid.cols()) as f64 / grid.cols() as f64;
    for k in 0..POS_FREQS {
        let w = std::f64::consts::PI * (1 << k) as f64;
        f[6 + 4 * k] = (w * row).sin() as f32;
        f[7 + 4 * k] = (w * row).cos() as f32;
        f[8 + 4 * k] = (w * col).sin() as f32;
        f[9 + 4 * k] = (w * col).cos() as f32;
    }
    f
}

/// L2-normalized token embeddings (length `embed_dim`) for every patch.
pub fn embed_patches(frame: &Frame, grid: &PatchGrid, projections: &ProjectionSet) -> Vec<Vec<f32>> {
    (0..grid.patch_count())
        .map(|p| {
            let mut e = projections.featurizer.mul(&patch_features(frame, grid, p));
            normalize(&mut e);
            e
        })
        .collect()
}
