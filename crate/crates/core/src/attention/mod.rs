//! Grouped-query attention over a [`KvSource`] and the cumulative
//! importance ledger used by heavy-hitter eviction.

pub mod embed;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kvcache::{CacheShape, KvSource};
use crate::scalar::Scalar;

pub use crate::kvcache::TokenId;
pub use embed::{embed_patches, ProjectionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub n_layers: usize,
    pub n_q_heads: usize,
    pub n_kv_heads: usize,
    pub head_dim: usize,
    pub seed: u64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            n_q_heads: 8,
            n_kv_heads: 2,
            head_dim: 16,
            seed: 0,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.n_q_heads == 0 || self.n_kv_heads == 0 || self.head_dim == 0 {
            return Err(Error::Config(format!("attention dimensions must be positive: {self:?}")));
        }
        if !self.n_q_heads.is_multiple_of(self.n_kv_heads) {
            return Err(Error::Config(format!(
                "{} query heads cannot be grouped over {} KV heads",
                self.n_q_heads, self.n_kv_heads
            )));
        }
        Ok(())
    }

    /// Token embedding width, `n_q_heads * head_dim`.
    pub fn embed_dim(&self) -> usize {
        self.n_q_heads * self.head_dim
    }

    pub fn cache_shape(&self) -> CacheShape {
        CacheShape {
            n_layers: self.n_layers,
            n_kv_heads: self.n_kv_heads,
            head_dim: self.head_dim,
        }
    }

    /// KV head read by query head `h`.
    pub fn kv_head_for(&self, h: usize) -> usize {
        h * self.n_kv_heads / self.n_q_heads
    }
}

/// Numerically stable softmax (max subtracted first).
pub fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// Attention of every query over the live tokens of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput<T> {
    pub layer: usize,
    pub tokens: Vec<TokenId>,
    /// Per query: concatenated head outputs, `n_q_heads * head_dim`.
    pub outputs: Vec<Vec<T>>,
    /// Per query, per query head: softmax weights aligned with `tokens`.
    pub weights: Vec<Vec<Vec<T>>>,
}

/// `softmax(q k^T / sqrt(d_k)) v` per query head, where head `h` reads KV head
/// `h * n_kv / n_q`. Pruned tokens are simply absent from the source.
pub fn gqa_attention<T: Scalar, S: KvSource + ?Sized>(
    queries: &[Vec<T>],
    source: &S,
    layer: usize,
    config: &AttentionConfig,
) -> Result<AttentionOutput<T>> {
    config.validate()?;
    if source.shape() != config.cache_shape() {
        return Err(Error::ShapeMismatch(format!(
            "source shape {:?} vs attention config {:?}",
            source.shape(),
            config.cache_shape()
        )));
    }
    let live = source.live_tokens(layer)?;
    if live.is_empty() {
        return Err(Error::NoAttendableTokens);
    }
    let hd = config.head_dim;
    let keys: Vec<Vec<T>> = live.iter().map(|t| t.key.iter().map(|&x| T::widen(x)).collect()).collect();
    let values: Vec<Vec<T>> = live.iter().map(|t| t.value.iter().map(|&x| T::widen(x)).collect()).collect();
    let inv_sqrt_dk = T::one() / T::of_usize(hd).sqrt();

    let mut outputs = Vec::with_capacity(queries.len());
    let mut weights = Vec::with_capacity(queries.len());
    for q in queries {
        if q.len() != config.n_q_heads * hd {
            return Err(Error::ShapeMismatch(format!(
                "query has {} elements, expected {}",
                q.len(),
                config.n_q_heads * hd
            )));
        }
        let mut out = vec![T::zero(); q.len()];
        let mut per_head = Vec::with_capacity(config.n_q_heads);
        for h in 0..config.n_q_heads {
            let qh = &q[h * hd..(h + 1) * hd];
            let g = config.kv_head_for(h);
            let seg = g * hd..(g + 1) * hd;
            let mut w: Vec<T> = keys
                .iter()
                .map(|k| {
                    let dot: T = qh.iter().zip(&k[seg.clone()]).map(|(&a, &b)| a * b).sum();
                    dot * inv_sqrt_dk
                })
                .collect();
            softmax_in_place(&mut w);
            let oh = &mut out[h * hd..(h + 1) * hd];
            for (wj, v) in w.iter().zip(&values) {
                for (o, &x) in oh.iter_mut().zip(&v[seg.clone()]) {
                    *o += *wj * x;
                }
            }
            per_head.push(w);
        }
        outputs.push(out);
        weights.push(per_head);
    }
    Ok(AttentionOutput {
        layer,
        tokens: live.into_iter().map(|t| t.id).collect(),
        outputs,
        weights,
    })
}

/// Cumulative attention mass per token, summed over heads and layers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportanceLedger<T> {
    scores: BTreeMap<TokenId, T>,
    query_count: usize,
}

impl<T: Scalar> ImportanceLedger<T> {
    pub fn new() -> Self {
        Self {
            scores: BTreeMap::new(),
            query_count: 0,
        }
    }

    pub fn query_count(&self) -> usize {
        self.query_count
    }

    pub fn score(&self, id: TokenId) -> Option<T> {
        self.scores.get(&id).copied()
    }

    pub fn scores(&self) -> &BTreeMap<TokenId, T> {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Starts tracking `id` at zero if it is new.
    pub fn track(&mut self, id: TokenId) {
        self.scores.entry(id).or_insert_with(T::zero);
    }

    /// Sets a score directly; used to replay externally computed ledgers.
    pub fn set(&mut self, id: TokenId, score: T) {
        self.scores.insert(id, score);
    }

    pub fn forget(&mut self, id: TokenId) {
        self.scores.remove(&id);
    }

    /// Adds one query's post-softmax rows (one per head and layer) to the
    /// scores of `tokens`, then counts the query.
    pub fn accumulate(&mut self, tokens: &[TokenId], rows: &[&[T]]) -> Result<()> {
        let tol = T::of(1e-4);
        for row in rows {
            if row.len() != tokens.len() {
                return Err(Error::ShapeMismatch(format!(
                    "attention row has {} weights for {} tokens",
                    row.len(),
                    tokens.len()
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::RowSum { sum: sum.as_f64() });
            }
        }
        for (j, &id) in tokens.iter().enumerate() {
            let add: T = rows.iter().map(|r| r[j]).sum();
            *self.scores.entry(id).or_insert_with(T::zero) += add;
        }
        self.query_count += 1;
        Ok(())
    }

    /// Accumulates query `query` from per-layer outputs that share one token set.
    pub fn accumulate_query(&mut self, per_layer: &[AttentionOutput<T>], query: usize) -> Result<()> {
        let Some(first) = per_layer.first() else {
            return Ok(());
        };
        if per_layer.iter().any(|o| o.tokens != first.tokens) {
            return Err(Error::Invariant("layers attended different token sets".into()));
        }
        let rows: Vec<&[T]> = per_layer
            .iter()
            .flat_map(|o| o.weights[query].iter().map(Vec::as_slice))
            .collect();
        self.accumulate(&first.tokens, &rows)
    }
}
