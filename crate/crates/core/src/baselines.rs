//! Budgeted eviction policies: sliding window (evict oldest) and a
//! cumulative-score heavy-hitter policy ("h2o-style").

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::attention::ImportanceLedger;
use crate::error::{Error, Result};
use crate::kvcache::TokenId;
use crate::scalar::Scalar;

pub const DEFAULT_BUDGET: usize = 784;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Maximum live patch tokens.
    pub budget: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionTrace {
    pub evicted: Vec<TokenId>,
    /// Attention-score evaluations spent on tokens that were then evicted.
    pub wasted_score_computations: u64,
}

/// Appends `new_tokens` and evicts the oldest until at most `budget` remain.
/// Ids must arrive in strictly increasing order.
pub fn sliding_window_step(
    live: &mut VecDeque<TokenId>,
    new_tokens: &[TokenId],
    budget: usize,
) -> Vec<TokenId> {
    for &t in new_tokens {
        debug_assert!(live.back().is_none_or(|&b| b < t), "ids must increase");
        live.push_back(t);
    }
    let excess = live.len().saturating_sub(budget);
    live.drain(..excess).collect()
}

#[derive(Debug, Clone, Default)]
pub struct SlidingWindow {
    pub budget: usize,
    live: VecDeque<TokenId>,
    pub trace: EvictionTrace,
}

impl SlidingWindow {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            ..Self::default()
        }
    }

    pub fn live(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.live.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn step(&mut self, new_tokens: &[TokenId]) -> Vec<TokenId> {
        let evicted = sliding_window_step(&mut self.live, new_tokens, self.budget);
        self.trace.evicted.extend_from_slice(&evicted);
        evicted
    }
}

/// Evicts the lowest cumulative scores until at most `budget` tokens remain;
/// equal scores evict the older (lower id) token first. `live` keeps its order.
pub fn h2o_step<T: Scalar>(
    ledger: &ImportanceLedger<T>,
    live: &mut Vec<TokenId>,
    budget: usize,
) -> Result<Vec<TokenId>> {
    let mut ranked = Vec::with_capacity(live.len());
    for &id in live.iter() {
        let s = ledger.score(id).ok_or(Error::LedgerMismatch(id.0))?;
        ranked.push((s, id));
    }
    let excess = live.len().saturating_sub(budget);
    if excess == 0 {
        return Ok(Vec::new());
    }
    let order = |a: &(T, TokenId), b: &(T, TokenId)| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    };
    ranked.select_nth_unstable_by(excess - 1, order);
    let mut evicted: Vec<TokenId> = ranked[..excess].iter().map(|&(_, id)| id).collect();
    evicted.sort_unstable();
    live.retain(|id| evicted.binary_search(id).is_err());
    Ok(evicted)
}

#[derive(Debug, Clone)]
pub struct H2oPolicy<T> {
    pub budget: usize,
    live: Vec<TokenId>,
    pub ledger: ImportanceLedger<T>,
    pub trace: EvictionTrace,
}

impl<T: Scalar> H2oPolicy<T> {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            live: Vec::new(),
            ledger: ImportanceLedger::new(),
            trace: EvictionTrace::default(),
        }
    }

    pub fn live(&self) -> &[TokenId] {
        &self.live
    }

    /// Admits new tokens (tracked at zero importance) ahead of this step's queries.
    pub fn admit(&mut self, new_tokens: &[TokenId]) {
        for &t in new_tokens {
            self.ledger.track(t);
            self.live.push(t);
        }
    }

    /// Evicts after `queries` queries have scored every live token this step.
    pub fn evict(&mut self, queries: usize) -> Result<Vec<TokenId>> {
        let evicted = h2o_step(&self.ledger, &mut self.live, self.budget)?;
        self.trace.wasted_score_computations += (evicted.len() * queries) as u64;
        for &id in &evicted {
            self.ledger.forget(id);
        }
        self.trace.evicted.extend_from_slice(&evicted);
        Ok(evicted)
    }
}
