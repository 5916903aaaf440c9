//! Window sampling for a batch of positives and their negatives.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::model::LabeledPair;
use crate::sampling::{BatchNeighborIndex, Negative, NeighborSampler, NeighborSequence, Query};

/// Windows of every scored pair plus the per-batch dictionaries.
#[derive(Debug, Clone)]
pub struct ScoredBatch {
    pub index: BatchNeighborIndex,
    pub positives: Vec<(Arc<NeighborSequence>, Arc<NeighborSequence>)>,
    pub negatives: Vec<(Arc<NeighborSequence>, Arc<NeighborSequence>)>,
}

impl ScoredBatch {
    /// The source window is sampled once and shared by a positive and its
    /// negative. Dictionaries hold every window of the batch; a later pair
    /// overwrites an earlier entry for the same node.
    pub fn sample<R: Rng + ?Sized>(
        sampler: &NeighborSampler,
        positives: &[Query],
        negatives: &[Negative],
        rng: &mut R,
    ) -> Self {
        debug_assert_eq!(positives.len(), negatives.len());
        let mut src_index = HashMap::with_capacity(positives.len());
        let mut tgt_index = HashMap::with_capacity(2 * positives.len());
        let mut pos = Vec::with_capacity(positives.len());
        let mut neg = Vec::with_capacity(positives.len());
        for (q, n) in positives.iter().zip(negatives) {
            let s = Arc::new(sampler.sample(q.src, q.time, rng));
            let t = Arc::new(sampler.sample(q.tgt, q.time, rng));
            let u = Arc::new(sampler.sample(n.tgt, n.time, rng));
            src_index.insert(q.src, Arc::clone(&s));
            tgt_index.insert(q.tgt, Arc::clone(&t));
            tgt_index.insert(n.tgt, Arc::clone(&u));
            pos.push((Arc::clone(&s), t));
            neg.push((s, u));
        }
        let pairs = pos.iter().chain(&neg).cloned().collect();
        Self {
            index: BatchNeighborIndex {
                src_index,
                tgt_index,
                pairs,
            },
            positives: pos,
            negatives: neg,
        }
    }

    /// Positives (label 1) then negatives (label 0).
    pub fn labeled(&self) -> Vec<LabeledPair<'_>> {
        let pos = self.positives.iter().map(|(s, t)| LabeledPair {
            src: s,
            tgt: t,
            label: 1.0,
        });
        let neg = self.negatives.iter().map(|(s, t)| LabeledPair {
            src: s,
            tgt: t,
            label: 0.0,
        });
        pos.chain(neg).collect()
    }
}

pub fn queries(store: &crate::events::EventStore, ids: impl IntoIterator<Item = usize>) -> Vec<Query> {
    ids.into_iter()
        .map(|i| {
            let e = store.event(i);
            Query {
                src: e.src,
                tgt: e.tgt,
                time: e.timestamp,
            }
        })
        .collect()
}
