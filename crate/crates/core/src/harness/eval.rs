//! Scoring a split under a negative-sampling strategy and setting.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{queries, ScoredBatch};
use super::metrics::{auc_roc, average_precision};
use crate::config::{EvalConfig, Setting};
use crate::error::{Error, Result};
use crate::events::{inductive_mask, EventStore};
use crate::model::TidFormer;
use crate::sampling::{NegativeSampler, NeighborSampler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ap: f64,
    pub auc: f64,
    pub positives: usize,
    /// Negatives drawn uniformly because the strategy's pool was empty.
    pub fallbacks: u64,
}

/// Event ids of `range` that count as positives under `setting`.
pub fn positive_ids(store: &EventStore, range: &Range<usize>, train: &Range<usize>, setting: Setting) -> Vec<usize> {
    match setting {
        Setting::Transductive => range.clone().collect(),
        Setting::Inductive => {
            let unseen = inductive_mask(store, train);
            range
                .clone()
                .filter(|&i| {
                    let e = store.event(i);
                    unseen.contains(&e.src) || unseen.contains(&e.tgt)
                })
                .collect()
        }
    }
}

/// Scores every positive of `range` against one negative each. Negatives and
/// windows come from a generator seeded with `seed`, so repeated calls draw
/// the same negatives.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &TidFormer,
    store: &EventStore,
    sampler: &NeighborSampler,
    range: &Range<usize>,
    train: &Range<usize>,
    spec: &EvalConfig,
    batch_size: usize,
    seed: u64,
) -> Result<EvalResult> {
    let ids = positive_ids(store, range, train, spec.setting);
    if ids.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "no {:?} positives in events {range:?}",
            spec.setting
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives = NegativeSampler::new(store, spec.nss, train)?;
    let mut scores = Vec::with_capacity(2 * ids.len());
    let mut labels = Vec::with_capacity(2 * ids.len());
    for chunk in ids.chunks(batch_size.max(1)) {
        let pos = queries(store, chunk.iter().copied());
        let neg = negatives.sample(&pos, &mut rng)?;
        let batch = ScoredBatch::sample(sampler, &pos, &neg, &mut rng);
        for pair in batch.labeled() {
            let p = model
                .forward_pair(store, pair.src, pair.tgt, &batch.index, &mut crate::nn::Mode::Eval)?
                .probability();
            scores.push(p);
            labels.push(pair.label == 1.0);
        }
    }
    Ok(EvalResult {
        ap: average_precision(&scores, &labels)?,
        auc: auc_roc(&scores, &labels)?,
        positives: ids.len(),
        fallbacks: negatives.fallbacks(),
    })
}
