//! Attention received by frequently interacting nodes.
//!
//! For one window with head-averaged attention `A` (queries × keys), node `v`
//! receives `Σ_q Σ_{k : id_k = v} A[q, k] / #valid queries`, summed over the
//! valid query rows. A record holds the mean of that quantity over every
//! traced window in which `v` appears.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{queries, ScoredBatch};
use crate::error::{Error, Result};
use crate::events::{EventStore, NodeId};
use crate::model::TidFormer;
use crate::nn::{Mode, Tensor2};
use crate::sampling::{Negative, NeighborSampler, NeighborSequence, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTraceRecord {
    pub epoch: usize,
    pub node: NodeId,
    pub frequency: usize,
    pub appearances: usize,
    pub mass: f64,
}

/// Mass received by each node present in `seq`.
pub fn window_mass(weights: &Tensor2, seq: &NeighborSequence) -> BTreeMap<NodeId, f64> {
    let mask = seq.valid_mask();
    let valid = mask.iter().filter(|&&m| m).count();
    let mut out = BTreeMap::new();
    if valid == 0 {
        return out;
    }
    for (k, id) in seq.ids().enumerate() {
        let Some(v) = id else { continue };
        let col: f64 = (0..weights.rows()).filter(|&q| mask[q]).map(|q| weights[(q, k)]).sum();
        *out.entry(v).or_insert(0.0) += col / valid as f64;
    }
    out
}

/// Interaction count of every node (as source or target).
pub fn frequencies(store: &EventStore) -> Vec<usize> {
    let mut f = vec![0; store.num_nodes()];
    for e in store.events() {
        f[e.src] += 1;
        f[e.tgt] += 1;
    }
    f
}

pub struct Tracer {
    threshold: usize,
    layer: Option<usize>,
    queries: Vec<Query>,
    frequency: Vec<usize>,
    batch_size: usize,
    seed: u64,
    pub records: Vec<AttentionTraceRecord>,
}

impl Tracer {
    /// Traces the windows of the positives in `range`. Nodes with more than
    /// `threshold` interactions are reported.
    pub fn new(
        store: &EventStore,
        threshold: usize,
        layer: Option<usize>,
        range: Range<usize>,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::Config("trace threshold must be positive".into()));
        }
        let frequency = frequencies(store);
        let tracer = Self {
            threshold,
            layer,
            queries: queries(store, range),
            frequency,
            batch_size: batch_size.max(1),
            seed,
            records: Vec::new(),
        };
        if tracer.key_nodes().is_empty() {
            warn!("no node has more than {threshold} interactions; the trace will be empty");
        }
        Ok(tracer)
    }

    pub fn key_nodes(&self) -> Vec<NodeId> {
        (0..self.frequency.len())
            .filter(|&v| self.frequency[v] > self.threshold)
            .collect()
    }

    /// Mean received mass per node at the model's current state.
    pub fn measure(&self, model: &TidFormer, store: &EventStore, sampler: &NeighborSampler) -> Result<BTreeMap<NodeId, (usize, f64)>> {
        let layers = model.layers.len();
        let layer = self.layer.unwrap_or(layers - 1);
        if layer >= layers {
            return Err(Error::Config(format!("trace layer {layer} but the model has {layers}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut acc: BTreeMap<NodeId, (usize, f64)> = BTreeMap::new();
        for chunk in self.queries.chunks(self.batch_size) {
            // the pair's own target stands in for the negative so only real windows are traced
            let pseudo: Vec<Negative> = chunk
                .iter()
                .map(|q| Negative {
                    src: q.src,
                    tgt: q.tgt,
                    time: q.time,
                    fallback: false,
                })
                .collect();
            let batch = ScoredBatch::sample(sampler, chunk, &pseudo, &mut rng);
            for (s, t) in &batch.positives {
                let cache = model.forward_pair(store, s, t, &batch.index, &mut Mode::Eval)?;
                let [ws, wt] = cache.attention(layer);
                for (w, seq) in [(ws, s), (wt, t)] {
                    for (v, m) in window_mass(&w, seq) {
                        let e = acc.entry(v).or_insert((0, 0.0));
                        e.0 += 1;
                        e.1 += m;
                    }
                }
            }
        }
        Ok(acc
            .into_iter()
            .map(|(v, (n, total))| (v, (n, total / n as f64)))
            .collect())
    }

    /// Appends one record per key node seen in the traced windows.
    pub fn trace(&mut self, epoch: usize, model: &TidFormer, store: &EventStore, sampler: &NeighborSampler) -> Result<()> {
        let keys = self.key_nodes();
        if keys.is_empty() {
            return Ok(());
        }
        let measured = self.measure(model, store, sampler)?;
        for v in keys {
            if let Some(&(appearances, mass)) = measured.get(&v) {
                self.records.push(AttentionTraceRecord {
                    epoch,
                    node: v,
                    frequency: self.frequency[v],
                    appearances,
                    mass,
                });
            }
        }
        Ok(())
    }
}

pub fn write_trace_csv<W: Write>(records: &[AttentionTraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
