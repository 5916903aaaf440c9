//! Bidirectional interaction encoding.
//!
//! Tokens of the source window that belong to neither the intersection of the
//! two windows nor the anchor pair are looked up in the batch target
//! dictionary; a hit replaces the token by that node's own window. The target
//! window is treated symmetrically against the source dictionary. Each token
//! is then described by two counts: occurrences on the source side and on the
//! target side, where a window's own tokens are counted as sampled and the
//! opposite window as reconstructed.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::events::NodeId;
use crate::nn::{GradStore, Linear, ParamStore, Tensor2};
use crate::sampling::{BatchNeighborIndex, NeighborSequence};

#[derive(Debug, Clone, PartialEq)]
pub enum ReconToken {
    Pad,
    Kept(NodeId),
    /// Token `id` replaced by the ids of its own window.
    Expanded { id: NodeId, window: Arc<NeighborSequence> },
}

impl ReconToken {
    pub fn original(&self) -> Option<NodeId> {
        match self {
            Self::Pad => None,
            Self::Kept(id) | Self::Expanded { id, .. } => Some(*id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedSequence {
    /// Owner of the window (`src_0` or `tgt_0`).
    pub anchor: NodeId,
    /// The other node of the pair.
    pub partner: NodeId,
    pub tokens: Vec<ReconToken>,
}

impl ReconstructedSequence {
    /// Flattened ids after replacement (padding dropped).
    pub fn materialize(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for t in &self.tokens {
            match t {
                ReconToken::Pad => {}
                ReconToken::Kept(id) => out.push(*id),
                ReconToken::Expanded { window, .. } => out.extend(window.ids().flatten()),
            }
        }
        out
    }

    /// Multiset of the reconstructed window. Repeated expansions of the same id
    /// are scanned once and weighted, so the cost is O(n + hits·n) with at
    /// most `m` distinct hits per batch.
    fn reconstructed_counts(&self) -> HashMap<NodeId, u32> {
        let mut counts: HashMap<NodeId, u32> = HashMap::with_capacity(self.tokens.len());
        let mut expansions: HashMap<NodeId, (u32, &Arc<NeighborSequence>)> = HashMap::new();
        for t in &self.tokens {
            match t {
                ReconToken::Pad => {}
                ReconToken::Kept(id) => *counts.entry(*id).or_default() += 1,
                ReconToken::Expanded { id, window } => {
                    expansions.entry(*id).or_insert((0, window)).0 += 1;
                }
            }
        }
        for (mult, window) in expansions.values() {
            for nb in window.ids().flatten() {
                *counts.entry(nb).or_default() += mult;
            }
        }
        counts
    }

    fn original_counts(&self) -> HashMap<NodeId, u32> {
        let mut counts: HashMap<NodeId, u32> = HashMap::with_capacity(self.tokens.len());
        for id in self.tokens.iter().filter_map(ReconToken::original) {
            *counts.entry(id).or_default() += 1;
        }
        counts
    }
}

/// Rebuilds both windows of the pair `(src_seq.anchor, tgt_seq.anchor)`.
pub fn bie_reconstruct(
    src_seq: &NeighborSequence,
    tgt_seq: &NeighborSequence,
    index: &BatchNeighborIndex,
) -> (ReconstructedSequence, ReconstructedSequence) {
    let src_ids: HashSet<NodeId> = src_seq.ids().flatten().collect();
    let tgt_ids: HashSet<NodeId> = tgt_seq.ids().flatten().collect();
    let (src0, tgt0) = (src_seq.anchor, tgt_seq.anchor);
    let rebuild = |seq: &NeighborSequence,
                   other: &HashSet<NodeId>,
                   dict: &HashMap<NodeId, Arc<NeighborSequence>>,
                   partner: NodeId| {
        let tokens = seq
            .ids()
            .map(|id| match id {
                None => ReconToken::Pad,
                Some(v) if v == src0 || v == tgt0 || other.contains(&v) => ReconToken::Kept(v),
                Some(v) => match dict.get(&v) {
                    Some(window) => ReconToken::Expanded {
                        id: v,
                        window: Arc::clone(window),
                    },
                    None => ReconToken::Kept(v),
                },
            })
            .collect();
        ReconstructedSequence {
            anchor: seq.anchor,
            partner,
            tokens,
        }
    };
    (
        rebuild(src_seq, &tgt_ids, &index.tgt_index, tgt0),
        rebuild(tgt_seq, &src_ids, &index.src_index, src0),
    )
}

/// Per-token `[source-side count, target-side count]`, padding `[0, 0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionCounts(pub Vec<[u32; 2]>);

impl InteractionCounts {
    pub fn to_tensor(&self) -> Tensor2 {
        let mut t = Tensor2::zeros(self.0.len(), 2);
        for (k, c) in self.0.iter().enumerate() {
            t[(k, 0)] = c[0] as f64;
            t[(k, 1)] = c[1] as f64;
        }
        t
    }
}

pub fn bie_counts(
    src_new: &ReconstructedSequence,
    tgt_new: &ReconstructedSequence,
) -> (InteractionCounts, InteractionCounts) {
    let (src0, tgt0) = (src_new.anchor, tgt_new.anchor);
    let src_own = src_new.original_counts();
    let tgt_own = tgt_new.original_counts();
    let src_recon = src_new.reconstructed_counts();
    let tgt_recon = tgt_new.reconstructed_counts();
    let get = |m: &HashMap<NodeId, u32>, k: NodeId| m.get(&k).copied().unwrap_or(0);
    let mutual = [get(&src_own, tgt0), get(&tgt_own, src0)];

    let i_src = src_new
        .tokens
        .iter()
        .map(|t| match t.original() {
            None => [0, 0],
            Some(v) if v == tgt0 => mutual,
            Some(v) => [get(&src_own, v), get(&tgt_recon, v)],
        })
        .collect();
    let i_tgt = tgt_new
        .tokens
        .iter()
        .map(|t| match t.original() {
            None => [0, 0],
            Some(v) if v == src0 => mutual,
            Some(v) => [get(&src_recon, v), get(&tgt_own, v)],
        })
        .collect();
    (InteractionCounts(i_src), InteractionCounts(i_tgt))
}

/// `Linear(ReLU(Linear(I)))`: 2 → hidden → d_b.
#[derive(Debug, Clone)]
pub struct InteractionEncoder {
    pub hidden: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone)]
pub struct InteractionCache {
    input: Tensor2,
    pre: Tensor2,
    act: Tensor2,
}

impl InteractionEncoder {
    pub fn new(store: &mut ParamStore, hidden: usize, d_b: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            hidden: Linear::new(store, "bie.hidden", 2, hidden, true, rng),
            out: Linear::new(store, "bie.out", hidden, d_b, true, rng),
        }
    }

    pub fn forward(&self, p: &ParamStore, counts: &InteractionCounts) -> Result<(Tensor2, InteractionCache)> {
        let input = counts.to_tensor();
        let pre = self.hidden.forward(p, &input)?;
        let act = crate::nn::relu(&pre);
        let y = self.out.forward(p, &act)?;
        Ok((y, InteractionCache { input, pre, act }))
    }

    pub fn backward(&self, p: &ParamStore, cache: &InteractionCache, dy: &Tensor2, g: &mut GradStore) -> Result<()> {
        let dact = self.out.backward(p, &cache.act, dy, g)?;
        let dpre = crate::nn::relu_backward(&cache.pre, &dact);
        self.hidden.backward_params(&cache.input, &dpre, g)
    }
}
