//! First-order temporal neighbour sampling, per-batch neighbour dictionaries
//! and negative sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventStore, NodeId};

/// One slot of a neighbour window. `neighbor == None` marks padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    pub neighbor: Option<NodeId>,
    pub timestamp: f64,
    /// Event that produced the interaction; `None` for padding.
    pub event_id: Option<usize>,
}

impl NeighborEntry {
    pub fn pad(query_time: f64) -> Self {
        Self {
            neighbor: None,
            timestamp: query_time,
            event_id: None,
        }
    }

    pub fn is_pad(&self) -> bool {
        self.neighbor.is_none()
    }
}

/// Fixed-length, left-padded, chronologically ordered neighbour window.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSequence {
    pub anchor: NodeId,
    pub query_time: f64,
    pub entries: Vec<NeighborEntry>,
}

impl NeighborSequence {
    /// Left-pads `history` (already chronological) to length `n`.
    pub fn from_history(anchor: NodeId, query_time: f64, n: usize, history: &[NeighborEntry]) -> Self {
        debug_assert!(history.len() <= n);
        let mut entries = vec![NeighborEntry::pad(query_time); n - history.len()];
        entries.extend_from_slice(history);
        Self {
            anchor,
            query_time,
            entries,
        }
    }

    /// Builds a sequence from neighbour ids, `None` for padding. Timestamps are
    /// synthetic (one second apart, ending one second before `query_time`).
    pub fn from_ids(anchor: NodeId, query_time: f64, ids: &[Option<NodeId>]) -> Self {
        let n = ids.len();
        let entries = ids
            .iter()
            .enumerate()
            .map(|(k, id)| match id {
                Some(v) => NeighborEntry {
                    neighbor: Some(*v),
                    timestamp: query_time - (n - k) as f64,
                    event_id: None,
                },
                None => NeighborEntry::pad(query_time),
            })
            .collect();
        Self {
            anchor,
            query_time,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = Option<NodeId>> + '_ {
        self.entries.iter().map(|e| e.neighbor)
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.entries.iter().map(|e| !e.is_pad()).collect()
    }

    pub fn num_valid(&self) -> usize {
        self.entries.iter().filter(|e| !e.is_pad()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    #[default]
    Recent,
    Uniform,
}

/// Per-node chronological interaction lists, both directions.
#[derive(Debug, Clone)]
pub struct TemporalAdjacency {
    lists: Vec<Vec<NeighborEntry>>,
}

impl TemporalAdjacency {
    pub fn new(store: &EventStore) -> Self {
        let mut lists = vec![Vec::new(); store.num_nodes()];
        for e in store.events() {
            let entry = |nb| NeighborEntry {
                neighbor: Some(nb),
                timestamp: e.timestamp,
                event_id: Some(e.event_id),
            };
            lists[e.src].push(entry(e.tgt));
            if e.tgt != e.src {
                lists[e.tgt].push(entry(e.src));
            }
        }
        Self { lists }
    }

    /// Interactions of `node` strictly before `time`, oldest first.
    pub fn history(&self, node: NodeId, time: f64) -> &[NeighborEntry] {
        let Some(list) = self.lists.get(node) else {
            return &[];
        };
        let end = list.partition_point(|e| e.timestamp < time);
        &list[..end]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.lists.get(node).map_or(0, Vec::len)
    }
}

/// Samples neighbour windows and records how many returned entries would leak
/// (timestamp not strictly before the query).
#[derive(Debug)]
pub struct NeighborSampler {
    adjacency: TemporalAdjacency,
    pub n: usize,
    pub strategy: SamplingStrategy,
    queries: AtomicU64,
    leaks: AtomicU64,
}

impl NeighborSampler {
    pub fn new(store: &EventStore, n: usize, strategy: SamplingStrategy) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("neighbour window length must be at least 1".into()));
        }
        Ok(Self {
            adjacency: TemporalAdjacency::new(store),
            n,
            strategy,
            queries: AtomicU64::new(0),
            leaks: AtomicU64::new(0),
        })
    }

    pub fn adjacency(&self) -> &TemporalAdjacency {
        &self.adjacency
    }

    pub fn sample<R: Rng + ?Sized>(&self, anchor: NodeId, query_time: f64, rng: &mut R) -> NeighborSequence {
        let seq = sample_neighbors(&self.adjacency, anchor, query_time, self.n, self.strategy, rng);
        self.queries.fetch_add(1, Ordering::Relaxed);
        let leaked = seq
            .entries
            .iter()
            .filter(|e| !e.is_pad() && e.timestamp >= query_time)
            .count();
        self.leaks.fetch_add(leaked as u64, Ordering::Relaxed);
        seq
    }

    /// `(queries served, leaked entries)` since construction.
    pub fn audit(&self) -> (u64, u64) {
        (
            self.queries.load(Ordering::Relaxed),
            self.leaks.load(Ordering::Relaxed),
        )
    }
}

/// `recent` keeps the `n` latest interactions before `query_time`; `uniform`
/// draws `n` of them without replacement. Both are left-padded to length `n`.
pub fn sample_neighbors<R: Rng + ?Sized>(
    adjacency: &TemporalAdjacency,
    anchor: NodeId,
    query_time: f64,
    n: usize,
    strategy: SamplingStrategy,
    rng: &mut R,
) -> NeighborSequence {
    let history = adjacency.history(anchor, query_time);
    if history.len() <= n {
        return NeighborSequence::from_history(anchor, query_time, n, history);
    }
    match strategy {
        SamplingStrategy::Recent => {
            NeighborSequence::from_history(anchor, query_time, n, &history[history.len() - n..])
        }
        SamplingStrategy::Uniform => {
            let mut picked = index::sample(rng, history.len(), n).into_vec();
            picked.sort_unstable();
            let chosen: Vec<NeighborEntry> = picked.into_iter().map(|i| history[i]).collect();
            NeighborSequence::from_history(anchor, query_time, n, &chosen)
        }
    }
}

/// A query pair `(src, tgt, time)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub src: NodeId,
    pub tgt: NodeId,
    pub time: f64,
}

/// Per-batch source/target neighbour dictionaries plus each pair's own windows.
#[derive(Debug, Clone)]
pub struct BatchNeighborIndex {
    pub src_index: HashMap<NodeId, Arc<NeighborSequence>>,
    pub tgt_index: HashMap<NodeId, Arc<NeighborSequence>>,
    pub pairs: Vec<(Arc<NeighborSequence>, Arc<NeighborSequence>)>,
}

impl BatchNeighborIndex {
    pub fn m(&self) -> usize {
        self.pairs.len()
    }

    /// Index with explicit dictionaries and no pairs; used for worked examples.
    pub fn from_maps(
        src_index: HashMap<NodeId, Arc<NeighborSequence>>,
        tgt_index: HashMap<NodeId, Arc<NeighborSequence>>,
    ) -> Self {
        Self {
            src_index,
            tgt_index,
            pairs: Vec::new(),
        }
    }

    pub fn empty() -> Self {
        Self::from_maps(HashMap::new(), HashMap::new())
    }
}

/// Samples both windows of every pair; later duplicates overwrite earlier
/// dictionary entries.
pub fn build_batch_index<R: Rng + ?Sized>(
    sampler: &NeighborSampler,
    batch: &[Query],
    rng: &mut R,
) -> BatchNeighborIndex {
    let mut src_index = HashMap::with_capacity(batch.len());
    let mut tgt_index = HashMap::with_capacity(batch.len());
    let mut pairs = Vec::with_capacity(batch.len());
    for q in batch {
        let s = Arc::new(sampler.sample(q.src, q.time, rng));
        let t = Arc::new(sampler.sample(q.tgt, q.time, rng));
        src_index.insert(q.src, Arc::clone(&s));
        tgt_index.insert(q.tgt, Arc::clone(&t));
        pairs.push((s, t));
    }
    BatchNeighborIndex {
        src_index,
        tgt_index,
        pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeKind {
    #[default]
    #[serde(alias = "rnd")]
    Random,
    #[serde(alias = "hist")]
    Historical,
    #[serde(alias = "ind")]
    Inductive,
}

impl std::str::FromStr for NegativeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnd" | "random" => Ok(Self::Random),
            "hist" | "historical" => Ok(Self::Historical),
            "ind" | "inductive" => Ok(Self::Inductive),
            other => Err(Error::Config(format!("unknown negative sampling strategy {other:?}"))),
        }
    }
}

impl NegativeKind {
    pub fn short_name(self) -> &'static str {
        match self {
            Self::Random => "rnd",
            Self::Historical => "hist",
            Self::Inductive => "ind",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Negative {
    pub src: NodeId,
    pub tgt: NodeId,
    pub time: f64,
    /// The strategy's pool was empty and a random target was used instead.
    pub fallback: bool,
}

/// Negative sampler for one evaluation run.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    pub kind: NegativeKind,
    universe: Vec<NodeId>,
    /// src → targets seen with it in the training range.
    historical: BTreeMap<NodeId, Vec<NodeId>>,
    /// src → (target, first timestamp) for edges first observed after training.
    unseen_edges: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
    fallbacks: u64,
}

impl NegativeSampler {
    pub fn new(store: &EventStore, kind: NegativeKind, train: &Range<usize>) -> Result<Self> {
        let universe = store.target_universe();
        let mut hist_sets: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for e in &store.events()[train.clone()] {
            hist_sets.entry(e.src).or_default().insert(e.tgt);
        }
        let mut first_seen: BTreeMap<(NodeId, NodeId), (usize, f64)> = BTreeMap::new();
        for e in store.events() {
            first_seen.entry((e.src, e.tgt)).or_insert((e.event_id, e.timestamp));
        }
        let mut unseen_edges: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for (&(src, tgt), &(eid, ts)) in &first_seen {
            if eid >= train.end {
                unseen_edges.entry(src).or_default().push((tgt, ts));
            }
        }
        Ok(Self {
            kind,
            universe,
            historical: hist_sets
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            unseen_edges,
            fallbacks: 0,
        })
    }

    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn universe(&self) -> &[NodeId] {
        &self.universe
    }

    /// Historical pool of `src` excluding `current`.
    pub fn historical_pool(&self, src: NodeId, current: NodeId) -> Vec<NodeId> {
        self.historical
            .get(&src)
            .map(|v| v.iter().copied().filter(|&t| t != current).collect())
            .unwrap_or_default()
    }

    /// Inductive pool: edges of `src` first observed after training and before `time`.
    pub fn inductive_pool(&self, src: NodeId, current: NodeId, time: f64) -> Vec<NodeId> {
        self.unseen_edges
            .get(&src)
            .map(|v| {
                v.iter()
                    .filter(|&&(t, ts)| t != current && ts < time)
                    .map(|&(t, _)| t)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Uniform target other than `exclude`.
    pub fn random_target<R: Rng + ?Sized>(&self, exclude: NodeId, rng: &mut R) -> Result<NodeId> {
        let present = self.universe.binary_search(&exclude);
        let available = self.universe.len() - usize::from(present.is_ok());
        if available == 0 {
            return Err(Error::Sampling("no target other than the positive is available".into()));
        }
        let mut k = rng.random_range(0..available);
        if let Ok(pos) = present {
            if k >= pos {
                k += 1;
            }
        }
        Ok(self.universe[k])
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, positives: &[Query], rng: &mut R) -> Result<Vec<Negative>> {
        positives
            .iter()
            .map(|q| {
                let pool = match self.kind {
                    NegativeKind::Random => Vec::new(),
                    NegativeKind::Historical => self.historical_pool(q.src, q.tgt),
                    NegativeKind::Inductive => self.inductive_pool(q.src, q.tgt, q.time),
                };
                let (tgt, fallback) = if self.kind == NegativeKind::Random {
                    (self.random_target(q.tgt, rng)?, false)
                } else if pool.is_empty() {
                    self.fallbacks += 1;
                    (self.random_target(q.tgt, rng)?, true)
                } else {
                    (pool[rng.random_range(0..pool.len())], false)
                };
                Ok(Negative {
                    src: q.src,
                    tgt,
                    time: q.time,
                    fallback,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::GraphEvent;
    use crate::nn::Tensor2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_from(pairs: &[(usize, usize, f64)], num_nodes: usize) -> EventStore {
        let events = pairs
            .iter()
            .enumerate()
            .map(|(i, &(src, tgt, timestamp))| GraphEvent {
                event_id: i,
                src,
                tgt,
                timestamp,
                edge_features: vec![],
                label: None,
            })
            .collect();
        EventStore::new(events, num_nodes, 0, Tensor2::zeros(num_nodes, 0), false).unwrap()
    }

    fn random_store(rng: &mut ChaCha8Rng, n_events: usize, n_nodes: usize) -> EventStore {
        let mut t = 0.0;
        let pairs: Vec<_> = (0..n_events)
            .map(|_| {
                t += rng.random_range(0..3) as f64;
                (rng.random_range(0..n_nodes), rng.random_range(0..n_nodes), t)
            })
            .collect();
        store_from(&pairs, n_nodes)
    }

    #[test]
    fn underfull_window_is_left_padded() {
        let s = store_from(&[(0, 1, 1.0), (0, 2, 2.0), (0, 3, 9.0)], 4);
        let adj = TemporalAdjacency::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq = sample_neighbors(&adj, 0, 5.0, 4, SamplingStrategy::Recent, &mut rng);
        let ids: Vec<_> = seq.ids().collect();
        assert_eq!(ids, vec![None, None, Some(1), Some(2)]);
        assert_eq!(seq.entries[0].timestamp, 5.0);
        assert_eq!(seq.valid_mask(), vec![false, false, true, true]);
    }

    #[test]
    fn no_history_is_all_padding() {
        let s = store_from(&[(0, 1, 1.0)], 3);
        let adj = TemporalAdjacency::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq = sample_neighbors(&adj, 2, 5.0, 3, SamplingStrategy::Uniform, &mut rng);
        assert_eq!(seq.num_valid(), 0);
        // query at the interaction time itself excludes it
        let seq = sample_neighbors(&adj, 0, 1.0, 3, SamplingStrategy::Recent, &mut rng);
        assert_eq!(seq.num_valid(), 0);
    }

    #[test]
    fn recent_takes_latest_before_query() {
        let pairs: Vec<_> = (0..6).map(|k| (0, k + 1, k as f64 * 2.0)).chain([(0, 9, 20.0)]).collect();
        let s = store_from(&pairs, 10);
        let adj = TemporalAdjacency::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq = sample_neighbors(&adj, 0, 11.0, 4, SamplingStrategy::Recent, &mut rng);
        // brute force: filter ts < 11, sort, keep last 4
        let mut hist: Vec<_> = pairs.iter().filter(|p| p.2 < 11.0).collect();
        hist.sort_by(|a, b| a.2.total_cmp(&b.2));
        let expected: Vec<_> = hist[hist.len() - 4..].iter().map(|p| Some(p.1)).collect();
        assert_eq!(seq.ids().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn recent_is_suffix_of_brute_force_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let s = random_store(&mut rng, 400, 12);
        let adj = TemporalAdjacency::new(&s);
        for _ in 0..1000 {
            let anchor = rng.random_range(0..12);
            let time = rng.random_range(0.0..420.0);
            let n = rng.random_range(1..10);
            let seq = sample_neighbors(&adj, anchor, time, n, SamplingStrategy::Recent, &mut rng);
            let brute: Vec<(usize, usize)> = s
                .events()
                .iter()
                .filter(|e| e.timestamp < time && (e.src == anchor || e.tgt == anchor))
                .map(|e| (e.event_id, if e.src == anchor { e.tgt } else { e.src }))
                .collect();
            let got: Vec<(usize, usize)> = seq
                .entries
                .iter()
                .filter(|e| !e.is_pad())
                .map(|e| (e.event_id.unwrap(), e.neighbor.unwrap()))
                .collect();
            assert_eq!(got.len(), brute.len().min(n));
            assert_eq!(&brute[brute.len() - got.len()..], &got[..]);
        }
    }

    #[test]
    fn no_strategy_leaks_future_interactions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_store(&mut rng, 300, 8);
        for strategy in [SamplingStrategy::Recent, SamplingStrategy::Uniform] {
            let sampler = NeighborSampler::new(&s, 6, strategy).unwrap();
            for e in s.events() {
                let seq = sampler.sample(e.src, e.timestamp, &mut rng);
                assert!(seq.entries.iter().all(|x| x.is_pad() || x.timestamp < e.timestamp));
                // chronological with ties broken by event id
                let real: Vec<_> = seq.entries.iter().filter(|x| !x.is_pad()).collect();
                assert!(real.windows(2).all(|w| (w[0].timestamp, w[0].event_id) < (w[1].timestamp, w[1].event_id)));
            }
            assert_eq!(sampler.audit(), (s.len() as u64, 0));
        }
    }

    #[test]
    fn uniform_is_reproducible_for_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_store(&mut rng, 200, 4);
        let adj = TemporalAdjacency::new(&s);
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|k| sample_neighbors(&adj, k % 4, 150.0, 5, SamplingStrategy::Uniform, &mut r))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn batch_index_keys() {
        let s = store_from(&[(0, 1, 1.0), (2, 3, 2.0), (0, 3, 3.0)], 4);
        let sampler = NeighborSampler::new(&s, 2, SamplingStrategy::Recent).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = build_batch_index(&sampler, &[Query { src: 0, tgt: 1, time: 5.0 }], &mut rng);
        assert_eq!((one.src_index.len(), one.tgt_index.len()), (1, 1));

        let dup = build_batch_index(
            &sampler,
            &[
                Query { src: 0, tgt: 1, time: 1.5 },
                Query { src: 0, tgt: 3, time: 5.0 },
            ],
            &mut rng,
        );
        assert_eq!(dup.src_index.len(), 1);
        assert_eq!(dup.src_index[&0].query_time, 5.0);
        assert_eq!(dup.m(), 2);

        let many: Vec<Query> = (0..200).map(|i| Query { src: i, tgt: 200 + i, time: 1.0 }).collect();
        let big_store = store_from(&[(0, 1, 0.0)], 400);
        let big = NeighborSampler::new(&big_store, 2, SamplingStrategy::Recent).unwrap();
        assert_eq!(build_batch_index(&big, &many, &mut rng).src_index.len(), 200);
    }

    #[test]
    fn random_negative_with_two_targets_is_forced() {
        let s = store_from(&[(0, 1, 1.0), (0, 2, 2.0), (3, 1, 3.0)], 4);
        let mut ns = NegativeSampler::new(&s, NegativeKind::Random, &(0..2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let neg = ns.sample(&[Query { src: 0, tgt: 1, time: 4.0 }], &mut rng).unwrap();
            assert_eq!(neg[0].tgt, 2);
            assert_eq!((neg[0].src, neg[0].time), (0, 4.0));
        }
        let single = store_from(&[(0, 1, 1.0)], 2);
        let mut ns = NegativeSampler::new(&single, NegativeKind::Random, &(0..1)).unwrap();
        assert!(ns.sample(&[Query { src: 0, tgt: 1, time: 2.0 }], &mut rng).is_err());
    }

    #[test]
    fn historical_falls_back_when_pool_empty() {
        let s = store_from(&[(0, 1, 1.0), (0, 2, 2.0), (3, 1, 3.0), (4, 2, 4.0)], 5);
        let mut ns = NegativeSampler::new(&s, NegativeKind::Historical, &(0..2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let neg = ns.sample(&[Query { src: 3, tgt: 1, time: 5.0 }], &mut rng).unwrap();
        assert!(neg[0].fallback);
        assert_eq!(ns.fallbacks(), 1);
        let neg = ns.sample(&[Query { src: 0, tgt: 1, time: 5.0 }], &mut rng).unwrap();
        assert_eq!((neg[0].tgt, neg[0].fallback), (2, false));
    }

    #[test]
    fn historical_pool_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_store(&mut rng, 20, 6);
        let train = 0..14;
        let ns = NegativeSampler::new(&s, NegativeKind::Historical, &train).unwrap();
        for src in 0..6 {
            for current in 0..6 {
                let mut brute: Vec<usize> = s.events()[train.clone()]
                    .iter()
                    .filter(|e| e.src == src && e.tgt != current)
                    .map(|e| e.tgt)
                    .collect();
                brute.sort_unstable();
                brute.dedup();
                assert_eq!(ns.historical_pool(src, current), brute);
            }
        }
    }

    #[test]
    fn inductive_pool_uses_edges_first_seen_after_training() {
        let s = store_from(&[(0, 1, 1.0), (0, 2, 2.0), (0, 1, 3.0), (0, 3, 4.0), (0, 4, 6.0)], 5);
        let ns = NegativeSampler::new(&s, NegativeKind::Inductive, &(0..2)).unwrap();
        assert_eq!(ns.inductive_pool(0, 9, 5.0), vec![3]);
        assert_eq!(ns.inductive_pool(0, 3, 7.0), vec![4]);
        assert!(ns.inductive_pool(1, 0, 7.0).is_empty());
    }
}
