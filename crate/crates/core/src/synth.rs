//! Synthetic event streams with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventStore, GraphEvent, NodeId};
use crate::nn::Tensor2;

const DAY: f64 = 86_400.0;
const WEEK: f64 = 7.0 * DAY;

/// Bipartite stream where every source visits its three targets in a fixed
/// order on three fixed weekdays, at a per-source time of day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodicSpec {
    pub sources: usize,
    pub targets: usize,
    pub events: usize,
    pub d_e: usize,
    pub seed: u64,
}

impl Default for PeriodicSpec {
    fn default() -> Self {
        Self {
            sources: 100,
            targets: 100,
            events: 20_000,
            d_e: 4,
            seed: 0,
        }
    }
}

pub const CYCLE: usize = 3;
const SLOT_DAYS: [f64; CYCLE] = [0.0, 2.0, 4.0];

pub fn periodic_bipartite(spec: &PeriodicSpec) -> Result<EventStore> {
    if spec.sources == 0 || spec.targets < CYCLE {
        return Err(Error::Config(format!("need at least one source and {CYCLE} targets")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let plans: Vec<(Vec<NodeId>, f64)> = (0..spec.sources)
        .map(|_| {
            let picks = rand::seq::index::sample(&mut rng, spec.targets, CYCLE).into_vec();
            let targets = picks.into_iter().map(|t| spec.sources + t).collect();
            (targets, rng.random_range(0.0..DAY))
        })
        .collect();
    let per_source = spec.events.div_ceil(spec.sources);
    let mut events = Vec::with_capacity(spec.events);
    'outer: for k in 0..per_source {
        for (s, (targets, phase)) in plans.iter().enumerate() {
            if events.len() == spec.events {
                break 'outer;
            }
            let (week, slot) = (k / CYCLE, k % CYCLE);
            events.push(GraphEvent {
                event_id: 0,
                src: s,
                tgt: targets[slot],
                timestamp: week as f64 * WEEK + SLOT_DAYS[slot] * DAY + phase,
                edge_features: (0..spec.d_e).map(|_| rng.random_range(-1.0..1.0)).collect(),
                label: None,
            });
        }
    }
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let n = spec.sources + spec.targets;
    EventStore::new(events, n, spec.d_e, Tensor2::zeros(n, 0), true)
}

/// Rule-based predictor for the periodic stream: `cand` is scored 1 when it
/// is the target `src` met three interactions before `time`.
pub fn cycle_oracle_score(store: &EventStore, src: NodeId, cand: NodeId, time: f64) -> f64 {
    let mut seen = store
        .events()
        .iter()
        .rev()
        .skip_while(|e| e.timestamp >= time)
        .filter(|e| e.src == src);
    match seen.nth(CYCLE - 1) {
        Some(e) if e.tgt == cand => 1.0,
        _ => 0.0,
    }
}

/// Bipartite stream with one hot target whose interactions announce the type
/// of the target the source meets next. Each source repeats blocks of
/// `[hot, typed, noise, noise, noise]`. The hot event carries the one-hot
/// intent in the first `types` features. The typed event goes to a cold target
/// of that type and repeats the one-hot in the last `types` features. Noise
/// events go to uniform cold targets with zero features. With four cold events
/// per hot event and 40 cold targets the hot node is met ten times as often as
/// an average cold target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HotNodeSpec {
    pub sources: usize,
    pub cold_targets: usize,
    pub types: usize,
    pub blocks: usize,
    pub seed: u64,
}

impl Default for HotNodeSpec {
    fn default() -> Self {
        Self {
            sources: 30,
            cold_targets: 40,
            types: 4,
            blocks: 30,
            seed: 0,
        }
    }
}

pub const BLOCK: usize = 5;

impl HotNodeSpec {
    pub fn hot_node(&self) -> NodeId {
        self.sources
    }

    pub fn num_nodes(&self) -> usize {
        self.sources + 1 + self.cold_targets
    }

    pub fn d_e(&self) -> usize {
        2 * self.types
    }
}

pub fn hot_node_corpus(spec: &HotNodeSpec) -> Result<EventStore> {
    if spec.types == 0 || spec.cold_targets < spec.types || spec.sources == 0 {
        return Err(Error::Config("hot-node corpus needs sources and at least one cold target per type".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let hot = spec.hot_node();
    let first_cold = hot + 1;
    let per_type = spec.cold_targets / spec.types;
    let d_e = spec.d_e();
    let mut events = Vec::with_capacity(spec.sources * spec.blocks * BLOCK);
    for s in 0..spec.sources {
        let phase = rng.random_range(0.0..3600.0);
        for b in 0..spec.blocks {
            let intent = rng.random_range(0..spec.types);
            for slot in 0..BLOCK {
                let mut features = vec![0.0; d_e];
                let tgt = match slot {
                    0 => {
                        features[intent] = 1.0;
                        hot
                    }
                    1 => {
                        features[spec.types + intent] = 1.0;
                        first_cold + intent + spec.types * rng.random_range(0..per_type)
                    }
                    _ => first_cold + rng.random_range(0..spec.cold_targets),
                };
                events.push(GraphEvent {
                    event_id: 0,
                    src: s,
                    tgt,
                    timestamp: ((b * BLOCK + slot) as f64) * 3600.0 + phase,
                    edge_features: features,
                    label: None,
                });
            }
        }
    }
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let n = spec.num_nodes();
    EventStore::new(events, n, d_e, Tensor2::zeros(n, 0), true)
}
