//! End-to-end gradient check of the full model on a small sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{queries, ScoredBatch};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::model::{GraphShape, TidFormer};
use crate::nn::{grad_check, GradCheckReport, Mode};
use crate::sampling::{NegativeKind, NegativeSampler, NeighborSampler};
use crate::synth::{periodic_bipartite, PeriodicSpec};

#[derive(Debug, Clone)]
pub struct GradCheckSetup {
    pub model: ModelConfig,
    pub batch: usize,
    pub probes: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for GradCheckSetup {
    /// Two layers, two heads, `d_t = 100`, `d_b = 50`, `d_s = d_tr = 50`,
    /// four-token windows, four positives with one negative each.
    fn default() -> Self {
        let mut model = ModelConfig {
            neighbors: 4,
            hidden: 16,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        model.mte.alpha = Some(10.0);
        model.mte.beta = Some(7.0);
        Self {
            model,
            batch: 4,
            probes: 400,
            epsilon: 1e-6,
            seed: 0,
        }
    }
}

pub fn check_full_model(setup: &GradCheckSetup) -> Result<GradCheckReport> {
    let store = periodic_bipartite(&PeriodicSpec {
        sources: 6,
        targets: 6,
        events: 120,
        d_e: 4,
        seed: setup.seed,
    })?;
    let mut model = TidFormer::new(setup.model.clone(), GraphShape::of(&store), setup.seed)?;
    model.validate_for(store.duration_seconds())?;
    let sampler = NeighborSampler::new(&store, setup.model.neighbors, setup.model.sampling)?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let n = store.len();
    let pos = queries(&store, n - setup.batch..n);
    let neg = NegativeSampler::new(&store, NegativeKind::Random, &(0..n))?.sample(&pos, &mut rng)?;
    let batch = ScoredBatch::sample(&sampler, &pos, &neg, &mut rng);
    let pairs = batch.labeled();
    let mut grads = model.params.zero_grads();
    model.batch_loss(&store, &pairs, &batch.index, &mut Mode::Eval, Some(&mut grads))?;
    let probe = model.clone();
    let mut params = std::mem::take(&mut model.params);
    let mut scratch = probe;
    grad_check(
        &mut params,
        &grads,
        |p| {
            scratch.params.clone_from(p);
            scratch.batch_loss(&store, &pairs, &batch.index, &mut Mode::Eval, None)
        },
        setup.epsilon,
        setup.probes,
        &mut rng,
    )
}
