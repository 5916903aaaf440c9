use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tidformer::config::RunConfig;
use tidformer::harness::batch::{queries, ScoredBatch};
use tidformer::harness::{build_model, evaluate_test, train, RunLog};
use tidformer::nn::{AdamState, Mode};
use tidformer::sampling::{NegativeKind, NegativeSampler, NeighborSampler};
use tidformer::synth::{periodic_bipartite, PeriodicSpec};

const CONFIG: &str = r#"
seed = 3
[model]
neighbors = 8
hidden = 16
dropout = 0.0
d_b = 8
d_s = 4
d_tr = 4
[model.mte]
d_t = 16
alpha = 10.0
beta = 1.0
[train]
lr = 0.01
epochs = 2
batch_size = 100
"#;

fn corpus() -> tidformer::events::EventStore {
    periodic_bipartite(&PeriodicSpec {
        sources: 20,
        targets: 20,
        events: 2000,
        d_e: 4,
        seed: 5,
    })
    .unwrap()
}

#[test]
fn a_single_batch_is_memorised() {
    let store = corpus();
    let cfg = RunConfig::from_toml_str(CONFIG).unwrap();
    let mut model = build_model(&store, &cfg).unwrap();
    let sampler = NeighborSampler::new(&store, cfg.model.neighbors, cfg.model.sampling).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pos = queries(&store, 500..516);
    let mut negs = NegativeSampler::new(&store, NegativeKind::Random, &(0..1400)).unwrap();
    let neg = negs.sample(&pos, &mut rng).unwrap();
    let batch = ScoredBatch::sample(&sampler, &pos, &neg, &mut rng);
    let mut adam = AdamState::new(&model.params);
    let mut loss = f64::INFINITY;
    for _ in 0..200 {
        let mut grads = model.params.zero_grads();
        loss = model
            .batch_loss(&store, &batch.labeled(), &batch.index, &mut Mode::Eval, Some(&mut grads))
            .unwrap();
        if loss < 0.05 {
            break;
        }
        adam.step(&mut model.params, &grads, cfg.train.lr, 0.0).unwrap();
    }
    assert!(loss < 0.05, "loss {loss} after 200 steps");
}

#[test]
fn reevaluating_the_trained_model_reproduces_the_test_metrics() {
    let store = corpus();
    let cfg = RunConfig::from_toml_str(CONFIG).unwrap();
    let outcome = train(&store, &cfg, &mut RunLog::sink(), None).unwrap();
    let sampler = NeighborSampler::new(&store, cfg.model.neighbors, cfg.model.sampling).unwrap();
    let again = evaluate_test(&outcome.model, &store, &sampler, &outcome.splits, &cfg).unwrap();
    assert_eq!(again.ap.to_bits(), outcome.report.test.ap.to_bits());
    assert_eq!(again.auc.to_bits(), outcome.report.test.auc.to_bits());
}

#[test]
fn training_improves_on_chance() {
    let store = corpus();
    let cfg = RunConfig::from_toml_str(CONFIG).unwrap();
    let outcome = train(&store, &cfg, &mut RunLog::sink(), None).unwrap();
    assert!(outcome.report.test.ap > 0.6, "test AP {}", outcome.report.test.ap);
}
