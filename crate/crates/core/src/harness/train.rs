//! Training loop with early stopping on validation AP.

use std::io::Write;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::batch::{queries, ScoredBatch};
use super::eval::{evaluate, EvalResult};
use crate::config::{EvalConfig, RunConfig};
use crate::error::{Error, Result};
use crate::events::{chronological_split, EventStore, SplitRanges};
use crate::model::{GraphShape, TidFormer};
use crate::nn::{AdamState, Checkpoint, Mode, ParamStore};
use crate::sampling::{NegativeKind, NegativeSampler, NeighborSampler};

/// Seed offsets for the independent random streams of a run.
const STREAM_INIT: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_VAL: u64 = 3;
const STREAM_TEST: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ap: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    pub variant: String,
    pub token_width: usize,
    pub num_params: usize,
    pub epochs_run: usize,
    /// 0 when the untrained model was kept.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub val: EvalResult,
    pub test: EvalResult,
}

/// JSON-lines writer. Entries carry no wall-clock data, so a run log is a
/// function of data, configuration and seed.
pub struct RunLog<'a> {
    out: Option<&'a mut dyn Write>,
}

impl<'a> RunLog<'a> {
    pub fn new(out: &'a mut dyn Write) -> Self {
        Self { out: Some(out) }
    }

    pub fn sink() -> Self {
        Self { out: None }
    }

    pub fn emit(&mut self, value: &serde_json::Value) -> Result<()> {
        if let Some(w) = self.out.as_deref_mut() {
            serde_json::to_writer(&mut *w, value)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Called with `(epoch, model)` before training (epoch 0) and after every epoch.
pub type EpochHook<'h> = dyn FnMut(usize, &TidFormer) -> Result<()> + 'h;

pub struct TrainOutcome {
    pub model: TidFormer,
    pub optimizer: AdamState,
    pub report: RunReport,
    pub splits: SplitRanges,
}

impl TrainOutcome {
    pub fn checkpoint(&self, cfg: &RunConfig) -> Result<Checkpoint> {
        Checkpoint::capture(
            &self.model.params,
            Some(&self.optimizer),
            serde_json::to_value(cfg)?,
            &cfg.hash(),
        )
    }
}

/// Builds the model for `cfg` and checks the temporal decay condition
/// against the store's time span.
pub fn build_model(store: &EventStore, cfg: &RunConfig) -> Result<TidFormer> {
    cfg.validate()?;
    let model = TidFormer::new(cfg.model.clone(), GraphShape::of(store), cfg.seed.wrapping_add(STREAM_INIT))?;
    model.validate_for(store.duration_seconds())?;
    Ok(model)
}

/// Test-split evaluation with the run's own negative stream, so a reloaded
/// checkpoint reproduces the reported numbers.
pub fn evaluate_test(
    model: &TidFormer,
    store: &EventStore,
    sampler: &NeighborSampler,
    splits: &SplitRanges,
    cfg: &RunConfig,
) -> Result<EvalResult> {
    evaluate(
        model,
        store,
        sampler,
        &splits.test,
        &splits.train,
        &cfg.eval,
        cfg.train.batch_size,
        cfg.seed.wrapping_add(STREAM_TEST),
    )
}

pub fn train(
    store: &EventStore,
    cfg: &RunConfig,
    log: &mut RunLog<'_>,
    mut hook: Option<&mut EpochHook<'_>>,
) -> Result<TrainOutcome> {
    let splits = chronological_split(store, &cfg.split.spec()?)?;
    let mut model = build_model(store, cfg)?;
    let sampler = NeighborSampler::new(store, cfg.model.neighbors, cfg.model.sampling)?;
    let tc = &cfg.train;
    let val_spec = EvalConfig {
        nss: NegativeKind::Random,
        setting: cfg.eval.setting,
    };
    log.emit(&json!({
        "kind": "start",
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "variant": cfg.model.variant.label(),
        "token_width": model.dims().width(),
        "num_params": model.params.num_scalars(),
        "events": store.len(),
        "train": splits.train.len(),
        "val": splits.val.len(),
        "test": splits.test.len(),
    }))?;

    let mut optimizer = AdamState::new(&model.params);
    let mut train_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(STREAM_TRAIN));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(STREAM_DROPOUT));
    let mut train_negatives = NegativeSampler::new(store, NegativeKind::Random, &splits.train)?;
    let validate = |m: &TidFormer| {
        evaluate(
            m,
            store,
            &sampler,
            &splits.val,
            &splits.train,
            &val_spec,
            tc.batch_size,
            cfg.seed.wrapping_add(STREAM_VAL),
        )
    };

    if let Some(h) = hook.as_deref_mut() {
        h(0, &model)?;
    }
    let mut best_val = validate(&model)?;
    let mut best_params: ParamStore = model.params.clone();
    let mut best_optimizer = optimizer.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let ids: Vec<usize> = splits.train.clone().collect();

    for epoch in 1..=tc.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in ids.chunks(tc.batch_size) {
            let pos = queries(store, chunk.iter().copied());
            let neg = train_negatives.sample(&pos, &mut train_rng)?;
            let batch = ScoredBatch::sample(&sampler, &pos, &neg, &mut train_rng);
            let mut grads = model.params.zero_grads();
            let mut mode = Mode::Train {
                rng: &mut drop_rng,
                dropout: cfg.model.dropout,
            };
            let loss = model.batch_loss(store, &batch.labeled(), &batch.index, &mut mode, Some(&mut grads));
            let loss = match loss {
                Ok(l) if l.is_finite() && grads.is_finite() => l,
                other => {
                    let detail = match other {
                        Err(e) => e.to_string(),
                        Ok(l) => format!("loss {l}"),
                    };
                    let (first, last) = (chunk[0], chunk[chunk.len() - 1]);
                    log.emit(&json!({
                        "kind": "abort",
                        "epoch": epoch,
                        "batch": batches,
                        "events": [first, last],
                        "pairs": pos.iter().zip(&neg).map(|(p, n)| [p.src, p.tgt, n.tgt]).collect::<Vec<_>>(),
                        "detail": detail,
                    }))?;
                    return Err(Error::NonFinite(format!(
                        "training diverged at epoch {epoch}, batch {batches} (events {first}..={last}): {detail}"
                    )));
                }
            };
            optimizer.step(&mut model.params, &grads, tc.lr, tc.weight_decay)?;
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        let val = validate(&model)?;
        let improved = val.ap > best_val.ap;
        if improved {
            best_val = val.clone();
            best_params = model.params.clone();
            best_optimizer = optimizer.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        info!("epoch {epoch}: loss {train_loss:.5} val AP {:.4}", val.ap);
        log.emit(&json!({
            "kind": "epoch",
            "epoch": epoch,
            "train_loss": train_loss,
            "val_ap": val.ap,
            "val_auc": val.auc,
            "best_epoch": best_epoch,
        }))?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_ap: val.ap,
            val_auc: val.auc,
        });
        if let Some(h) = hook.as_deref_mut() {
            h(epoch, &model)?;
        }
        if since_best >= tc.patience {
            info!("early stop after {epoch} epochs");
            break;
        }
        if tc.target_val_ap.is_some_and(|t| best_val.ap >= t) {
            break;
        }
    }

    model.params.copy_from(&best_params)?;
    let test = evaluate_test(&model, store, &sampler, &splits, cfg)?;
    if test.fallbacks > 0 {
        warn!("{} test negatives fell back to uniform sampling", test.fallbacks);
    }
    let (queries_served, leaks) = sampler.audit();
    log.emit(&json!({
        "kind": "test",
        "best_epoch": best_epoch,
        "nss": cfg.eval.nss.short_name(),
        "setting": cfg.eval.setting,
        "ap": test.ap,
        "auc": test.auc,
        "positives": test.positives,
        "fallbacks": test.fallbacks,
        "sampler_queries": queries_served,
        "sampler_leaks": leaks,
    }))?;
    let report = RunReport {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        variant: cfg.model.variant.label(),
        token_width: model.dims().width(),
        num_params: model.params.num_scalars(),
        epochs_run: history.len(),
        best_epoch,
        history,
        val: best_val,
        test,
    };
    Ok(TrainOutcome {
        model,
        optimizer: best_optimizer,
        report,
        splits,
    })
}
