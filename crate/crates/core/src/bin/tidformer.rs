//! Command-line front end: train, evaluate, ablate, trace, gradient-check and
//! generate synthetic corpora.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use serde_json::json;

use tidformer::config::{RunConfig, Setting};
use tidformer::encoders::Granularity;
use tidformer::events::{chronological_split, ingest_events, DatasetManifest, EventStore, IngestOptions, OrderMode};
use tidformer::harness::ablate::write_rows_csv;
use tidformer::harness::gradcheck::{check_full_model, GradCheckSetup};
use tidformer::harness::trace::write_trace_csv;
use tidformer::harness::{ablate, build_model, evaluate_test, full_grid, train, EpochRecord, EvalResult, RunLog, Tracer};
use tidformer::model::TidFormer;
use tidformer::nn::Checkpoint;
use tidformer::sampling::{NegativeKind, NeighborSampler};
use tidformer::synth::{hot_node_corpus, periodic_bipartite, HotNodeSpec, PeriodicSpec};
use tidformer::{Error, Result};

#[derive(Parser)]
#[command(name = "tidformer", version, about = "Interaction-level transformer for temporal link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with early stopping and evaluate on the test split.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_nss)]
        nss: Option<NegativeKind>,
        #[arg(long, value_parser = parse_setting)]
        setting: Option<Setting>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every layout × encoder variant and tabulate the results.
    Ablate(RunArgs),
    /// Train while recording attention mass on frequently interacting nodes.
    Trace(RunArgs),
    /// Finite-difference check of the full model's analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        probes: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Write a synthetic event CSV and its manifest.
    GenSynth {
        #[arg(long, value_enum, default_value_t = SynthKind::Periodic)]
        kind: SynthKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Event count for the periodic corpus.
        #[arg(long)]
        events: Option<usize>,
        /// Output CSV; the manifest is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Periodic,
    HotNode,
}

#[derive(Args)]
struct DataArgs {
    /// Event CSV: src, tgt, timestamp, optional label, edge features.
    #[arg(long)]
    data: PathBuf,
    /// Manifest JSON; defaults to the CSV path with a .json extension.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Sort out-of-order rows instead of rejecting them.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_nss)]
    nss: Option<NegativeKind>,
    #[arg(long, value_parser = parse_setting)]
    setting: Option<Setting>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

fn parse_nss(s: &str) -> std::result::Result<NegativeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_setting(s: &str) -> std::result::Result<Setting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_store(args: &DataArgs) -> Result<EventStore> {
    let manifest = args.manifest.as_deref().map(DatasetManifest::load).transpose()?;
    let order = if args.lenient { OrderMode::Lenient } else { OrderMode::Strict };
    let (store, report) = ingest_events(&args.data, IngestOptions { order, manifest })?;
    if report.out_of_order_rows > 0 {
        log::warn!("{} rows were out of order and have been sorted", report.out_of_order_rows);
    }
    info!("loaded {} events over {} nodes", store.len(), store.num_nodes());
    Ok(store)
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(nss) = args.nss {
        cfg.eval.nss = nss;
    }
    if let Some(setting) = args.setting {
        cfg.eval.setting = setting;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MetricRow {
    split: &'static str,
    nss: &'static str,
    setting: Setting,
    ap: f64,
    auc: f64,
    positives: usize,
    fallbacks: u64,
}

impl MetricRow {
    fn new(split: &'static str, cfg: &RunConfig, r: &EvalResult) -> Self {
        Self {
            split,
            nss: cfg.eval.nss.short_name(),
            setting: cfg.eval.setting,
            ap: r.ap,
            auc: r.auc,
            positives: r.positives,
            fallbacks: r.fallbacks,
        }
    }
}

fn run_train(args: &RunArgs) -> Result<()> {
    let store = load_store(&args.data)?;
    let cfg = load_config(args)?;
    let mut log_file = create(&args.out, "run.jsonl")?;
    let out = train(&store, &cfg, &mut RunLog::new(&mut log_file), None)?;
    log_file.flush()?;
    write_csv::<EpochRecord>(&out.report.history, create(&args.out, "epochs.csv")?)?;
    let mut val_cfg = cfg.clone();
    val_cfg.eval.nss = NegativeKind::Random;
    write_csv(
        &[
            MetricRow::new("val", &val_cfg, &out.report.val),
            MetricRow::new("test", &cfg, &out.report.test),
        ],
        create(&args.out, "metrics.csv")?,
    )?;
    out.checkpoint(&cfg)?.save(&args.out.join("checkpoint.json"))?;
    println!(
        "{}",
        json!({"variant": out.report.variant, "best_epoch": out.report.best_epoch, "test_ap": out.report.test.ap, "test_auc": out.report.test.auc})
    );
    Ok(())
}

fn run_eval(data: &DataArgs, checkpoint: &Path, nss: Option<NegativeKind>, setting: Option<Setting>, out: Option<&Path>) -> Result<()> {
    let store = load_store(data)?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg: RunConfig = serde_json::from_value(ck.config.clone())?;
    cfg.validate()?;
    if cfg.hash() != ck.config_hash {
        return Err(Error::Checkpoint("stored configuration does not match its hash".into()));
    }
    let mut model: TidFormer = build_model(&store, &cfg)?;
    ck.restore_into(&mut model.params)?;
    if let Some(nss) = nss {
        cfg.eval.nss = nss;
    }
    if let Some(setting) = setting {
        cfg.eval.setting = setting;
    }
    let splits = chronological_split(&store, &cfg.split.spec()?)?;
    let sampler = NeighborSampler::new(&store, cfg.model.neighbors, cfg.model.sampling)?;
    let result = evaluate_test(&model, &store, &sampler, &splits, &cfg)?;
    let row = MetricRow::new("test", &cfg, &result);
    if let Some(dir) = out {
        write_csv(&[&row], create(dir, "metrics.csv")?)?;
    }
    println!("{}", serde_json::to_string(&row)?);
    Ok(())
}

fn run_ablate(args: &RunArgs) -> Result<()> {
    let store = load_store(&args.data)?;
    let cfg = load_config(args)?;
    let mut log_file = create(&args.out, "run.jsonl")?;
    let rows = ablate(&store, &cfg, &full_grid(), &mut RunLog::new(&mut log_file))?;
    log_file.flush()?;
    write_rows_csv(&rows, create(&args.out, "ablation.csv")?)?;
    for r in &rows {
        println!("{:<12} width {:>4}  test AP {:.4}  AUC {:.4}", r.variant, r.token_width, r.test_ap, r.test_auc);
    }
    Ok(())
}

fn run_trace(args: &RunArgs) -> Result<()> {
    let store = load_store(&args.data)?;
    let cfg = load_config(args)?;
    let splits = chronological_split(&store, &cfg.split.spec()?)?;
    let sampler = NeighborSampler::new(&store, cfg.model.neighbors, cfg.model.sampling)?;
    let tc = &cfg.trace;
    let mut tracer = Tracer::new(&store, tc.threshold, tc.layer, splits.val.clone(), cfg.train.batch_size, cfg.seed)?;
    info!("tracing {} key nodes", tracer.key_nodes().len());
    // without explicit epochs, trace before training and after every epoch
    let wanted = |e: usize| tc.epochs.is_empty() || tc.epochs.contains(&e);
    let mut hook = |epoch: usize, model: &TidFormer| {
        if wanted(epoch) {
            tracer.trace(epoch, model, &store, &sampler)?;
        }
        Ok(())
    };
    let mut log_file = create(&args.out, "run.jsonl")?;
    train(&store, &cfg, &mut RunLog::new(&mut log_file), Some(&mut hook))?;
    log_file.flush()?;
    write_trace_csv(&tracer.records, create(&args.out, "trace.csv")?)?;
    println!("{} trace records", tracer.records.len());
    Ok(())
}

fn run_gradcheck(seed: u64, probes: usize, tolerance: f64) -> Result<()> {
    let setup = GradCheckSetup {
        seed,
        probes,
        ..GradCheckSetup::default()
    };
    let report = check_full_model(&setup)?;
    println!(
        "{}",
        json!({"checked": report.checked, "max_relative_error": report.max_relative_error, "worst": report.worst})
    );
    if report.max_relative_error >= tolerance {
        return Err(Error::Validation(format!(
            "max relative error {:e} is not below {tolerance:e}",
            report.max_relative_error
        )));
    }
    Ok(())
}

fn run_gen_synth(kind: SynthKind, seed: u64, events: Option<usize>, out: &Path) -> Result<()> {
    let store = match kind {
        SynthKind::Periodic => {
            let mut spec = PeriodicSpec {
                seed,
                ..PeriodicSpec::default()
            };
            if let Some(n) = events {
                spec.events = n;
            }
            periodic_bipartite(&spec)?
        }
        SynthKind::HotNode => hot_node_corpus(&HotNodeSpec {
            seed,
            ..HotNodeSpec::default()
        })?,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    store.save_csv(out)?;
    store
        .manifest(Granularity::Weekly, 4)
        .save(&DatasetManifest::default_path(out))?;
    println!("wrote {} events over {} nodes to {}", store.len(), store.num_nodes(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval {
            data,
            checkpoint,
            nss,
            setting,
            out,
        } => run_eval(data, checkpoint, *nss, *setting, out.as_deref()),
        Command::Ablate(a) => run_ablate(a),
        Command::Trace(a) => run_trace(a),
        Command::Gradcheck { seed, probes, tolerance } => run_gradcheck(*seed, *probes, *tolerance),
        Command::GenSynth { kind, seed, events, out } => run_gen_synth(*kind, *seed, *events, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
