//! Continuous-time dynamic graph storage: ingestion, serialisation and
//! chronological splitting.
//!
//! Event files are CSV with header `src,tgt,ts[,label],f0..f{k-1}`. A JSON
//! manifest next to the CSV carries the graph-level metadata.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::mte::Granularity;
use crate::error::{Error, Result};
use crate::nn::Tensor2;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEvent {
    pub event_id: usize,
    pub src: NodeId,
    pub tgt: NodeId,
    pub timestamp: f64,
    pub edge_features: Vec<f64>,
    pub label: Option<f64>,
}

/// Graph-level metadata stored next to the event CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetManifest {
    pub num_nodes: Option<usize>,
    pub d_n: usize,
    pub d_e: Option<usize>,
    pub bipartite: bool,
    pub granularity: Granularity,
    /// Number of calendar segments `R`.
    pub segments: u32,
    pub duration_seconds: Option<f64>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            num_nodes: None,
            d_n: 0,
            d_e: None,
            bipartite: false,
            granularity: Granularity::Weekly,
            segments: 4,
            duration_seconds: None,
        }
    }
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// `data.csv` → `data.json`
    pub fn default_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    /// Reject rows whose timestamp decreases.
    #[default]
    Strict,
    /// Stable-sort by timestamp and count the displaced rows.
    Lenient,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub order: OrderMode,
    pub manifest: Option<DatasetManifest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestReport {
    /// Rows that arrived earlier than a preceding row (lenient mode only).
    pub out_of_order_rows: usize,
}

/// Immutable, chronologically ordered event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStore {
    events: Vec<GraphEvent>,
    num_nodes: usize,
    d_n: usize,
    d_e: usize,
    node_features: Tensor2,
    bipartite: bool,
    duration_seconds: f64,
}

impl EventStore {
    /// Builds a store from events already in chronological order. Event ids are
    /// reassigned to array positions.
    pub fn new(
        mut events: Vec<GraphEvent>,
        num_nodes: usize,
        d_e: usize,
        node_features: Tensor2,
        bipartite: bool,
    ) -> Result<Self> {
        if node_features.rows() != num_nodes {
            return Err(Error::Schema(format!(
                "node feature matrix has {} rows for {num_nodes} nodes",
                node_features.rows()
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in events.iter_mut().enumerate() {
            e.event_id = i;
            if !(e.timestamp.is_finite() && e.timestamp >= 0.0) {
                return Err(Error::Validation(format!(
                    "event {i} has invalid timestamp {}",
                    e.timestamp
                )));
            }
            if e.timestamp < prev {
                return Err(Error::Validation(format!("event {i} breaks chronological order")));
            }
            prev = e.timestamp;
            if e.src >= num_nodes || e.tgt >= num_nodes {
                return Err(Error::Validation(format!(
                    "event {i} references node {} but num_nodes is {num_nodes}",
                    e.src.max(e.tgt)
                )));
            }
            if e.edge_features.len() != d_e {
                return Err(Error::Schema(format!(
                    "event {i} has {} edge features, expected {d_e}",
                    e.edge_features.len()
                )));
            }
        }
        if bipartite {
            let sources: BTreeSet<NodeId> = events.iter().map(|e| e.src).collect();
            if let Some(e) = events.iter().find(|e| sources.contains(&e.tgt)) {
                return Err(Error::Validation(format!(
                    "graph flagged bipartite but node {} is both a source and a target",
                    e.tgt
                )));
            }
        }
        let duration_seconds = match (events.first(), events.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        };
        Ok(Self {
            d_n: node_features.cols(),
            events,
            num_nodes,
            d_e,
            node_features,
            bipartite,
            duration_seconds,
        })
    }

    pub fn events(&self) -> &[GraphEvent] {
        &self.events
    }

    pub fn event(&self, id: usize) -> &GraphEvent {
        &self.events[id]
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn d_n(&self) -> usize {
        self.d_n
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn node_features(&self) -> &Tensor2 {
        &self.node_features
    }

    pub fn bipartite(&self) -> bool {
        self.bipartite
    }

    pub fn duration_seconds(&self) -> f64 {
        self.duration_seconds
    }

    pub fn has_labels(&self) -> bool {
        self.events.iter().any(|e| e.label.is_some())
    }

    /// Sorted distinct target ids.
    pub fn target_universe(&self) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self.events.iter().map(|e| e.tgt).collect();
        set.into_iter().collect()
    }

    /// Writes the events in the ingest format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let with_label = self.has_labels();
        let mut header = vec!["src".to_string(), "tgt".to_string(), "ts".to_string()];
        if with_label {
            header.push("label".into());
        }
        header.extend((0..self.d_e).map(|k| format!("f{k}")));
        w.write_record(&header)?;
        for e in &self.events {
            let mut rec = vec![e.src.to_string(), e.tgt.to_string(), e.timestamp.to_string()];
            if with_label {
                rec.push(e.label.map(|l| l.to_string()).unwrap_or_default());
            }
            rec.extend(e.edge_features.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    /// Manifest describing this store.
    pub fn manifest(&self, granularity: Granularity, segments: u32) -> DatasetManifest {
        DatasetManifest {
            num_nodes: Some(self.num_nodes),
            d_n: self.d_n,
            d_e: Some(self.d_e),
            bipartite: self.bipartite,
            granularity,
            segments,
            duration_seconds: Some(self.duration_seconds),
        }
    }
}

/// Reads an event CSV, picking up `<stem>.json` as manifest when present and
/// none is supplied.
pub fn ingest_events(path: &Path, mut options: IngestOptions) -> Result<(EventStore, IngestReport)> {
    if options.manifest.is_none() {
        let mpath = DatasetManifest::default_path(path);
        if mpath.exists() {
            options.manifest = Some(DatasetManifest::load(&mpath)?);
        }
    }
    ingest_reader(File::open(path)?, &options)
}

pub fn ingest_reader<R: Read>(reader: R, options: &IngestOptions) -> Result<(EventStore, IngestReport)> {
    let manifest = options.manifest.clone().unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        let d_e = manifest.d_e.unwrap_or(0);
        let num_nodes = manifest.num_nodes.unwrap_or(0);
        let store = EventStore::new(
            Vec::new(),
            num_nodes,
            d_e,
            Tensor2::zeros(num_nodes, manifest.d_n),
            manifest.bipartite,
        )?;
        return Ok((store, IngestReport::default()));
    }
    let layout = HeaderLayout::parse(&header)?;
    let d_e = match (manifest.d_e, layout.num_features) {
        (Some(d), 0) => d,
        (Some(d), k) if d != k => {
            return Err(Error::Schema(format!(
                "manifest declares d_e = {d} but the file has {k} feature columns"
            )))
        }
        (_, k) => k,
    };

    let mut events = Vec::new();
    let mut prev_ts = f64::NEG_INFINITY;
    let mut report = IngestReport::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Schema(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let src = parse_node(&rec[0], row, "src")?;
        let tgt = parse_node(&rec[1], row, "tgt")?;
        let ts = parse_f64(&rec[2], row, "ts")?;
        if ts < 0.0 {
            return Err(Error::Validation(format!("row {row} has negative timestamp {ts}")));
        }
        if ts < prev_ts {
            match options.order {
                OrderMode::Strict => {
                    return Err(Error::OutOfOrder {
                        row,
                        ts,
                        prev: prev_ts,
                    })
                }
                OrderMode::Lenient => report.out_of_order_rows += 1,
            }
        }
        prev_ts = prev_ts.max(ts);
        let label = match layout.label_col {
            Some(c) if !rec[c].is_empty() => Some(parse_f64(&rec[c], row, "label")?),
            _ => None,
        };
        let edge_features = if layout.num_features == 0 {
            vec![0.0; d_e]
        } else {
            (0..layout.num_features)
                .map(|k| parse_f64(&rec[layout.first_feature + k], row, "feature"))
                .collect::<Result<Vec<_>>>()?
        };
        events.push(GraphEvent {
            event_id: i,
            src,
            tgt,
            timestamp: ts,
            edge_features,
            label,
        });
    }
    // stable: equal timestamps keep line order
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let max_id = events.iter().map(|e| e.src.max(e.tgt) + 1).max().unwrap_or(0);
    let num_nodes = match manifest.num_nodes {
        Some(n) if n < max_id => {
            return Err(Error::Validation(format!(
                "manifest num_nodes = {n} but ids reach {}",
                max_id - 1
            )))
        }
        Some(n) => n,
        None => max_id,
    };
    let store = EventStore::new(
        events,
        num_nodes,
        d_e,
        Tensor2::zeros(num_nodes, manifest.d_n),
        manifest.bipartite,
    )?;
    Ok((store, report))
}

struct HeaderLayout {
    label_col: Option<usize>,
    first_feature: usize,
    num_features: usize,
}

impl HeaderLayout {
    fn parse(header: &csv::StringRecord) -> Result<Self> {
        let names: Vec<&str> = header.iter().collect();
        if names.len() < 3 || names[0] != "src" || names[1] != "tgt" || names[2] != "ts" {
            return Err(Error::Schema(format!(
                "header must start with src,tgt,ts; got {}",
                names.join(",")
            )));
        }
        let label_col = (names.get(3) == Some(&"label")).then_some(3);
        let first_feature = if label_col.is_some() { 4 } else { 3 };
        for (k, name) in names[first_feature..].iter().enumerate() {
            if *name != format!("f{k}") {
                return Err(Error::Schema(format!(
                    "expected feature column f{k}, found {name:?}"
                )));
            }
        }
        Ok(Self {
            label_col,
            first_feature,
            num_features: names.len() - first_feature,
        })
    }
}

fn parse_node(s: &str, row: usize, col: &str) -> Result<NodeId> {
    s.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("{col} {s:?} is not a node id"),
    })
}

fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("{col} {s:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            msg: format!("{col} is not finite"),
        });
    }
    Ok(v)
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.70,
            val_frac: 0.15,
            test_frac: 0.15,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self> {
        let s = Self {
            train_frac,
            val_frac,
            test_frac,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for f in [self.train_frac, self.val_frac, self.test_frac] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Split(format!("fraction {f} outside (0, 1)")));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Split(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Index-based split: train ends at ⌊N·train⌋, validation at ⌊N·(train+val)⌋.
pub fn chronological_split(store: &EventStore, spec: &SplitSpec) -> Result<SplitRanges> {
    spec.validate()?;
    let n = store.len();
    if n == 0 {
        return Err(Error::Split("cannot split an empty store".into()));
    }
    // absorbs representation error such as 0.7 * 100 = 70.00000000000001 or 69.999…
    let floor = |x: f64| (x + 1e-9).floor() as usize;
    let train_end = floor(n as f64 * spec.train_frac).min(n);
    let val_end = floor(n as f64 * (spec.train_frac + spec.val_frac)).clamp(train_end, n);
    let ranges = SplitRanges {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..n,
    };
    for (name, r) in [("train", &ranges.train), ("val", &ranges.val), ("test", &ranges.test)] {
        if r.is_empty() {
            return Err(Error::Split(format!("{name} range is empty for {n} events")));
        }
    }
    Ok(ranges)
}

/// Node ids that never occur (as source or target) in `train`.
pub fn inductive_mask(store: &EventStore, train: &Range<usize>) -> BTreeSet<NodeId> {
    let mut seen = vec![false; store.num_nodes()];
    for e in &store.events()[train.clone()] {
        seen[e.src] = true;
        seen[e.tgt] = true;
    }
    (0..store.num_nodes()).filter(|&v| !seen[v]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ingest_str(s: &str, order: OrderMode) -> Result<(EventStore, IngestReport)> {
        ingest_reader(
            s.as_bytes(),
            &IngestOptions {
                order,
                manifest: None,
            },
        )
    }

    fn toy_store(n: usize, seed: u64) -> EventStore {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut ts = 0.0;
        let events = (0..n)
            .map(|i| {
                ts += rng.random_range(0.0..3.0f64).floor();
                GraphEvent {
                    event_id: i,
                    src: rng.random_range(0..10),
                    tgt: rng.random_range(0..10),
                    timestamp: ts,
                    edge_features: vec![],
                    label: None,
                }
            })
            .collect();
        EventStore::new(events, 10, 0, Tensor2::zeros(10, 0), false).unwrap()
    }

    #[test]
    fn empty_file_gives_empty_store() {
        let (s, _) = ingest_str("", OrderMode::Strict).unwrap();
        assert_eq!(s.len(), 0);
        assert_eq!(s.num_nodes(), 0);
    }

    #[test]
    fn strict_mode_names_the_out_of_order_row() {
        let err = ingest_str("src,tgt,ts\n0,1,5\n0,2,1\n1,2,3\n", OrderMode::Strict).unwrap_err();
        match err {
            Error::OutOfOrder { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_to_string(ingest_str("src,tgt,ts\n0,1,5\n0,2,1\n", OrderMode::Strict)).contains("row 2"));
    }

    fn err_to_string(r: Result<(EventStore, IngestReport)>) -> String {
        r.unwrap_err().to_string()
    }

    #[test]
    fn lenient_mode_sorts_stably_and_counts() {
        let (s, rep) = ingest_str("src,tgt,ts\n0,1,5\n0,2,1\n1,2,3\n3,4,1\n", OrderMode::Lenient).unwrap();
        assert_eq!(rep.out_of_order_rows, 3);
        let order: Vec<(usize, usize)> = s.events().iter().map(|e| (e.src, e.tgt)).collect();
        assert_eq!(order, vec![(0, 2), (3, 4), (1, 2), (0, 1)]);
        assert!(s.events().iter().enumerate().all(|(i, e)| e.event_id == i));
    }

    #[test]
    fn ordered_rows_match_hand_built_store() {
        let csv = "src,tgt,ts,f0,f1,f2,f3\n0,3,1,0.1,0.2,0.3,0.4\n1,3,3,1,2,3,4\n2,4,5,-1,0,0,1.5\n";
        let (s, _) = ingest_str(csv, OrderMode::Strict).unwrap();
        let feats = [
            vec![0.1, 0.2, 0.3, 0.4],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![-1.0, 0.0, 0.0, 1.5],
        ];
        let rows = [(0, 3, 1.0), (1, 3, 3.0), (2, 4, 5.0)];
        let events = rows
            .iter()
            .zip(feats)
            .enumerate()
            .map(|(i, (&(src, tgt, timestamp), edge_features))| GraphEvent {
                event_id: i,
                src,
                tgt,
                timestamp,
                edge_features,
                label: None,
            })
            .collect();
        let expected = EventStore::new(events, 5, 4, Tensor2::zeros(5, 0), false).unwrap();
        assert_eq!(s, expected);
        assert_eq!(s.d_e(), 4);
        assert_eq!(s.duration_seconds(), 4.0);
    }

    #[test]
    fn row_errors() {
        assert!(matches!(
            ingest_str("src,tgt,ts\n0,1,x\n", OrderMode::Strict),
            Err(Error::Parse { row: 1, .. })
        ));
        assert!(matches!(
            ingest_str("src,tgt,ts\n0,1,1\n0,1,-2\n", OrderMode::Lenient),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            ingest_str("src,tgt,ts,f0\n0,1,1,0.5\n0,1,2\n", OrderMode::Strict),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            ingest_str("a,b,c\n", OrderMode::Strict),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn manifest_supplies_zero_features_and_node_count() {
        let opts = IngestOptions {
            order: OrderMode::Strict,
            manifest: Some(DatasetManifest {
                num_nodes: Some(8),
                d_n: 3,
                d_e: Some(2),
                bipartite: true,
                ..Default::default()
            }),
        };
        let (s, _) = ingest_reader("src,tgt,ts,label\n0,5,1,1\n1,6,2,\n".as_bytes(), &opts).unwrap();
        assert_eq!(s.num_nodes(), 8);
        assert_eq!(s.node_features().shape(), (8, 3));
        assert_eq!(s.event(0).edge_features, vec![0.0, 0.0]);
        assert_eq!(s.event(0).label, Some(1.0));
        assert_eq!(s.event(1).label, None);

        let bad = ingest_reader("src,tgt,ts\n0,1,1\n1,2,2\n".as_bytes(), &opts);
        assert!(matches!(bad, Err(Error::Validation(_))));
    }

    #[test]
    fn split_sizes() {
        let sizes = |n: usize| {
            let r = chronological_split(&toy_store(n, 1), &SplitSpec::default()).unwrap();
            (r.train.len(), r.val.len(), r.test.len())
        };
        assert_eq!(sizes(100), (70, 15, 15));
        assert_eq!(sizes(10), (7, 1, 2));
        assert!(chronological_split(&toy_store(2, 1), &SplitSpec::default()).is_err());
        assert!(SplitSpec::new(0.5, 0.5, 0.1).is_err());
    }

    #[test]
    fn equal_timestamps_split_by_index() {
        let events = (0..100)
            .map(|i| GraphEvent {
                event_id: i,
                src: 0,
                tgt: 1,
                timestamp: 7.0,
                edge_features: vec![],
                label: None,
            })
            .collect();
        let s = EventStore::new(events, 2, 0, Tensor2::zeros(2, 0), false).unwrap();
        let r = chronological_split(&s, &SplitSpec::default()).unwrap();
        assert_eq!((r.train, r.val, r.test), (0..70, 70..85, 85..100));
    }

    #[test]
    fn inductive_mask_cases() {
        let mk = |pairs: &[(usize, usize)]| {
            let events = pairs
                .iter()
                .enumerate()
                .map(|(i, &(src, tgt))| GraphEvent {
                    event_id: i,
                    src,
                    tgt,
                    timestamp: i as f64,
                    edge_features: vec![],
                    label: None,
                })
                .collect();
            EventStore::new(events, 8, 0, Tensor2::zeros(8, 0), false).unwrap()
        };
        let all = mk(&[(0, 1), (2, 3), (4, 5), (6, 7), (0, 7)]);
        assert!(inductive_mask(&all, &(0..4)).is_empty());
        let late = mk(&[(0, 1), (2, 3), (4, 5), (6, 0), (7, 1)]);
        assert!(inductive_mask(&late, &(0..4)).contains(&7));

        // brute-force set difference on a random store
        let s = toy_store(50, 9);
        let train = 0..35;
        let all_ids: BTreeSet<usize> = (0..s.num_nodes()).collect();
        let train_ids: BTreeSet<usize> = s.events()[train.clone()]
            .iter()
            .flat_map(|e| [e.src, e.tgt])
            .collect();
        let expected: BTreeSet<usize> = all_ids.difference(&train_ids).copied().collect();
        assert_eq!(inductive_mask(&s, &train), expected);
    }

    proptest! {
        #[test]
        fn splits_partition_the_index_range(n in 3usize..500) {
            let r = chronological_split(&toy_store(n, n as u64), &SplitSpec::default());
            if let Ok(r) = r {
                prop_assert_eq!(r.train.start, 0);
                prop_assert_eq!(r.train.end, r.val.start);
                prop_assert_eq!(r.val.end, r.test.start);
                prop_assert_eq!(r.test.end, n);
            } else {
                // only tiny stores can leave the validation range empty
                prop_assert!(n < 7);
            }
        }

        #[test]
        fn split_is_monotone_in_time(n in 10usize..300, seed in 0u64..1000) {
            let s = toy_store(n, seed);
            let r = chronological_split(&s, &SplitSpec::default()).unwrap();
            let max_train = s.events()[r.train.clone()].iter().map(|e| e.timestamp).fold(0.0, f64::max);
            for e in &s.events()[r.train.end..] {
                prop_assert!(e.timestamp >= max_train);
            }
        }

        #[test]
        fn csv_round_trip(n in 0usize..40, seed in 0u64..1000, d_e in 0usize..3) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut ts = 0.0;
            let events = (0..n).map(|i| {
                ts += rng.random_range(0.0..1e6f64);
                GraphEvent {
                    event_id: i,
                    src: rng.random_range(0..6),
                    tgt: rng.random_range(0..6),
                    timestamp: ts,
                    edge_features: (0..d_e).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    label: if seed % 2 == 0 { Some(rng.random_range(0..2) as f64) } else { None },
                }
            }).collect();
            let store = EventStore::new(events, 6, d_e, Tensor2::zeros(6, 0), false).unwrap();
            let mut buf = Vec::new();
            store.write_csv(&mut buf).unwrap();
            let manifest = store.manifest(Granularity::Weekly, 4);
            let (back, _) = ingest_reader(buf.as_slice(), &IngestOptions { order: OrderMode::Strict, manifest: Some(manifest) }).unwrap();
            prop_assert_eq!(back, store);
        }
    }
}
