//! WebAssembly bindings for the encoder demo page.
//!
//! Each exported function takes plain text input and returns a JSON string.
//! The functions they wrap are plain Rust and are tested natively.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tidformer::encoders::{bie_counts, bie_reconstruct, build_ste_signal, ste_decompose, MteConfig, TemporalEncoder};
use tidformer::events::NodeId;
use tidformer::sampling::{BatchNeighborIndex, NeighborSequence};

/// Parses `"3 7 - 12"` (commas also accepted); `-` or `_` is padding.
pub fn parse_window(text: &str) -> Result<Vec<Option<NodeId>>, String> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| match t {
            "-" | "_" => Ok(None),
            _ => t.parse().map(Some).map_err(|_| format!("not a node id: {t:?}")),
        })
        .collect()
}

/// Parses `"1: 11 13; 5: 2 4"` into a neighbour dictionary.
pub fn parse_dictionary(text: &str) -> Result<HashMap<NodeId, Arc<NeighborSequence>>, String> {
    let mut out = HashMap::new();
    for entry in text.split(';').map(str::trim).filter(|e| !e.is_empty()) {
        let (key, ids) = entry
            .split_once(':')
            .ok_or_else(|| format!("dictionary entry {entry:?} has no ':'"))?;
        let key: NodeId = key.trim().parse().map_err(|_| format!("not a node id: {key:?}"))?;
        out.insert(key, Arc::new(NeighborSequence::from_ids(key, 0.0, &parse_window(ids)?)));
    }
    Ok(out)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct TemporalCurve {
    pub hours: Vec<f64>,
    /// Component index and its values along `hours`.
    pub components: Vec<(usize, Vec<f64>)>,
    pub buckets: Vec<u64>,
}

/// Fine encoding of five spread-out components and the weekly bucket over
/// `0..=max_hours`.
pub fn temporal_curve(d_t: usize, alpha: f64, beta: f64, max_hours: f64, points: usize) -> Result<TemporalCurve, String> {
    if d_t == 0 || points < 2 || max_hours.is_nan() || max_hours <= 0.0 {
        return Err("need d_t ≥ 1, at least two points and a positive range".into());
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err("alpha and beta must be positive".into());
    }
    let enc = TemporalEncoder::new(MteConfig {
        d_t,
        alpha: Some(alpha),
        beta: Some(beta),
        ..MteConfig::default()
    });
    let hours: Vec<f64> = (0..points).map(|i| max_hours * i as f64 / (points - 1) as f64).collect();
    let mut picks: Vec<usize> = (0..5).map(|k| k * (d_t - 1) / 4).collect();
    picks.dedup();
    let rows = hours
        .iter()
        .map(|h| enc.encode_fine(h * 3600.0).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let components = picks.iter().map(|&j| (j, rows.iter().map(|r| r[j]).collect())).collect();
    let buckets = hours
        .iter()
        .map(|h| enc.coarse_bucket(h * 3600.0).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    Ok(TemporalCurve {
        hours,
        components,
        buckets,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Decomposition {
    pub signal: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub trend: Vec<f64>,
    pub exact: bool,
}

pub fn decompose(ids: &str, num_nodes: usize, window: usize) -> Result<Decomposition, String> {
    let ids = parse_window(ids)?;
    if ids.is_empty() {
        return Err("the window is empty".into());
    }
    if let Some(v) = ids.iter().flatten().find(|&&v| v >= num_nodes) {
        return Err(format!("node {v} is outside 0..{num_nodes}"));
    }
    let signal = build_ste_signal(&NeighborSequence::from_ids(0, 0.0, &ids), num_nodes);
    let parts = ste_decompose(&signal, window).map_err(|e| e.to_string())?;
    let col = |t: &tidformer::nn::Tensor2| (0..t.rows()).map(|r| t[(r, 0)]).collect::<Vec<f64>>();
    let (signal, seasonal, trend) = (col(&signal), col(&parts.seasonal), col(&parts.trend));
    let exact = signal
        .iter()
        .zip(seasonal.iter().zip(&trend))
        .all(|(q, (s, t))| (s + t).to_bits() == q.to_bits());
    Ok(Decomposition {
        signal,
        seasonal,
        trend,
        exact,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Interaction {
    pub src_new: Vec<NodeId>,
    pub tgt_new: Vec<NodeId>,
    pub src_counts: Vec<[u32; 2]>,
    pub tgt_counts: Vec<[u32; 2]>,
}

pub fn interaction(
    src: NodeId,
    src_window: &str,
    tgt: NodeId,
    tgt_window: &str,
    src_dictionary: &str,
    tgt_dictionary: &str,
) -> Result<Interaction, String> {
    let q_src = NeighborSequence::from_ids(src, 0.0, &parse_window(src_window)?);
    let q_tgt = NeighborSequence::from_ids(tgt, 0.0, &parse_window(tgt_window)?);
    let index = BatchNeighborIndex::from_maps(parse_dictionary(src_dictionary)?, parse_dictionary(tgt_dictionary)?);
    let (s_new, t_new) = bie_reconstruct(&q_src, &q_tgt, &index);
    let (i_src, i_tgt) = bie_counts(&s_new, &t_new);
    Ok(Interaction {
        src_new: s_new.materialize(),
        tgt_new: t_new.materialize(),
        src_counts: i_src.0,
        tgt_counts: i_tgt.0,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = temporalCurve)]
pub fn temporal_curve_json(d_t: usize, alpha: f64, beta: f64, max_hours: f64, points: usize) -> Result<String, JsError> {
    to_json(temporal_curve(d_t, alpha, beta, max_hours, points))
}

#[wasm_bindgen(js_name = decompose)]
pub fn decompose_json(ids: &str, num_nodes: usize, window: usize) -> Result<String, JsError> {
    to_json(decompose(ids, num_nodes, window))
}

#[wasm_bindgen(js_name = interaction)]
pub fn interaction_json(
    src: usize,
    src_window: &str,
    tgt: usize,
    tgt_window: &str,
    src_dictionary: &str,
    tgt_dictionary: &str,
) -> Result<String, JsError> {
    to_json(interaction(src, src_window, tgt, tgt_window, src_dictionary, tgt_dictionary))
}
