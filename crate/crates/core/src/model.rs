//! The link-prediction model: tokenization, input projection, transformer
//! stack, mean readout and prediction heads, with the backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::encoders::bie::InteractionCache;
use crate::encoders::ste::SteCache;
use crate::encoders::{bie_counts, bie_reconstruct, InteractionEncoder, SteEncoder, TemporalEncoder};
use crate::error::{Error, Result};
use crate::events::EventStore;
use crate::nn::{
    bce_with_logit, readout, readout_backward, relu, relu_backward, sigmoid, GradStore, LayerCache, Linear, Mode,
    ParamStore, Tensor2, TransformerLayer,
};
use crate::sampling::{BatchNeighborIndex, NeighborSequence};
use crate::tokens::{raw_features, tokenize_il, tokenize_ml, tokenize_sl, EncoderBlocks, Layout, TokenDims, TokenSequence};

/// Graph-level constants the model needs at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphShape {
    pub num_nodes: usize,
    pub d_n: usize,
    pub d_e: usize,
}

impl GraphShape {
    pub fn of(store: &EventStore) -> Self {
        Self {
            num_nodes: store.num_nodes(),
            d_n: store.d_n(),
            d_e: store.d_e(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TidFormer {
    pub cfg: ModelConfig,
    pub graph: GraphShape,
    pub params: ParamStore,
    mte: Option<TemporalEncoder>,
    bie: Option<InteractionEncoder>,
    ste: Option<SteEncoder>,
    proj: Linear,
    pub layers: Vec<TransformerLayer>,
    head_hidden: Linear,
    head_out: Linear,
    node_head: Linear,
    dims: TokenDims,
}

/// Per-window encoder state kept for the backward pass.
#[derive(Debug, Clone)]
struct SideCache {
    bie: Option<InteractionCache>,
    ste: Option<SteCache>,
}

#[derive(Debug, Clone)]
pub struct StackCache {
    tokens: Tensor2,
    pub mask: Vec<bool>,
    pub layers: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
enum Encoded {
    Separate { src: StackCache, tgt: StackCache },
    Mixed { stack: StackCache, n: usize },
}

#[derive(Debug, Clone)]
pub struct PairCache {
    sides: [SideCache; 2],
    encoded: Encoded,
    z: Tensor2,
    head_pre: Tensor2,
    head_act: Tensor2,
    pub logit: f64,
}

impl PairCache {
    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }

    /// Head-averaged attention of `layer` for the source and target windows,
    /// each restricted to its own window (rows and columns `0..n`).
    pub fn attention(&self, layer: usize) -> [Tensor2; 2] {
        match &self.encoded {
            Encoded::Separate { src, tgt } => [
                src.layers[layer].attention.mean_weights(),
                tgt.layers[layer].attention.mean_weights(),
            ],
            Encoded::Mixed { stack, n } => {
                let w = stack.layers[layer].attention.mean_weights();
                let block = |off: usize| {
                    let rows = w.row_slice(off, *n).expect("in range");
                    rows.col_slice(off, *n).expect("in range")
                };
                [block(0), block(*n)]
            }
        }
    }

    pub fn src_embedding(&self) -> Tensor2 {
        let h = self.z.cols() / 2;
        self.z.col_slice(0, h).expect("in range")
    }
}

/// One scored pair: the two windows and the 0/1 label.
#[derive(Debug, Clone)]
pub struct LabeledPair<'a> {
    pub src: &'a NeighborSequence,
    pub tgt: &'a NeighborSequence,
    pub label: f64,
}

impl TidFormer {
    pub fn new(cfg: ModelConfig, graph: GraphShape, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let v = cfg.variant;
        let mte = v.mte.then(|| TemporalEncoder::new(cfg.mte.clone()));
        let d_t = match (v.mte, v.fine_only) {
            (false, _) => 0,
            (true, true) => cfg.mte.d_t,
            (true, false) => cfg.mte.width(),
        };
        let bie = v
            .uses_bie()
            .then(|| InteractionEncoder::new(&mut params, cfg.d_b, cfg.d_b, &mut rng));
        let ste = v
            .ste
            .then(|| SteEncoder::new(&mut params, cfg.d_s, cfg.d_tr, cfg.ste_window, &mut rng));
        let dims = TokenDims {
            d_n: graph.d_n,
            d_e: graph.d_e,
            d_t,
            d_b: if bie.is_some() { cfg.d_b } else { 0 },
            d_s: if ste.is_some() { cfg.d_s } else { 0 },
            d_tr: if ste.is_some() { cfg.d_tr } else { 0 },
        };
        if dims.width() == 0 {
            return Err(Error::Config("token width is zero: enable an encoder or supply features".into()));
        }
        let h = cfg.hidden;
        let proj = Linear::new(&mut params, "input_proj", dims.width(), h, true, &mut rng);
        let layers = (0..cfg.layers)
            .map(|l| TransformerLayer::new(&mut params, &format!("layer{l}"), h, cfg.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let head_hidden = Linear::new(&mut params, "link_head.hidden", 2 * h, h, true, &mut rng);
        let head_out = Linear::new(&mut params, "link_head.out", h, 1, true, &mut rng);
        let node_head = Linear::new(&mut params, "node_head", h, 1, true, &mut rng);
        Ok(Self {
            cfg,
            graph,
            params,
            mte,
            bie,
            ste,
            proj,
            layers,
            head_hidden,
            head_out,
            node_head,
            dims,
        })
    }

    /// Per-token column widths; `dims().width()` is the token width D.
    pub fn dims(&self) -> TokenDims {
        self.dims
    }

    pub fn layout(&self) -> Layout {
        self.cfg.variant.layout
    }

    /// Largest interval the temporal encoder may see, checked against the
    /// decay condition.
    pub fn validate_for(&self, max_delta_t: f64) -> Result<()> {
        match &self.mte {
            Some(m) => m.config().validate(max_delta_t),
            None => Ok(()),
        }
    }

    fn temporal(&self, seq: &NeighborSequence) -> Result<Option<Tensor2>> {
        let Some(mte) = &self.mte else { return Ok(None) };
        Ok(Some(if self.cfg.variant.fine_only {
            mte.encode_sequence_fine(seq)?
        } else {
            mte.encode_sequence(seq)?
        }))
    }

    fn tokenize_side(
        &self,
        store: &EventStore,
        seq: &NeighborSequence,
        interaction: Option<(Tensor2, InteractionCache)>,
    ) -> Result<(TokenSequence, SideCache)> {
        let h = raw_features(store, seq);
        let t = self.temporal(seq)?;
        let z = match &self.ste {
            Some(ste) => Some(ste.forward(&self.params, seq, self.graph.num_nodes)?),
            None => None,
        };
        let blocks = EncoderBlocks {
            temporal: t.as_ref(),
            interaction: interaction.as_ref().map(|(b, _)| b),
            seasonal_trend: z.as_ref().map(|(z, _)| z),
        };
        let mask = seq.valid_mask();
        let tokens = match self.layout() {
            Layout::Il => tokenize_il(&h, self.graph.d_n, blocks, &mask)?,
            Layout::Sl | Layout::Ml => tokenize_sl(&h, self.graph.d_n, blocks, &mask)?,
        };
        debug_assert_eq!(tokens.width(), self.dims.width());
        Ok((
            tokens,
            SideCache {
                bie: interaction.map(|(_, c)| c),
                ste: z.map(|(_, c)| c),
            },
        ))
    }

    /// Token sequences for both windows of a pair (before projection).
    pub fn tokenize_pair(
        &self,
        store: &EventStore,
        src: &NeighborSequence,
        tgt: &NeighborSequence,
        index: &BatchNeighborIndex,
    ) -> Result<[TokenSequence; 2]> {
        let ([a, b], _) = self.tokenize_pair_cached(store, src, tgt, index)?;
        Ok([a, b])
    }

    fn tokenize_pair_cached(
        &self,
        store: &EventStore,
        src: &NeighborSequence,
        tgt: &NeighborSequence,
        index: &BatchNeighborIndex,
    ) -> Result<([TokenSequence; 2], [SideCache; 2])> {
        let (bs, bt) = match &self.bie {
            Some(enc) => {
                let (s_new, t_new) = bie_reconstruct(src, tgt, index);
                let (i_src, i_tgt) = bie_counts(&s_new, &t_new);
                (
                    Some(enc.forward(&self.params, &i_src)?),
                    Some(enc.forward(&self.params, &i_tgt)?),
                )
            }
            None => (None, None),
        };
        let (ts, cs) = self.tokenize_side(store, src, bs)?;
        let (tt, ct) = self.tokenize_side(store, tgt, bt)?;
        Ok(([ts, tt], [cs, ct]))
    }

    fn run_stack(&self, tokens: &Tensor2, mask: Vec<bool>, mode: &mut Mode<'_>) -> Result<(Tensor2, StackCache)> {
        let mut x = self.proj.forward(&self.params, tokens)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&self.params, &x, &mask, mode)?;
            caches.push(c);
            x = y;
        }
        Ok((
            x,
            StackCache {
                tokens: tokens.clone(),
                mask,
                layers: caches,
            },
        ))
    }

    fn stack_backward(&self, cache: &StackCache, dy: &Tensor2, g: &mut GradStore) -> Result<Tensor2> {
        let mut dx = dy.clone();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            dx = layer.backward(&self.params, c, &dx, g)?;
        }
        self.proj.backward(&self.params, &cache.tokens, &dx, g)
    }

    /// Scores `(src, tgt)`; returns the cache holding the logit.
    pub fn forward_pair(
        &self,
        store: &EventStore,
        src: &NeighborSequence,
        tgt: &NeighborSequence,
        index: &BatchNeighborIndex,
        mode: &mut Mode<'_>,
    ) -> Result<PairCache> {
        let ([ts, tt], sides) = self.tokenize_pair_cached(store, src, tgt, index)?;
        let (emb_s, emb_t, encoded) = match self.layout() {
            Layout::Sl | Layout::Il => {
                let (ys, cs) = self.run_stack(&ts.tokens, ts.validity_mask, mode)?;
                let (yt, ct) = self.run_stack(&tt.tokens, tt.validity_mask, mode)?;
                (
                    readout(&ys, &cs.mask)?,
                    readout(&yt, &ct.mask)?,
                    Encoded::Separate { src: cs, tgt: ct },
                )
            }
            Layout::Ml => {
                let n = ts.len();
                let mixed = tokenize_ml(&ts, &tt)?;
                let (y, c) = self.run_stack(&mixed.tokens, mixed.validity_mask, mode)?;
                let (ms, mt) = half_masks(&c.mask, n);
                (readout(&y, &ms)?, readout(&y, &mt)?, Encoded::Mixed { stack: c, n })
            }
        };
        let z = Tensor2::hcat(&[&emb_s, &emb_t])?;
        let head_pre = self.head_hidden.forward(&self.params, &z)?;
        let head_act = relu(&head_pre);
        let logit = self.head_out.forward(&self.params, &head_act)?[(0, 0)];
        if !logit.is_finite() {
            return Err(Error::NonFinite(format!("logit for pair ({}, {})", src.anchor, tgt.anchor)));
        }
        Ok(PairCache {
            sides,
            encoded,
            z,
            head_pre,
            head_act,
            logit,
        })
    }

    /// Backward from `dL/dlogit` of the link head.
    pub fn backward_pair(&self, cache: &PairCache, dlogit: f64, g: &mut GradStore) -> Result<()> {
        let dout = Tensor2::filled(1, 1, dlogit);
        let dact = self.head_out.backward(&self.params, &cache.head_act, &dout, g)?;
        let dpre = relu_backward(&cache.head_pre, &dact);
        let dz = self.head_hidden.backward(&self.params, &cache.z, &dpre, g)?;
        let h = self.cfg.hidden;
        self.backward_embeddings(cache, &dz.col_slice(0, h)?, &dz.col_slice(h, h)?, g)
    }

    fn backward_embeddings(&self, cache: &PairCache, demb_s: &Tensor2, demb_t: &Tensor2, g: &mut GradStore) -> Result<()> {
        let (dtok_s, dtok_t) = match &cache.encoded {
            Encoded::Separate { src, tgt } => (
                self.stack_backward(src, &readout_backward(demb_s, &src.mask), g)?,
                self.stack_backward(tgt, &readout_backward(demb_t, &tgt.mask), g)?,
            ),
            Encoded::Mixed { stack, n } => {
                let (ms, mt) = half_masks(&stack.mask, *n);
                let mut dy = readout_backward(demb_s, &ms);
                dy.add_assign(&readout_backward(demb_t, &mt))?;
                let dtok = self.stack_backward(stack, &dy, g)?;
                (dtok.row_slice(0, *n)?, dtok.row_slice(*n, *n)?)
            }
        };
        self.encoder_backward(&cache.sides[0], &dtok_s, g)?;
        self.encoder_backward(&cache.sides[1], &dtok_t, g)
    }

    fn encoder_backward(&self, side: &SideCache, dtokens: &Tensor2, g: &mut GradStore) -> Result<()> {
        let (_, ob, oz) = self.dims.offsets();
        if let (Some(enc), Some(c)) = (&self.bie, &side.bie) {
            enc.backward(&self.params, c, &dtokens.col_slice(ob, self.dims.d_b)?, g)?;
        }
        if let (Some(enc), Some(c)) = (&self.ste, &side.ste) {
            enc.backward(c, &dtokens.col_slice(oz, self.dims.d_s + self.dims.d_tr)?, g)?;
        }
        Ok(())
    }

    /// Logit of the node-classification head on the source embedding.
    pub fn node_logit(&self, cache: &PairCache) -> Result<f64> {
        Ok(self.node_head.forward(&self.params, &cache.src_embedding())?[(0, 0)])
    }

    pub fn backward_node(&self, cache: &PairCache, dlogit: f64, g: &mut GradStore) -> Result<()> {
        let demb = self
            .node_head
            .backward(&self.params, &cache.src_embedding(), &Tensor2::filled(1, 1, dlogit), g)?;
        let zero = Tensor2::zeros(1, self.cfg.hidden);
        self.backward_embeddings(cache, &demb, &zero, g)
    }

    /// Mean BCE over `pairs`; gradients of the mean are added to `grads` when given.
    pub fn batch_loss(
        &self,
        store: &EventStore,
        pairs: &[LabeledPair<'_>],
        index: &BatchNeighborIndex,
        mode: &mut Mode<'_>,
        mut grads: Option<&mut GradStore>,
    ) -> Result<f64> {
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let scale = 1.0 / pairs.len() as f64;
        let mut total = 0.0;
        for pair in pairs {
            let cache = self.forward_pair(store, pair.src, pair.tgt, index, mode)?;
            let (loss, dlogit) = bce_with_logit(cache.logit, pair.label);
            total += loss;
            if let Some(g) = grads.as_deref_mut() {
                self.backward_pair(&cache, dlogit * scale, g)?;
            }
        }
        Ok(total * scale)
    }

    /// Probabilities of each pair, no gradients, dropout off.
    pub fn score(
        &self,
        store: &EventStore,
        pairs: &[(&NeighborSequence, &NeighborSequence)],
        index: &BatchNeighborIndex,
    ) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|(s, t)| Ok(self.forward_pair(store, s, t, index, &mut Mode::Eval)?.probability()))
            .collect()
    }
}

fn half_masks(mask: &[bool], n: usize) -> (Vec<bool>, Vec<bool>) {
    let mut s = mask.to_vec();
    let mut t = mask.to_vec();
    s[n..].iter_mut().for_each(|v| *v = false);
    t[..n].iter_mut().for_each(|v| *v = false);
    (s, t)
}
