//! Token layouts: per-node (SL), mixed source/target (ML) and interaction
//! level (IL).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventStore;
use crate::nn::Tensor2;
use crate::sampling::NeighborSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Sl,
    Ml,
    Il,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::Sl, Layout::Ml, Layout::Il];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sl => "SL",
            Self::Ml => "ML",
            Self::Il => "IL",
        }
    }
}

/// Column widths of each block in a token. Absent blocks have width 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenDims {
    pub d_n: usize,
    pub d_e: usize,
    /// Width of the temporal block (`d_t`, or `2·d_t` when fine and coarse are concatenated).
    pub d_t: usize,
    pub d_b: usize,
    pub d_s: usize,
    pub d_tr: usize,
}

impl TokenDims {
    pub fn raw(&self) -> usize {
        self.d_n + self.d_e
    }

    pub fn width(&self) -> usize {
        self.raw() + self.d_t + self.d_b + self.d_s + self.d_tr
    }

    /// Column offsets of the temporal, interaction and seasonal/trend blocks.
    pub fn offsets(&self) -> (usize, usize, usize) {
        let t = self.raw();
        (t, t + self.d_t, t + self.d_t + self.d_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Tensor2,
    pub validity_mask: Vec<bool>,
    pub layout: Layout,
    pub dims: TokenDims,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.cols()
    }
}

/// `𝓗`: node features of each neighbour followed by the features of the
/// interaction that produced it. Padding rows are zero.
pub fn raw_features(store: &EventStore, seq: &NeighborSequence) -> Tensor2 {
    let (d_n, d_e) = (store.d_n(), store.d_e());
    let mut h = Tensor2::zeros(seq.len(), d_n + d_e);
    for (k, e) in seq.entries.iter().enumerate() {
        let Some(v) = e.neighbor else { continue };
        let row = h.row_mut(k);
        if d_n > 0 {
            row[..d_n].copy_from_slice(store.node_features().row(v));
        }
        if let Some(eid) = e.event_id {
            row[d_n..].copy_from_slice(&store.event(eid).edge_features);
        }
    }
    h
}

fn check_rows(n: usize, parts: &[(&str, &Tensor2)], mask: &[bool]) -> Result<()> {
    if mask.len() != n {
        return Err(Error::Shape(format!("mask has {} entries for {n} rows", mask.len())));
    }
    for (name, t) in parts {
        if t.rows() != n {
            return Err(Error::Shape(format!("{name} has {} rows, expected {n}", t.rows())));
        }
    }
    Ok(())
}

/// Optional blocks appended after `𝓗`, in this order.
#[derive(Debug, Clone, Copy, Default)]
pub struct EncoderBlocks<'a> {
    pub temporal: Option<&'a Tensor2>,
    pub interaction: Option<&'a Tensor2>,
    pub seasonal_trend: Option<&'a Tensor2>,
}

fn assemble(h: &Tensor2, d_n: usize, blocks: EncoderBlocks<'_>, mask: &[bool], layout: Layout) -> Result<TokenSequence> {
    let n = h.rows();
    if d_n > h.cols() {
        return Err(Error::Shape("node feature width exceeds raw width".into()));
    }
    let mut parts = vec![("raw features", h)];
    let named = [
        ("temporal block", blocks.temporal),
        ("interaction block", blocks.interaction),
        ("seasonal/trend block", blocks.seasonal_trend),
    ];
    parts.extend(named.iter().filter_map(|(k, t)| t.map(|t| (*k, t))));
    check_rows(n, &parts, mask)?;
    let st = blocks.seasonal_trend.map_or(0, Tensor2::cols);
    let dims = TokenDims {
        d_n,
        d_e: h.cols() - d_n,
        d_t: blocks.temporal.map_or(0, Tensor2::cols),
        d_b: blocks.interaction.map_or(0, Tensor2::cols),
        d_s: st / 2,
        d_tr: st - st / 2,
    };
    let tokens = Tensor2::hcat(&parts.iter().map(|(_, t)| *t).collect::<Vec<_>>())?;
    Ok(TokenSequence {
        tokens,
        validity_mask: mask.to_vec(),
        layout,
        dims,
    })
}

/// `[𝓗_k ‖ 𝓣_k ‖ 𝓑_k ‖ 𝓩_k]` for every slot.
pub fn tokenize_il(h: &Tensor2, d_n: usize, blocks: EncoderBlocks<'_>, mask: &[bool]) -> Result<TokenSequence> {
    assemble(h, d_n, blocks, mask, Layout::Il)
}

/// `[𝓗_k ‖ 𝓣_k]`, plus any extra per-node blocks the caller supplies.
pub fn tokenize_sl(h: &Tensor2, d_n: usize, blocks: EncoderBlocks<'_>, mask: &[bool]) -> Result<TokenSequence> {
    assemble(h, d_n, blocks, mask, Layout::Sl)
}

/// Source block followed by target block.
pub fn tokenize_ml(src: &TokenSequence, tgt: &TokenSequence) -> Result<TokenSequence> {
    if src.width() != tgt.width() || src.dims != tgt.dims {
        return Err(Error::Shape(format!(
            "token widths differ: {} vs {}",
            src.width(),
            tgt.width()
        )));
    }
    let mut mask = src.validity_mask.clone();
    mask.extend_from_slice(&tgt.validity_mask);
    Ok(TokenSequence {
        tokens: Tensor2::vcat(&[&src.tokens, &tgt.tokens])?,
        validity_mask: mask,
        layout: Layout::Ml,
        dims: src.dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand(rows: usize, cols: usize, seed: u64) -> Tensor2 {
        Tensor2::uniform(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn interaction_level_width() {
        let h = Tensor2::zeros(4, 4);
        let (t, b, z) = (Tensor2::zeros(4, 100), Tensor2::zeros(4, 50), Tensor2::zeros(4, 100));
        let blocks = EncoderBlocks {
            temporal: Some(&t),
            interaction: Some(&b),
            seasonal_trend: Some(&z),
        };
        let seq = tokenize_il(&h, 0, blocks, &[true; 4]).unwrap();
        assert_eq!(seq.tokens.shape(), (4, 254));
        assert_eq!(seq.dims.width(), 254);
        assert!(seq.tokens.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slices_recover_components() {
        let (h, t, b, z) = (rand(4, 6, 1), rand(4, 8, 2), rand(4, 5, 3), rand(4, 6, 4));
        let blocks = EncoderBlocks {
            temporal: Some(&t),
            interaction: Some(&b),
            seasonal_trend: Some(&z),
        };
        let seq = tokenize_il(&h, 2, blocks, &[false, true, true, true]).unwrap();
        let (ot, ob, oz) = seq.dims.offsets();
        assert_eq!(seq.tokens.col_slice(0, 6).unwrap(), h);
        assert_eq!(seq.tokens.col_slice(ot, 8).unwrap(), t);
        assert_eq!(seq.tokens.col_slice(ob, 5).unwrap(), b);
        assert_eq!(seq.tokens.col_slice(oz, 6).unwrap(), z);
        assert_eq!(seq.dims.d_n, 2);
        assert_eq!(seq.dims.d_e, 4);
    }

    #[test]
    fn single_level_shape_and_cosine_at_zero() {
        let h = Tensor2::zeros(4, 4);
        let t = Tensor2::filled(4, 100, 1.0);
        let blocks = EncoderBlocks {
            temporal: Some(&t),
            ..Default::default()
        };
        let seq = tokenize_sl(&h, 0, blocks, &[true; 4]).unwrap();
        assert_eq!(seq.tokens.shape(), (4, 104));
        for r in 0..4 {
            assert!(seq.tokens.row(r)[..4].iter().all(|&v| v == 0.0));
            assert!(seq.tokens.row(r)[4..].iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn mixed_level_blocks() {
        let t = rand(4, 3, 9);
        let mk = |h: &Tensor2| {
            tokenize_sl(
                h,
                0,
                EncoderBlocks {
                    temporal: Some(&t),
                    ..Default::default()
                },
                &[false, true, true, true],
            )
            .unwrap()
        };
        let (hs, ht) = (rand(4, 2, 5), rand(4, 2, 6));
        let (s, g) = (mk(&hs), mk(&ht));
        let ml = tokenize_ml(&s, &g).unwrap();
        assert_eq!(ml.len(), 8);
        assert_eq!(ml.tokens.row_slice(0, 4).unwrap(), s.tokens);
        assert_eq!(ml.tokens.row_slice(4, 4).unwrap(), g.tokens);
        assert_eq!(ml.validity_mask.iter().filter(|&&v| v).count(), 6);

        let same = tokenize_ml(&s, &s).unwrap();
        assert_eq!(same.tokens.row_slice(0, 4).unwrap(), same.tokens.row_slice(4, 4).unwrap());
    }

    #[test]
    fn mismatches_are_rejected() {
        let h = Tensor2::zeros(4, 2);
        let t = Tensor2::zeros(3, 5);
        let blocks = EncoderBlocks {
            temporal: Some(&t),
            ..Default::default()
        };
        assert!(matches!(tokenize_il(&h, 0, blocks, &[true; 4]), Err(Error::Shape(_))));
        let a = tokenize_sl(&h, 0, EncoderBlocks::default(), &[true; 4]).unwrap();
        let b = tokenize_sl(&Tensor2::zeros(4, 3), 0, EncoderBlocks::default(), &[true; 4]).unwrap();
        assert!(matches!(tokenize_ml(&a, &b), Err(Error::Shape(_))));
    }
}
