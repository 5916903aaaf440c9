//! Post-norm transformer encoder layer and masked mean readout.

use rand_chacha::ChaCha8Rng;

use super::attention::{AttentionCache, MultiHeadAttention};
use super::layers::{FeedForward, FeedForwardCache, LayerNorm, LayerNormCache, Mode};
use super::params::{GradStore, ParamStore};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// `x' = LN(x + MSA(x))`, `out = LN(x' + FFN(x'))`.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub attention: MultiHeadAttention,
    pub norm_attn: LayerNorm,
    pub ffn: FeedForward,
    pub norm_ffn: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub attention: AttentionCache,
    norm_attn: LayerNormCache,
    ffn: FeedForwardCache,
    norm_ffn: LayerNormCache,
}

impl TransformerLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        num_heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, num_heads, rng)?,
            norm_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, rng),
            norm_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), dim),
        })
    }

    pub fn forward(
        &self,
        p: &ParamStore,
        x: &Tensor2,
        mask: &[bool],
        mode: &mut Mode<'_>,
    ) -> Result<(Tensor2, LayerCache)> {
        let (attn, attention) = self.attention.forward(p, x, mask, mode)?;
        let (mid, norm_attn) = self.norm_attn.forward(p, &x.add(&attn)?);
        let (ff, ffn) = self.ffn.forward(p, &mid, mode)?;
        let (out, norm_ffn) = self.norm_ffn.forward(p, &mid.add(&ff)?);
        Ok((
            out,
            LayerCache {
                attention,
                norm_attn,
                ffn,
                norm_ffn,
            },
        ))
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        cache: &LayerCache,
        dy: &Tensor2,
        g: &mut GradStore,
    ) -> Result<Tensor2> {
        let dsum2 = self.norm_ffn.backward(p, &cache.norm_ffn, dy, g)?;
        let mut dmid = self.ffn.backward(p, &cache.ffn, &dsum2, g)?;
        dmid.add_assign(&dsum2)?;
        let dsum1 = self.norm_attn.backward(p, &cache.norm_attn, &dmid, g)?;
        let mut dx = self.attention.backward(p, &cache.attention, &dsum1, g)?;
        dx.add_assign(&dsum1)?;
        Ok(dx)
    }
}

/// Mean over the rows flagged valid; zero vector when none are.
pub fn readout(tokens: &Tensor2, mask: &[bool]) -> Result<Tensor2> {
    if mask.len() != tokens.rows() {
        return Err(Error::Shape(format!(
            "readout mask {} for {} rows",
            mask.len(),
            tokens.rows()
        )));
    }
    let valid = mask.iter().filter(|&&m| m).count();
    let mut out = Tensor2::zeros(1, tokens.cols());
    if valid == 0 {
        return Ok(out);
    }
    for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (o, v) in out.as_mut_slice().iter_mut().zip(tokens.row(r)) {
            *o += v;
        }
    }
    out.scale(1.0 / valid as f64);
    Ok(out)
}

pub fn readout_backward(dy: &Tensor2, mask: &[bool]) -> Tensor2 {
    let valid = mask.iter().filter(|&&m| m).count();
    let mut dx = Tensor2::zeros(mask.len(), dy.cols());
    if valid == 0 {
        return dx;
    }
    let w = 1.0 / valid as f64;
    for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (o, v) in dx.row_mut(r).iter_mut().zip(dy.as_slice()) {
            *o = v * w;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn naive_ln(x: &Tensor2, gamma: &[f64], beta: &[f64]) -> Tensor2 {
        let mut out = x.clone();
        for r in 0..x.rows() {
            let n = x.cols() as f64;
            let mean: f64 = x.row(r).iter().sum::<f64>() / n;
            let var: f64 = x.row(r).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            for c in 0..x.cols() {
                out[(r, c)] = (x[(r, c)] - mean) / (var + super::super::layers::LN_EPS).sqrt() * gamma[c] + beta[c];
            }
        }
        out
    }

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn zero_branches_reduce_to_double_layer_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let layer = TransformerLayer::new(&mut store, "l0", 8, 2, &mut rng).unwrap();
        *store.get_mut(layer.attention.w_o) = Tensor2::zeros(8, 8);
        *store.get_mut(layer.ffn.down.w) = Tensor2::zeros(32, 8);
        let x = Tensor2::uniform(5, 8, 2.0, &mut rng);
        let (y, _) = layer.forward(&store, &x, &[true; 5], &mut Mode::Eval).unwrap();
        let zeros = vec![0.0; 8];
        let expected = naive_ln(&naive_ln(&x, &ones(8), &zeros), &ones(8), &zeros);
        assert!(y.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn matches_step_by_step_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut store = ParamStore::new();
        let layer = TransformerLayer::new(&mut store, "l0", 16, 2, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            let (r, c) = store.get(id).shape();
            *store.get_mut(id) = Tensor2::uniform(r, c, 0.5, &mut rng);
        }
        let x = Tensor2::uniform(8, 16, 1.0, &mut rng);
        let mask = [true, true, true, false, true, true, false, true];
        let (y, _) = layer.forward(&store, &x, &mask, &mut Mode::Eval).unwrap();

        let (attn, _) = layer.attention.forward(&store, &x, &mask, &mut Mode::Eval).unwrap();
        let g1 = store.get(layer.norm_attn.gamma).as_slice().to_vec();
        let b1 = store.get(layer.norm_attn.beta).as_slice().to_vec();
        let mid = naive_ln(&x.add(&attn).unwrap(), &g1, &b1);
        let up = store.get(layer.ffn.up.w);
        let upb = store.get(layer.ffn.up.b.unwrap());
        let down = store.get(layer.ffn.down.w);
        let downb = store.get(layer.ffn.down.b.unwrap());
        let mut ff = Tensor2::zeros(8, 16);
        for r in 0..8 {
            for c in 0..16 {
                let mut s = downb[(0, c)];
                for h in 0..64 {
                    let mut pre = upb[(0, h)];
                    for a in 0..16 {
                        pre += mid[(r, a)] * up[(a, h)];
                    }
                    s += pre.max(0.0) * down[(h, c)];
                }
                ff[(r, c)] = s;
            }
        }
        let g2 = store.get(layer.norm_ffn.gamma).as_slice().to_vec();
        let b2 = store.get(layer.norm_ffn.beta).as_slice().to_vec();
        let expected = naive_ln(&mid.add(&ff).unwrap(), &g2, &b2);
        assert!(y.max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn shape_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (l, d) in [(1, 4), (3, 8), (9, 6)] {
            let mut store = ParamStore::new();
            let layer = TransformerLayer::new(&mut store, "l", d, 2, &mut rng).unwrap();
            let x = Tensor2::uniform(l, d, 1.0, &mut rng);
            let (y, _) = layer.forward(&store, &x, &vec![true; l], &mut Mode::Eval).unwrap();
            assert_eq!(y.shape(), (l, d));
        }
    }

    #[test]
    fn readout_cases() {
        let t = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![9.0, 9.0]]).unwrap();
        assert_eq!(readout(&t, &[false, true, false]).unwrap().as_slice(), &[3.0, 6.0]);
        assert_eq!(readout(&t, &[false; 3]).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(readout(&t, &[true, true, false]).unwrap().as_slice(), &[2.0, 4.0]);
    }
}
