//! Masked multi-head scaled dot-product self-attention.

use rand_chacha::ChaCha8Rng;

use super::layers::{apply_mask, Mode};
use super::params::{GradStore, ParamId, ParamStore};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Row-wise softmax over the columns whose `mask` entry is true.
///
/// Masked columns get weight 0. A row with no valid column is all zeros, so a
/// fully padded sequence attends to nothing and produces a zero output.
pub fn masked_softmax(scores: &Tensor2, mask: &[bool]) -> Result<Tensor2> {
    if mask.len() != scores.cols() {
        return Err(Error::Shape(format!(
            "mask of length {} for {} score columns",
            mask.len(),
            scores.cols()
        )));
    }
    let mut out = Tensor2::zeros(scores.rows(), scores.cols());
    for r in 0..scores.rows() {
        let row = scores.row(r);
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let dst = out.row_mut(r);
        let mut total = 0.0;
        for c in 0..row.len() {
            if mask[c] {
                let e = (row[c] - max).exp();
                dst[c] = e;
                total += e;
            }
        }
        dst.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

/// Backward of a row-wise softmax given its output `probs`.
pub fn softmax_backward(probs: &Tensor2, dprobs: &Tensor2) -> Tensor2 {
    let mut ds = Tensor2::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let dp = dprobs.row(r);
        let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
        for (o, (a, b)) in ds.row_mut(r).iter_mut().zip(p.iter().zip(dp)) {
            *o = a * (b - inner);
        }
    }
    ds
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: Vec<HeadParams>,
    pub w_o: ParamId,
    pub dim: usize,
    pub head_dim: usize,
}

#[derive(Debug, Clone)]
pub struct HeadParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    /// Attention weights before dropout.
    pub weights: Tensor2,
    dropped: Tensor2,
    drop_mask: Option<Tensor2>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Tensor2,
    pub heads: Vec<HeadCache>,
    concat: Tensor2,
}

impl AttentionCache {
    /// Head-averaged attention matrix (rows: queries, columns: keys).
    pub fn mean_weights(&self) -> Tensor2 {
        let mut acc = self.heads[0].weights.clone();
        for h in &self.heads[1..] {
            acc.add_assign(&h.weights).expect("heads share a shape");
        }
        acc.scale(1.0 / self.heads.len() as f64);
        acc
    }
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        num_heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_heads == 0 || !dim.is_multiple_of(num_heads) {
            return Err(Error::Config(format!(
                "hidden width {dim} is not divisible by {num_heads} heads"
            )));
        }
        let head_dim = dim / num_heads;
        let heads = (0..num_heads)
            .map(|j| HeadParams {
                w_q: store.register(format!("{name}.head{j}.w_q"), Tensor2::glorot(dim, head_dim, rng)),
                w_k: store.register(format!("{name}.head{j}.w_k"), Tensor2::glorot(dim, head_dim, rng)),
                w_v: store.register(format!("{name}.head{j}.w_v"), Tensor2::glorot(dim, head_dim, rng)),
            })
            .collect();
        let w_o = store.register(format!("{name}.w_o"), Tensor2::glorot(dim, dim, rng));
        Ok(Self {
            heads,
            w_o,
            dim,
            head_dim,
        })
    }

    /// `(Head_1 ‖ … ‖ Head_J)·W_O` with PAD keys masked.
    pub fn forward(
        &self,
        p: &ParamStore,
        x: &Tensor2,
        mask: &[bool],
        mode: &mut Mode<'_>,
    ) -> Result<(Tensor2, AttentionCache)> {
        if x.cols() != self.dim {
            return Err(Error::Shape(format!(
                "attention input width {} != {}",
                x.cols(),
                self.dim
            )));
        }
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut caches = Vec::with_capacity(self.heads.len());
        let mut outputs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = x.matmul(p.get(head.w_q))?;
            let k = x.matmul(p.get(head.w_k))?;
            let v = x.matmul(p.get(head.w_v))?;
            let mut scores = q.matmul_nt(&k)?;
            scores.scale(scale);
            let weights = masked_softmax(&scores, mask)?;
            let mut dropped = weights.clone();
            let drop_mask = mode.dropout_mask(dropped.rows(), dropped.cols());
            apply_mask(&mut dropped, drop_mask.as_ref());
            outputs.push(dropped.matmul(&v)?);
            caches.push(HeadCache {
                q,
                k,
                v,
                weights,
                dropped,
                drop_mask,
            });
        }
        let concat = Tensor2::hcat(&outputs.iter().collect::<Vec<_>>())?;
        let out = concat.matmul(p.get(self.w_o))?;
        Ok((
            out,
            AttentionCache {
                x: x.clone(),
                heads: caches,
                concat,
            },
        ))
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        cache: &AttentionCache,
        dy: &Tensor2,
        g: &mut GradStore,
    ) -> Result<Tensor2> {
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        cache.concat.matmul_tn_acc(dy, g.get_mut(self.w_o))?;
        let dconcat = dy.matmul_nt(p.get(self.w_o))?;
        let mut dx = Tensor2::zeros(cache.x.rows(), cache.x.cols());
        for (j, (head, hc)) in self.heads.iter().zip(&cache.heads).enumerate() {
            let dhead = dconcat.col_slice(j * self.head_dim, self.head_dim)?;
            let mut dweights = dhead.matmul_nt(&hc.v)?;
            let dv = hc.dropped.matmul_tn(&dhead)?;
            apply_mask(&mut dweights, hc.drop_mask.as_ref());
            let mut dscores = softmax_backward(&hc.weights, &dweights);
            dscores.scale(scale);
            let dq = dscores.matmul(&hc.k)?;
            let dk = dscores.matmul_tn(&hc.q)?;
            for (w, d) in [(head.w_q, &dq), (head.w_k, &dk), (head.w_v, &dv)] {
                cache.x.matmul_tn_acc(d, g.get_mut(w))?;
                dx.add_assign(&d.matmul_nt(p.get(w))?)?;
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Triple-loop reference: no matrix helpers, direct definition.
    fn naive_mha(p: &ParamStore, mha: &MultiHeadAttention, x: &Tensor2, mask: &[bool]) -> Tensor2 {
        let l = x.rows();
        let d = mha.dim;
        let dk = mha.head_dim;
        let mut concat = vec![vec![0.0; d]; l];
        for (j, h) in mha.heads.iter().enumerate() {
            let proj = |w: ParamId| {
                let w = p.get(w);
                let mut out = vec![vec![0.0; dk]; l];
                for i in 0..l {
                    for c in 0..dk {
                        for a in 0..d {
                            out[i][c] += x[(i, a)] * w[(a, c)];
                        }
                    }
                }
                out
            };
            let (q, k, v) = (proj(h.w_q), proj(h.w_k), proj(h.w_v));
            for i in 0..l {
                let mut s = vec![0.0; l];
                for t in 0..l {
                    for c in 0..dk {
                        s[t] += q[i][c] * k[t][c];
                    }
                    s[t] /= (dk as f64).sqrt();
                }
                let valid: Vec<usize> = (0..l).filter(|&t| mask[t]).collect();
                if valid.is_empty() {
                    continue;
                }
                let m = valid.iter().map(|&t| s[t]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = valid.iter().map(|&t| (s[t] - m).exp()).sum();
                for &t in &valid {
                    let a = (s[t] - m).exp() / z;
                    for c in 0..dk {
                        concat[i][j * dk + c] += a * v[t][c];
                    }
                }
            }
        }
        let wo = p.get(mha.w_o);
        let mut out = Tensor2::zeros(l, d);
        for i in 0..l {
            for c in 0..d {
                for a in 0..d {
                    out[(i, c)] += concat[i][a] * wo[(a, c)];
                }
            }
        }
        out
    }

    #[test]
    fn softmax_rows_sum_to_one_and_match_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Tensor2::uniform(4, 4, 3.0, &mut rng);
        let a = masked_softmax(&s, &[true; 4]).unwrap();
        for r in 0..4 {
            let z: f64 = s.row(r).iter().map(|v| v.exp()).sum();
            for c in 0..4 {
                assert!((a[(r, c)] - s[(r, c)].exp() / z).abs() < 1e-15);
            }
            assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_edge_cases() {
        let equal = Tensor2::filled(3, 3, 0.7);
        let a = masked_softmax(&equal, &[true; 3]).unwrap();
        assert!(a.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = Tensor2::uniform(3, 3, 5.0, &mut rng);
        let forced = masked_softmax(&s, &[false, true, false]).unwrap();
        for r in 0..3 {
            assert_eq!(forced.row(r), &[0.0, 1.0, 0.0]);
        }

        let none = masked_softmax(&s, &[false; 3]).unwrap();
        assert!(none.as_slice().iter().all(|&v| v == 0.0));
        assert!(masked_softmax(&s, &[true; 2]).is_err());
    }

    #[test]
    fn zero_queries_and_keys_average_valid_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", 3, 1, &mut rng).unwrap();
        *store.get_mut(mha.heads[0].w_q) = Tensor2::zeros(3, 3);
        *store.get_mut(mha.heads[0].w_k) = Tensor2::zeros(3, 3);
        *store.get_mut(mha.heads[0].w_v) = Tensor2::identity(3);
        *store.get_mut(mha.w_o) = Tensor2::identity(3);
        let x = Tensor2::uniform(4, 3, 1.0, &mut rng);
        let mask = [false, true, true, true];
        let (y, _) = mha.forward(&store, &x, &mask, &mut Mode::Eval).unwrap();
        for c in 0..3 {
            let mean = (x[(1, c)] + x[(2, c)] + x[(3, c)]) / 3.0;
            for r in 0..4 {
                assert!((y[(r, c)] - mean).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_valid_token_is_attended_by_every_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng).unwrap();
        let x = Tensor2::uniform(4, 4, 1.0, &mut rng);
        let (_, cache) = mha.forward(&store, &x, &[false, false, true, false], &mut Mode::Eval).unwrap();
        for h in &cache.heads {
            for r in 0..4 {
                assert_eq!(h.weights.row(r), &[0.0, 0.0, 1.0, 0.0]);
            }
        }
    }

    #[test]
    fn matches_triple_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (l, d, heads) in [(4, 4, 2), (8, 16, 2), (5, 6, 3)] {
            let mut store = ParamStore::new();
            let mha = MultiHeadAttention::new(&mut store, "mha", d, heads, &mut rng).unwrap();
            let x = Tensor2::uniform(l, d, 1.0, &mut rng);
            let mut mask = vec![true; l];
            mask[0] = false;
            let (y, _) = mha.forward(&store, &x, &mask, &mut Mode::Eval).unwrap();
            let reference = naive_mha(&store, &mha, &x, &mask);
            assert!(y.max_abs_diff(&reference) < 1e-10);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng).unwrap();
        let x = Tensor2::uniform(3, 4, 1.0, &mut rng);
        let mask = [true, true, false];
        let w = Tensor2::uniform(3, 4, 1.0, &mut rng);
        let loss = |store: &ParamStore, x: &Tensor2| {
            let (y, _) = mha.forward(store, x, &mask, &mut Mode::Eval).unwrap();
            super::super::tensor::dot(y.as_slice(), w.as_slice())
        };
        let (_, cache) = mha.forward(&store, &x, &mask, &mut Mode::Eval).unwrap();
        let mut g = store.zero_grads();
        let dx = mha.backward(&store, &cache, &w, &mut g).unwrap();
        let eps = 1e-6;
        for i in 0..x.as_slice().len() {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += eps;
            let mut xm = x.clone();
            xm.as_mut_slice()[i] -= eps;
            let num = (loss(&store, &xp) - loss(&store, &xm)) / (2.0 * eps);
            assert!((num - dx.as_slice()[i]).abs() < 1e-8);
        }
        for id in store.ids().collect::<Vec<_>>() {
            for i in 0..store.get(id).as_slice().len() {
                let mut sp = store.clone();
                sp.get_mut(id).as_mut_slice()[i] += eps;
                let mut sm = store.clone();
                sm.get_mut(id).as_mut_slice()[i] -= eps;
                let num = (loss(&sp, &x) - loss(&sm, &x)) / (2.0 * eps);
                assert!((num - g.get(id).as_slice()[i]).abs() < 1e-8, "{}", store.name(id));
            }
        }
    }
}
