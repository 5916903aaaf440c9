//! Affine maps, layer normalisation, rectifier and dropout with explicit backward passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{GradStore, ParamId, ParamStore};
use super::tensor::Tensor2;
use crate::error::Result;

/// Whether stochastic layers are active.
pub enum Mode<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng, dropout: f64 },
}

impl Mode<'_> {
    /// Inverted-dropout mask (entries 0 or 1/(1-p)); `None` when dropout is off.
    pub fn dropout_mask(&mut self, rows: usize, cols: usize) -> Option<Tensor2> {
        match self {
            Mode::Train { rng, dropout } if *dropout > 0.0 => {
                let keep = 1.0 - *dropout;
                let mut mask = Tensor2::zeros(rows, cols);
                for v in mask.as_mut_slice() {
                    if rng.random::<f64>() < keep {
                        *v = 1.0 / keep;
                    }
                }
                Some(mask)
            }
            _ => None,
        }
    }
}

pub fn apply_mask(x: &mut Tensor2, mask: Option<&Tensor2>) {
    if let Some(m) = mask {
        for (v, k) in x.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *v *= k;
        }
    }
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

/// Gradient through a rectifier given its pre-activation input.
pub fn relu_backward(pre: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut dx = dy.clone();
    for (d, &p) in dx.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// `y = x·W + b` with `W: in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.register(format!("{name}.weight"), Tensor2::glorot(in_dim, out_dim, rng));
        let b = bias.then(|| store.register(format!("{name}.bias"), Tensor2::zeros(1, out_dim)));
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Tensor2) -> Result<Tensor2> {
        let mut y = x.matmul(p.get(self.w))?;
        if let Some(b) = self.b {
            y.add_row_broadcast(p.get(b))?;
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(
        &self,
        p: &ParamStore,
        x: &Tensor2,
        dy: &Tensor2,
        g: &mut GradStore,
    ) -> Result<Tensor2> {
        self.backward_params(x, dy, g)?;
        dy.matmul_nt(p.get(self.w))
    }

    /// Parameter gradients only, for layers whose input is constant.
    pub fn backward_params(&self, x: &Tensor2, dy: &Tensor2, g: &mut GradStore) -> Result<()> {
        x.matmul_tn_acc(dy, g.get_mut(self.w))?;
        if let Some(b) = self.b {
            g.get_mut(b).add_assign(&dy.sum_rows())?;
        }
        Ok(())
    }
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Tensor2,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.register(format!("{name}.gamma"), Tensor2::filled(1, dim, 1.0));
        let beta = store.register(format!("{name}.beta"), Tensor2::zeros(1, dim));
        Self { gamma, beta, dim }
    }

    pub fn forward(&self, p: &ParamStore, x: &Tensor2) -> (Tensor2, LayerNormCache) {
        let (rows, cols) = x.shape();
        let gamma = p.get(self.gamma).as_slice();
        let beta = p.get(self.beta).as_slice();
        let mut xhat = Tensor2::zeros(rows, cols);
        let mut y = Tensor2::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[(r, c)] = h;
                y[(r, c)] = h * gamma[c] + beta[c];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        cache: &LayerNormCache,
        dy: &Tensor2,
        g: &mut GradStore,
    ) -> Result<Tensor2> {
        let (rows, cols) = dy.shape();
        let n = cols as f64;
        let gamma = p.get(self.gamma).as_slice().to_vec();
        let mut dgamma = Tensor2::zeros(1, cols);
        let dbeta = dy.sum_rows();
        let mut dx = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let xh = cache.xhat.row(r);
            let dyr = dy.row(r);
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for c in 0..cols {
                dgamma.as_mut_slice()[c] += dyr[c] * xh[c];
                let d = dyr[c] * gamma[c];
                sum_dxhat += d;
                sum_dxhat_xhat += d * xh[c];
            }
            let is = cache.inv_std[r];
            let out = dx.row_mut(r);
            for c in 0..cols {
                let d = dyr[c] * gamma[c];
                out[c] = is / n * (n * d - sum_dxhat - xh[c] * sum_dxhat_xhat);
            }
        }
        g.get_mut(self.gamma).add_assign(&dgamma)?;
        g.get_mut(self.beta).add_assign(&dbeta)?;
        Ok(dx)
    }
}

/// Position-wise affine → rectifier → affine.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    x: Tensor2,
    pre: Tensor2,
    hidden: Tensor2,
    mask: Option<Tensor2>,
}

impl FeedForward {
    pub const EXPANSION: usize = 4;

    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let inner = dim * Self::EXPANSION;
        Self {
            up: Linear::new(store, &format!("{name}.up"), dim, inner, true, rng),
            down: Linear::new(store, &format!("{name}.down"), inner, dim, true, rng),
        }
    }

    pub fn forward(
        &self,
        p: &ParamStore,
        x: &Tensor2,
        mode: &mut Mode<'_>,
    ) -> Result<(Tensor2, FeedForwardCache)> {
        let pre = self.up.forward(p, x)?;
        let mut hidden = relu(&pre);
        let mask = mode.dropout_mask(hidden.rows(), hidden.cols());
        apply_mask(&mut hidden, mask.as_ref());
        let y = self.down.forward(p, &hidden)?;
        Ok((
            y,
            FeedForwardCache {
                x: x.clone(),
                pre,
                hidden,
                mask,
            },
        ))
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        cache: &FeedForwardCache,
        dy: &Tensor2,
        g: &mut GradStore,
    ) -> Result<Tensor2> {
        let mut dh = self.down.backward(p, &cache.hidden, dy, g)?;
        apply_mask(&mut dh, cache.mask.as_ref());
        let dpre = relu_backward(&cache.pre, &dh);
        self.up.backward(p, &cache.x, &dpre, g)
    }
}
