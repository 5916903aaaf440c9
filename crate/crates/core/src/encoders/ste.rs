//! Seasonality and trend decomposition of the neighbour-index signal.
//!
//! The trend is a centred moving average with replicate edge padding, snapped
//! to a dyadic grid 40 bits below the column's magnitude. For inputs on that
//! grid (which includes every signal built by [`build_ste_signal`]) both
//! `q - trend` and `seasonal + trend` are exact in f64, so the decomposition
//! reconstructs its input bit for bit. The snap moves the trend by less than
//! 2⁻⁴⁰ relative to the largest entry.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{GradStore, Linear, ParamStore, Tensor2};
use crate::sampling::NeighborSequence;

pub const DEFAULT_WINDOW: usize = 3;
const GRID_BITS: i32 = 40;
const SIGNAL_BITS: i32 = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonTrend {
    pub seasonal: Tensor2,
    pub trend: Tensor2,
    pub window: usize,
}

fn column_grid(q: &Tensor2, c: usize) -> f64 {
    let max = (0..q.rows()).map(|r| q[(r, c)].abs()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let exp = max.log2().floor() as i32 + 1;
    2f64.powi(exp - GRID_BITS)
}

pub fn ste_decompose(q: &Tensor2, window: usize) -> Result<SeasonTrend> {
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("moving-average window must be odd, got {window}")));
    }
    let n = q.rows();
    if window > n.max(1) {
        return Err(Error::Config(format!("window {window} exceeds sequence length {n}")));
    }
    q.check_finite("decomposition input")?;
    let half = (window - 1) / 2;
    let mut trend = Tensor2::zeros(n, q.cols());
    for c in 0..q.cols() {
        let grid = column_grid(q, c);
        for r in 0..n {
            let mut sum = 0.0;
            for k in 0..window {
                let idx = (r + k).saturating_sub(half).min(n - 1);
                sum += q[(idx, c)];
            }
            let mean = sum / window as f64;
            trend[(r, c)] = if grid > 0.0 { (mean / grid).round() * grid } else { mean };
        }
    }
    let seasonal = q.sub(&trend)?;
    Ok(SeasonTrend {
        seasonal,
        trend,
        window,
    })
}

/// Neighbour id divided by the node count, one column; padding is 0. Values are
/// rounded to multiples of 2⁻³² so the decomposition is exact.
pub fn build_ste_signal(seq: &NeighborSequence, num_nodes: usize) -> Tensor2 {
    let scale = 2f64.powi(SIGNAL_BITS);
    let data = seq
        .ids()
        .map(|id| match id {
            Some(v) if num_nodes > 0 => (v as f64 / num_nodes as f64 * scale).round() / scale,
            _ => 0.0,
        })
        .collect();
    Tensor2::from_vec(seq.len(), 1, data).expect("length matches")
}

/// Affine lifts of the one-column seasonal and trend signals.
#[derive(Debug, Clone)]
pub struct SteEncoder {
    pub seasonal: Linear,
    pub trend: Linear,
    pub window: usize,
}

#[derive(Debug, Clone)]
pub struct SteCache {
    parts: SeasonTrend,
}

impl SteEncoder {
    pub fn new(store: &mut ParamStore, d_s: usize, d_tr: usize, window: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            seasonal: Linear::new(store, "ste.seasonal", 1, d_s, true, rng),
            trend: Linear::new(store, "ste.trend", 1, d_tr, true, rng),
            window,
        }
    }

    pub fn width(&self) -> usize {
        self.seasonal.out_dim + self.trend.out_dim
    }

    /// `[seasonal lift ‖ trend lift]`, one row per window slot.
    pub fn forward(&self, p: &ParamStore, seq: &NeighborSequence, num_nodes: usize) -> Result<(Tensor2, SteCache)> {
        let signal = build_ste_signal(seq, num_nodes);
        let window = self.window.min(odd_floor(seq.len()));
        let parts = ste_decompose(&signal, window)?;
        let s = self.seasonal.forward(p, &parts.seasonal)?;
        let t = self.trend.forward(p, &parts.trend)?;
        Ok((Tensor2::hcat(&[&s, &t])?, SteCache { parts }))
    }

    pub fn backward(&self, cache: &SteCache, dy: &Tensor2, g: &mut GradStore) -> Result<()> {
        let d_s = self.seasonal.out_dim;
        self.seasonal
            .backward_params(&cache.parts.seasonal, &dy.col_slice(0, d_s)?, g)?;
        self.trend
            .backward_params(&cache.parts.trend, &dy.col_slice(d_s, self.trend.out_dim)?, g)
    }
}

/// Largest odd number ≤ n (at least 1), so short windows still decompose.
fn odd_floor(n: usize) -> usize {
    if n == 0 {
        1
    } else if n % 2 == 1 {
        n
    } else {
        n - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn column(v: &[f64]) -> Tensor2 {
        Tensor2::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn constant_column_has_no_seasonality() {
        let q = column(&[0.25; 6]);
        let st = ste_decompose(&q, 3).unwrap();
        assert!(st.trend.as_slice().iter().all(|&v| v == 0.25));
        assert!(st.seasonal.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_window_is_identity() {
        let q = column(&[0.5, 0.125, 0.75, 0.0]);
        let st = ste_decompose(&q, 1).unwrap();
        assert_eq!(st.trend, q);
        assert!(st.seasonal.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn replicate_padded_moving_average() {
        let q = column(&[0.1, 0.2, 0.3, 0.4]);
        let st = ste_decompose(&q, 3).unwrap();
        // (0.1+0.1+0.2)/3, (0.1+0.2+0.3)/3, (0.2+0.3+0.4)/3, (0.3+0.4+0.4)/3
        let expect = [0.4 / 3.0, 0.2, 0.3, 1.1 / 3.0];
        for (a, b) in st.trend.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for k in 0..4 {
            let back = st.seasonal[(k, 0)] + st.trend[(k, 0)];
            assert!((back - q[(k, 0)]).abs() <= f64::EPSILON * q[(k, 0)].abs());
        }
    }

    #[test]
    fn rejects_bad_windows() {
        let q = column(&[0.1, 0.2]);
        assert!(matches!(ste_decompose(&q, 2), Err(Error::Config(_))));
        assert!(matches!(ste_decompose(&q, 5), Err(Error::Config(_))));
    }

    #[test]
    fn signal_normalises_ids_and_zeroes_padding() {
        let seq = NeighborSequence::from_ids(0, 10.0, &[None, Some(5), Some(0), Some(9)]);
        let s = build_ste_signal(&seq, 10);
        assert_eq!(s.as_slice(), &[0.0, 0.5, 0.0, (0.9 * 2f64.powi(32)).round() / 2f64.powi(32)]);
    }

    #[test]
    fn lift_widths_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let enc = SteEncoder::new(&mut store, 3, 2, 3, &mut rng);
        let seq = NeighborSequence::from_ids(0, 10.0, &[Some(1), Some(4), Some(2), Some(7)]);
        let (y, cache) = enc.forward(&store, &seq, 8).unwrap();
        assert_eq!(y.shape(), (4, 5));
        let mut g = store.zero_grads();
        enc.backward(&cache, &Tensor2::filled(4, 5, 1.0), &mut g).unwrap();
        // bias gradient of an all-ones upstream is the row count
        assert!(g.get(enc.trend.b.unwrap()).as_slice().iter().all(|&v| v == 4.0));
        let seasonal_sum: f64 = cache.parts.seasonal.as_slice().iter().sum();
        assert!((g.get(enc.seasonal.w)[(0, 0)] - seasonal_sum).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn reconstruction_is_bitwise_exact(
            ids in proptest::collection::vec(proptest::option::weighted(0.8, 0usize..100_000), 1..40),
            num_nodes in 100_000usize..2_000_000,
            w in 0usize..4,
        ) {
            let seq = NeighborSequence::from_ids(0, 1e6, &ids);
            let q = build_ste_signal(&seq, num_nodes);
            let window = (2 * w + 1).min(odd_floor(ids.len()));
            let st = ste_decompose(&q, window).unwrap();
            for k in 0..ids.len() {
                prop_assert_eq!(st.seasonal[(k, 0)] + st.trend[(k, 0)], q[(k, 0)]);
            }
        }

        #[test]
        fn trend_stays_near_moving_average(
            v in proptest::collection::vec(-10.0f64..10.0, 3..30),
        ) {
            let q = column(&v);
            let st = ste_decompose(&q, 3).unwrap();
            let n = v.len();
            let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for r in 0..n {
                let a = v[r.saturating_sub(1)];
                let c = v[(r + 1).min(n - 1)];
                let mean = (a + v[r] + c) / 3.0;
                prop_assert!((st.trend[(r, 0)] - mean).abs() <= max * 1e-11 + 1e-300);
            }
        }
    }
}
