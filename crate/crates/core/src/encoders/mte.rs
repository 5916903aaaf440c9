//! Mixed-granularity temporal encoding.
//!
//! Fine part: `cos(ω·Δt)` with `ω_j = α^{-(j-1)/β}`, `j = 1..d_t`.
//! Coarse part: the calendar bucket `⌊Δt / divisor⌋` scaled by `1/R` and
//! broadcast to `d_t` components. The two are summed or concatenated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::sampling::NeighborSequence;

const HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Weekly,
    Monthly,
    Yearly,
}

impl Granularity {
    /// Bucket width in seconds. Monthly and yearly keep the ×7 factor of the
    /// published formula; use `MteConfig::divisor_override` for calendar values.
    pub fn divisor(self) -> f64 {
        match self {
            Self::Weekly => 24.0 * 7.0 * HOUR,
            Self::Monthly => 24.0 * 7.0 * 30.0 * HOUR,
            Self::Yearly => 24.0 * 7.0 * 365.0 * HOUR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    #[default]
    Sum,
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MteConfig {
    pub d_t: usize,
    /// Defaults to `√d_t`.
    pub alpha: Option<f64>,
    /// Defaults to `√d_t`.
    pub beta: Option<f64>,
    pub granularity: Granularity,
    /// Calendar segment count `R`.
    pub segments: u32,
    pub combine: CombineMode,
    pub decay_tol: f64,
    pub divisor_override: Option<f64>,
}

impl Default for MteConfig {
    fn default() -> Self {
        Self {
            d_t: 100,
            alpha: None,
            beta: None,
            granularity: Granularity::Weekly,
            segments: 4,
            combine: CombineMode::Sum,
            decay_tol: 1e-6,
            divisor_override: None,
        }
    }
}

impl MteConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| (self.d_t as f64).sqrt())
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| (self.d_t as f64).sqrt())
    }

    pub fn divisor(&self) -> f64 {
        self.divisor_override.unwrap_or_else(|| self.granularity.divisor())
    }

    /// Smallest frequency `α^{-(d_t-1)/β}`.
    pub fn min_frequency(&self) -> f64 {
        self.alpha().powf(-((self.d_t as f64 - 1.0) / self.beta()))
    }

    /// Checks the shape parameters and the decay condition
    /// `Δt_max · α^{-(d_t-1)/β} ≤ decay_tol`.
    pub fn validate(&self, max_delta_t: f64) -> Result<()> {
        if self.d_t == 0 {
            return Err(Error::Config("d_t must be at least 1".into()));
        }
        if self.segments == 0 {
            return Err(Error::Config("time segment count R must be at least 1".into()));
        }
        let (a, b) = (self.alpha(), self.beta());
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!("alpha ({a}) and beta ({b}) must be positive")));
        }
        if let Some(d) = self.divisor_override {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("divisor override {d} must be positive")));
            }
        }
        let residual = max_delta_t * self.min_frequency();
        if residual > self.decay_tol {
            return Err(Error::Config(format!(
                "decay condition violated: Δt_max·α^(-(d_t-1)/β) = {residual:.3e} > {:.1e}; \
                 raise alpha or lower beta",
                self.decay_tol
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        match self.combine {
            CombineMode::Sum => self.d_t,
            CombineMode::Concat => 2 * self.d_t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TemporalEncoder {
    cfg: MteConfig,
    omega: Vec<f64>,
}

impl TemporalEncoder {
    pub fn new(cfg: MteConfig) -> Self {
        let (a, b) = (cfg.alpha(), cfg.beta());
        let omega = (0..cfg.d_t).map(|j| a.powf(-(j as f64) / b)).collect();
        Self { cfg, omega }
    }

    pub fn config(&self) -> &MteConfig {
        &self.cfg
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.omega
    }

    /// `cos(ω·Δt)`.
    pub fn encode_fine(&self, delta_t: f64) -> Result<Vec<f64>> {
        check_delta(delta_t)?;
        Ok(self.omega.iter().map(|w| (w * delta_t).cos()).collect())
    }

    pub fn coarse_bucket(&self, delta_t: f64) -> Result<u64> {
        check_delta(delta_t)?;
        Ok((delta_t / self.cfg.divisor()).floor() as u64)
    }

    /// `θ · bucket` with `θ = (1/R, …, 1/R)`.
    pub fn encode_coarse(&self, delta_t: f64) -> Result<Vec<f64>> {
        let v = self.coarse_bucket(delta_t)? as f64 / self.cfg.segments as f64;
        Ok(vec![v; self.cfg.d_t])
    }

    pub fn encode(&self, delta_t: f64) -> Result<Vec<f64>> {
        mix_temporal(
            &self.encode_fine(delta_t)?,
            &self.encode_coarse(delta_t)?,
            self.cfg.combine,
        )
    }

    /// One row per window slot; padding has `Δt = 0`.
    pub fn encode_sequence(&self, seq: &NeighborSequence) -> Result<Tensor2> {
        self.encode_rows(seq, |dt| self.encode(dt), self.cfg.width())
    }

    /// Fine-only rows (`d_t` columns).
    pub fn encode_sequence_fine(&self, seq: &NeighborSequence) -> Result<Tensor2> {
        self.encode_rows(seq, |dt| self.encode_fine(dt), self.cfg.d_t)
    }

    fn encode_rows(
        &self,
        seq: &NeighborSequence,
        f: impl Fn(f64) -> Result<Vec<f64>>,
        width: usize,
    ) -> Result<Tensor2> {
        let mut out = Tensor2::zeros(seq.len(), width);
        for (k, e) in seq.entries.iter().enumerate() {
            let v = f(seq.query_time - e.timestamp)?;
            out.row_mut(k).copy_from_slice(&v);
        }
        Ok(out)
    }
}

fn check_delta(delta_t: f64) -> Result<()> {
    if delta_t < 0.0 || delta_t.is_nan() {
        return Err(Error::Leakage { delta_t });
    }
    Ok(())
}

pub fn mix_temporal(fine: &[f64], coarse: &[f64], combine: CombineMode) -> Result<Vec<f64>> {
    if fine.len() != coarse.len() {
        return Err(Error::Shape(format!(
            "fine encoding has {} components, coarse has {}",
            fine.len(),
            coarse.len()
        )));
    }
    Ok(match combine {
        CombineMode::Sum => fine.iter().zip(coarse).map(|(a, b)| a + b).collect(),
        CombineMode::Concat => fine.iter().chain(coarse).copied().collect(),
    })
}
