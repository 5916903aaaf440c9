//! Central finite-difference gradient check.

use rand::seq::index;
use rand::Rng;

use super::params::{GradStore, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Relative error floor used in the denominator.
pub const REL_FLOOR: f64 = 1e-8;

/// Compares `analytic` with `(L(θ+ε) − L(θ−ε)) / 2ε` on `count` randomly chosen
/// scalar parameters (all of them when fewer exist). `loss` must be
/// deterministic. Parameters are restored afterwards.
pub fn grad_check<R: Rng + ?Sized>(
    params: &mut ParamStore,
    analytic: &GradStore,
    mut loss: impl FnMut(&ParamStore) -> Result<f64>,
    epsilon: f64,
    count: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {epsilon}")));
    }
    let mut flat: Vec<(ParamId, usize)> = Vec::new();
    for id in params.ids() {
        flat.extend((0..params.get(id).as_slice().len()).map(|i| (id, i)));
    }
    let picks: Vec<usize> = if count >= flat.len() {
        (0..flat.len()).collect()
    } else {
        let mut v = index::sample(rng, flat.len(), count).into_vec();
        v.sort_unstable();
        v
    };
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: picks.len(),
    };
    for k in picks {
        let (id, i) = flat[k];
        let orig = params.get(id).as_slice()[i];
        params.get_mut(id).as_mut_slice()[i] = orig + epsilon;
        let up = loss(params);
        params.get_mut(id).as_mut_slice()[i] = orig - epsilon;
        let down = loss(params);
        params.get_mut(id).as_mut_slice()[i] = orig;
        let (up, down) = (up?, down?);
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(format!("loss while perturbing {}[{i}]", params.name(id))));
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic.get(id).as_slice()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = rel;
            report.worst = Some((params.name(id).to_string(), i));
        }
    }
    Ok(report)
}
