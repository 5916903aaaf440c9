//! Binary cross-entropy on sigmoid outputs.

pub const PROB_EPS: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-(y·ln p + (1-y)·ln(1-p))` with `p` clamped to `[ε, 1-ε]`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Loss and its gradient with respect to the pre-sigmoid logit (`p - y`).
pub fn bce_with_logit(logit: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    (bce_loss(p, y), p - y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn analytic_values() {
        assert!(bce_loss(1.0, 1.0) < 1e-11);
        assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    proptest! {
        #[test]
        fn logit_gradient_matches_central_differences(z in -6.0f64..6.0, y in prop::bool::ANY) {
            let y = if y { 1.0 } else { 0.0 };
            let h = 1e-5;
            let numeric = (bce_with_logit(z + h, y).0 - bce_with_logit(z - h, y).0) / (2.0 * h);
            let analytic = bce_with_logit(z, y).1;
            let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            prop_assert!(rel < 1e-6, "z={z} y={y} analytic={analytic} numeric={numeric}");
        }
    }
}
