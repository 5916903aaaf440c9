//! Average precision and area under the ROC curve.

use std::cmp::Ordering;

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    Ok(())
}

/// Indices by descending score; equal scores keep input order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// `Σ_k precision@k · Δrecall_k` over the descending ranking.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("average precision needs at least one positive".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, i) in ranking(scores).into_iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Mann–Whitney statistic `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC-ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // walk tie groups in ascending order, counting negatives strictly below
    let mut wins = 0.0;
    let mut below_neg = 0usize;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end < order.len() && scores[order[end]] == scores[order[k]] {
            end += 1;
        }
        let group = &order[k..end];
        let gp = group.iter().filter(|&&i| labels[i]).count();
        let gn = group.len() - gp;
        wins += gp as f64 * below_neg as f64 + 0.5 * (gp * gn) as f64;
        below_neg += gn;
        k = end;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_ranking() {
        let s = [0.9, 0.8, 0.3, 0.1];
        let l = [true, true, false, false];
        assert_eq!(average_precision(&s, &l).unwrap(), 1.0);
        assert_eq!(auc_roc(&s, &l).unwrap(), 1.0);
    }

    #[test]
    fn single_positive_last() {
        let s = [0.9, 0.8, 0.7, 0.1];
        let l = [false, false, false, true];
        assert_eq!(average_precision(&s, &l).unwrap(), 0.25);
        assert_eq!(auc_roc(&s, &l).unwrap(), 0.0);
    }

    #[test]
    fn ties() {
        let s = [0.5; 6];
        let l = [true, false, true, false, false, true];
        assert_eq!(auc_roc(&s, &l).unwrap(), 0.5);
        // stable order: positives at ranks 1, 3, 6
        let ap = average_precision(&s, &l).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0 + 0.5) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_inputs() {
        assert!(matches!(average_precision(&[0.1], &[false]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(auc_roc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(auc_roc(&[0.1], &[true, false]), Err(Error::Shape(_))));
    }

    fn brute_ap(s: &[f64], l: &[bool]) -> f64 {
        let n = s.len();
        let mut total = 0.0;
        let mut pos = 0;
        for i in 0..n {
            if !l[i] {
                continue;
            }
            pos += 1;
            let before = |j: usize| s[j] > s[i] || (s[j] == s[i] && j <= i);
            let rank = (0..n).filter(|&j| before(j)).count();
            let hits = (0..n).filter(|&j| before(j) && l[j]).count();
            total += hits as f64 / rank as f64;
        }
        total / pos as f64
    }

    fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn matches_pairwise_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..200 {
            let n = rng.random_range(2..=50);
            // coarse scores force ties
            let s: Vec<f64> = (0..n).map(|_| (rng.random_range(0..10) as f64) / 10.0).collect();
            let mut l: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            l[0] = true;
            l[1] = false;
            assert!((average_precision(&s, &l).unwrap() - brute_ap(&s, &l)).abs() < 1e-12);
            assert!((auc_roc(&s, &l).unwrap() - brute_auc(&s, &l)).abs() < 1e-12);
        }
    }
}
