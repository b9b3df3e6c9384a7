//! Classification metrics: micro-averaged F1 and area under the
//! precision-recall curve (average precision, step interpolation).

use crate::error::{Error, Result};

/// Micro-averaged F1 from TP/FP/FN counts pooled across all classes.
///
/// For single-label multi-class prediction the pooled FP and FN both equal
/// the number of misclassifications, so this coincides with accuracy.
pub fn micro_f1(predictions: &[usize], golds: &[usize], num_labels: usize) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::Config(format!(
            "micro_f1: {} predictions vs {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Config("micro_f1 of empty input".into()));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for c in 0..num_labels {
        for (&p, &g) in predictions.iter().zip(golds) {
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64))
}

/// Average precision: the step-wise sum of precision at each recall
/// increment, walking thresholds from the highest score down. Equal scores
/// are processed as one atomic group.
pub fn auc_pr(scores: &[f64], golds: &[bool]) -> Result<f64> {
    if scores.len() != golds.len() {
        return Err(Error::Config(format!(
            "auc_pr: {} scores vs {} golds",
            scores.len(),
            golds.len()
        )));
    }
    let total_pos = golds.iter().filter(|&&g| g).count();
    if total_pos == 0 || total_pos == golds.len() {
        return Err(Error::Config(
            "auc_pr needs at least one positive and one negative gold".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Config("auc_pr: NaN score".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut idx = 0;
    while idx < order.len() {
        // atomic tie group
        let mut end = idx + 1;
        while end < order.len() && scores[order[end]] == scores[order[idx]] {
            end += 1;
        }
        let group_pos = order[idx..end].iter().filter(|&&i| golds[i]).count();
        let prev_tp = tp;
        tp += group_pos;
        seen += end - idx;
        if group_pos > 0 {
            let precision = tp as f64 / seen as f64;
            let recall_delta = (tp - prev_tp) as f64 / total_pos as f64;
            ap += precision * recall_delta;
        }
        idx = end;
    }
    Ok(ap)
}

/// First epoch (1-based) whose value is within `tol` of the final value.
/// The convergence-speed measure for epoch curves.
pub fn epochs_to_reach(series: &[f64], tol: f64) -> usize {
    let last = *series.last().expect("nonempty series");
    for (i, &v) in series.iter().enumerate() {
        if v >= last - tol {
            return i + 1;
        }
    }
    series.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_correct_is_one() {
        assert_eq!(micro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
    }

    #[test]
    fn all_wrong_binary_is_zero() {
        assert_eq!(micro_f1(&[0, 1], &[1, 0], 2).unwrap(), 0.0);
    }

    #[test]
    fn pooled_counts_match_hand_example() {
        // 6 samples, 3 classes, 4 correct: pooled TP=4, FP=2, FN=2
        let preds = [0, 0, 1, 1, 2, 2];
        let golds = [0, 1, 1, 2, 2, 2];
        let f1 = micro_f1(&preds, &golds, 3).unwrap();
        assert!((f1 - 4.0 / (4.0 + 0.5 * 4.0)).abs() < 1e-12);
        assert!((f1 - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn micro_f1_equals_accuracy_for_single_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let labels = rng.gen_range(2..6);
            let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..labels)).collect();
            let golds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..labels)).collect();
            let acc = preds
                .iter()
                .zip(&golds)
                .filter(|(p, g)| p == g)
                .count() as f64
                / n as f64;
            let f1 = micro_f1(&preds, &golds, labels).unwrap();
            assert!((f1 - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(micro_f1(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn perfectly_separating_scores_give_one() {
        let scores = [0.9, 0.8, 0.3, 0.1];
        let golds = [true, true, false, false];
        assert_eq!(auc_pr(&scores, &golds).unwrap(), 1.0);
    }

    #[test]
    fn single_positive_ranked_first_gives_one() {
        let mut scores = vec![0.99];
        let mut golds = vec![true];
        for i in 0..9 {
            scores.push(0.5 - i as f64 * 0.01);
            golds.push(false);
        }
        assert_eq!(auc_pr(&scores, &golds).unwrap(), 1.0);
    }

    #[test]
    fn random_scores_approach_positive_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 2000;
        let pos_rate = 0.3;
        let golds: Vec<bool> = (0..n).map(|_| rng.gen_bool(pos_rate)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ap = auc_pr(&scores, &golds).unwrap();
        let actual_rate = golds.iter().filter(|&&g| g).count() as f64 / n as f64;
        assert!((ap - actual_rate).abs() < 0.05, "ap {ap} vs rate {actual_rate}");
    }

    #[test]
    fn ties_processed_atomically() {
        // two positives and two negatives all sharing one score:
        // single group, precision 0.5 at recall 1 -> AP = 0.5
        let scores = [0.7, 0.7, 0.7, 0.7];
        let golds = [true, false, true, false];
        assert!((auc_pr(&scores, &golds).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monotone_transform_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let scores: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let golds: Vec<bool> = (0..60).map(|_| rng.gen_bool(0.4)).collect();
        if golds.iter().all(|&g| g) || golds.iter().all(|&g| !g) {
            return;
        }
        let a = auc_pr(&scores, &golds).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.5).exp() + 3.0).collect();
        let b = auc_pr(&transformed, &golds).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn degenerate_gold_sets_rejected() {
        assert!(auc_pr(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auc_pr(&[0.1, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn epochs_to_reach_basics() {
        assert_eq!(epochs_to_reach(&[0.1, 0.5, 0.8, 0.9, 0.9], 0.05), 4);
        assert_eq!(epochs_to_reach(&[0.8, 0.85, 0.8, 0.8, 0.8], 0.05), 1);
        assert_eq!(epochs_to_reach(&[0.5], 0.01), 1);
    }
}
