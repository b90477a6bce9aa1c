use crate::error::{Error, Result};
use crate::nn::Tensor;

fn check_pair(preds: &[usize], labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Metric("empty label set".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Unweighted mean of per-class F1 over `num_classes` classes. A class with
/// no true positives scores 0, including classes that never occur.
pub fn macro_f1(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    check_pair(preds, labels)?;
    if num_classes == 0 {
        return Err(Error::InvalidArgument(
            "num_classes must be positive".into(),
        ));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut true_count = vec![0usize; num_classes];
    for (&p, &y) in preds.iter().zip(labels) {
        if p >= num_classes || y >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "class id {} out of range for {num_classes} classes",
                p.max(y)
            )));
        }
        pred_count[p] += 1;
        true_count[y] += 1;
        if p == y {
            tp[p] += 1;
        }
    }
    let total: f64 = (0..num_classes)
        .map(|c| {
            let denom = pred_count[c] + true_count[c];
            if tp[c] == 0 || denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / num_classes as f64)
}

/// Midranks (1-based) of `scores`; tied values share the mean of their ranks.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Binary AUC through the Mann-Whitney rank statistic.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(
            "AUC needs both positive and negative examples".into(),
        ));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Macro one-vs-rest AUC. `probs` has one row per label. Classes that do
/// not occur in `labels` have no defined AUC and are left out of the mean.
pub fn auc_macro_ovr(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Metric("empty label set".into()));
    }
    if probs.rows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let c = probs.cols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::InvalidArgument(format!(
            "class id {bad} out of range for {c} classes"
        )));
    }
    let mut present = vec![false; c];
    for &y in labels {
        present[y] = true;
    }
    let classes: Vec<usize> = (0..c).filter(|&k| present[k]).collect();
    if classes.len() < 2 {
        return Err(Error::Metric(
            "AUC is undefined for single-class labels".into(),
        ));
    }
    let mut total = 0.0;
    for &k in &classes {
        let scores: Vec<f64> = (0..probs.rows()).map(|i| probs.get(i, k)).collect();
        let positive: Vec<bool> = labels.iter().map(|&y| y == k).collect();
        total += binary_auc(&scores, &positive)?;
    }
    Ok(total / classes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(macro_f1(&y, &y, 3).unwrap(), 1.0);
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        let y = [0, 0, 1, 1, 2, 2];
        let p = [0; 6];
        assert_abs_diff_eq!(accuracy(&p, &y).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(macro_f1(&p, &y, 3).unwrap(), 0.5 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_labels_are_an_error() {
        assert!(accuracy(&[], &[]).is_err());
        assert!(macro_f1(&[], &[], 2).is_err());
    }

    #[test]
    fn ordered_scores_give_unit_auc() {
        let probs = Tensor::from_rows(&[
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.3, 0.7],
            vec![0.1, 0.9],
        ]);
        assert_eq!(auc_macro_ovr(&probs, &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn ties_use_midranks() {
        // One positive tied with one of two negatives: (1 + 0.5) / 2.
        let auc = binary_auc(&[0.5, 0.5, 0.1], &[true, false, false]).unwrap();
        assert_eq!(auc, 0.75);
    }

    #[test]
    fn single_class_auc_is_an_error() {
        let probs = Tensor::from_rows(&[vec![0.5, 0.5], vec![0.4, 0.6]]);
        assert!(auc_macro_ovr(&probs, &[1, 1]).is_err());
    }

    #[test]
    fn random_scores_are_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1000;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.gen();
            rows.push(vec![a, 1.0 - a]);
            labels.push(rng.gen_range(0..2));
        }
        let auc = auc_macro_ovr(&Tensor::from_rows(&rows), &labels).unwrap();
        assert!((auc - 0.5).abs() < 0.05, "auc {auc}");
    }
}
