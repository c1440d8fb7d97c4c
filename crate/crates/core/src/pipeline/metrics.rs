use crate::error::{Error, Result};

/// Support-weighted mean of per-label F1 scores.
///
/// Label `j` has `F1_j = 2 TP / (2 TP + FP + FN)`, taken as 0 when the
/// denominator is 0, and weight `support_j / Σ support` where `support_j`
/// counts true positives in `truth`. Labels without support carry no
/// weight. If no label has support the score is 0.
pub fn weighted_f1(predictions: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<f64> {
    if predictions.is_empty() || truth.is_empty() {
        return Err(Error::Empty("weighted_f1 needs at least one sample".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::shape(
            "weighted_f1",
            format!("{} predictions for {} truth rows", predictions.len(), truth.len()),
        ));
    }
    let labels = truth[0].len();
    if predictions.iter().chain(truth).any(|r| r.len() != labels) {
        return Err(Error::shape("weighted_f1", "label dimensions differ"));
    }
    let mut weighted = 0.0;
    let mut total_support = 0usize;
    for j in 0..labels {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (p, t) in predictions.iter().zip(truth) {
            match (p[j] != 0, t[j] != 0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let support = tp + fn_;
        if support == 0 {
            continue;
        }
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
        weighted += f1 * support as f64;
        total_support += support;
    }
    Ok(if total_support == 0 { 0.0 } else { weighted / total_support as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let truth = vec![vec![1, 0], vec![1, 0]];
        assert!((weighted_f1(&[vec![1, 0], vec![0, 0]], &truth).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(weighted_f1(&truth, &truth).unwrap(), 1.0);
        assert_eq!(weighted_f1(&[vec![0, 0], vec![0, 0]], &truth).unwrap(), 0.0);
        assert!(weighted_f1(&[], &[]).is_err());
        assert!(weighted_f1(&[vec![1]], &truth).is_err());
    }
}
