use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Unweighted mean of per-class F1 over classes seen in either input.
pub fn macro_f1(preds: &[usize], truths: &[usize]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch(preds.len(), truths.len()));
    }
    if preds.is_empty() {
        return Err(Error::EmptySet);
    }
    let classes: BTreeSet<usize> = preds.iter().chain(truths).copied().collect();
    let mut sum = 0.0;
    for &c in &classes {
        let (mut tp, mut fp, mut fnc) = (0usize, 0usize, 0usize);
        for (&p, &t) in preds.iter().zip(truths) {
            match (p == c, t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnc += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fnc;
        if denom > 0 {
            sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(sum / classes.len() as f64)
}

pub fn accuracy(preds: &[usize], truths: &[usize]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch(preds.len(), truths.len()));
    }
    if preds.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(preds.iter().zip(truths).filter(|(p, t)| p == t).count() as f64 / preds.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_small_case() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        let f = macro_f1(&[0, 0, 1], &[0, 1, 1]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_scores_zero() {
        // class 1 is predicted but never true
        assert_eq!(macro_f1(&[1, 1], &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(macro_f1(&[0], &[0, 1]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
