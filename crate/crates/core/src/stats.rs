//! Batch statistics: maximum, median, solved flag and attainment probability.

use crate::error::{Error, Result};

/// Median with the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub max: f64,
    pub median: f64,
    /// Fraction of the batch equal to the batch maximum.
    pub probability_of_max: f64,
    pub best_known: Option<i64>,
}

impl BatchStats {
    /// Batch maximum equals the best-known value.
    pub fn solved(&self) -> Option<bool> {
        self.best_known.map(|b| self.max == b as f64)
    }

    /// `max − best_known`, negative when short of the best-known value.
    pub fn difference(&self) -> Option<f64> {
        self.best_known.map(|b| self.max - b as f64)
    }

    pub fn normalized_max(&self) -> Option<f64> {
        self.best_known.map(|b| self.max / b as f64)
    }

    pub fn normalized_median(&self) -> Option<f64> {
        self.best_known.map(|b| self.median / b as f64)
    }
}

pub fn evaluate_batch_stats(cuts: &[f64], best_known: Option<i64>) -> Result<BatchStats> {
    if cuts.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let max = cuts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hits = cuts.iter().filter(|&&c| c == max).count();
    Ok(BatchStats {
        max,
        median: median(cuts),
        probability_of_max: hits as f64 / cuts.len() as f64,
        best_known,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g1_shaped_batch() {
        let mut cuts = vec![11624.0; 223];
        cuts.extend(std::iter::repeat_n(11610.0, 33));
        let s = evaluate_batch_stats(&cuts, Some(11624)).unwrap();
        assert_eq!(s.solved(), Some(true));
        assert!((s.probability_of_max - 223.0 / 256.0).abs() < 1e-15);
        assert!((s.probability_of_max - 0.87).abs() < 0.01);
        assert_eq!(s.median, 11624.0);
    }

    #[test]
    fn all_at_best_known() {
        let s = evaluate_batch_stats(&[2000.0; 16], Some(2000)).unwrap();
        assert_eq!(s.probability_of_max, 1.0);
        assert_eq!(s.solved(), Some(true));
        assert_eq!(s.difference(), Some(0.0));
    }

    #[test]
    fn short_of_best_known() {
        let s = evaluate_batch_stats(&[2050.0, 2049.0, 2048.0], Some(2054)).unwrap();
        assert_eq!(s.solved(), Some(false));
        assert_eq!(s.difference(), Some(-4.0));
        assert!(s.normalized_max().unwrap() >= s.normalized_median().unwrap());
    }

    #[test]
    fn median_and_errors() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(evaluate_batch_stats(&[], None).is_err());
        assert_eq!(evaluate_batch_stats(&[1.0], None).unwrap().solved(), None);
    }
}
