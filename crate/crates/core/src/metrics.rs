//! Evaluation metrics: Spearman and Pearson correlation, thresholded binary
//! accuracy, RMSE, and earth mover's distance between ordinal score
//! distributions.

use serde::Serialize;
use thiserror::Error;

use crate::curate::binarize_at;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("score vectors have different lengths ({predicted} vs {truth})")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("score vectors are empty")]
    Empty,
    #[error("score vectors contain NaN")]
    NaN,
    #[error("need at least two samples, got {0}")]
    TooShort(usize),
    #[error("{0} vector is constant; correlation undefined")]
    ConstantInput(&'static str),
    #[error("distribution invalid: {0}")]
    InvalidDistribution(String),
    #[error("distributions have different bucket counts ({0} vs {1})")]
    BucketMismatch(usize, usize),
}

/// Paired predicted/ground-truth score vectors of equal nonzero length.
#[derive(Debug, Clone)]
pub struct PairedScores {
    predicted: Vec<f64>,
    truth: Vec<f64>,
}

impl PairedScores {
    pub fn new(predicted: Vec<f64>, truth: Vec<f64>) -> Result<Self, MetricsError> {
        if predicted.len() != truth.len() {
            return Err(MetricsError::LengthMismatch {
                predicted: predicted.len(),
                truth: truth.len(),
            });
        }
        if predicted.is_empty() {
            return Err(MetricsError::Empty);
        }
        if predicted.iter().chain(truth.iter()).any(|v| v.is_nan()) {
            return Err(MetricsError::NaN);
        }
        Ok(Self { predicted, truth })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }
}

/// Average ranks (1-based); ties receive the mean of the positions they
/// occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("no NaN"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean rank.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_raw(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(MetricsError::ConstantInput("predicted"));
    }
    if syy == 0.0 {
        return Err(MetricsError::ConstantInput("truth"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(p: &PairedScores) -> Result<f64, MetricsError> {
    if p.len() < 2 {
        return Err(MetricsError::TooShort(p.len()));
    }
    let rp = average_ranks(&p.predicted);
    let rt = average_ranks(&p.truth);
    pearson_raw(&rp, &rt)
}

/// Pearson linear correlation.
pub fn pcc(p: &PairedScores) -> Result<f64, MetricsError> {
    if p.len() < 2 {
        return Err(MetricsError::TooShort(p.len()));
    }
    pearson_raw(&p.predicted, &p.truth)
}

/// Fraction of samples whose predicted and true labels agree after
/// thresholding (strictly-above is the positive class).
pub fn accuracy(p: &PairedScores, threshold: f64) -> f64 {
    let agree = p
        .predicted
        .iter()
        .zip(&p.truth)
        .filter(|(&a, &b)| binarize_at(a, threshold) == binarize_at(b, threshold))
        .count();
    agree as f64 / p.len() as f64
}

/// Default binary threshold of 5 on the [0, 10] scale.
pub const DEFAULT_THRESHOLD: f64 = 5.0;

/// Root mean squared error.
pub fn rmse(p: &PairedScores) -> f64 {
    let ss: f64 = p
        .predicted
        .iter()
        .zip(&p.truth)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    (ss / p.len() as f64).sqrt()
}

/// A probability vector over ordered score buckets.
#[derive(Debug, Clone)]
pub struct ScoreDistribution {
    probabilities: Vec<f64>,
}

impl ScoreDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, MetricsError> {
        if probabilities.is_empty() {
            return Err(MetricsError::InvalidDistribution("no buckets".into()));
        }
        if probabilities.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(MetricsError::InvalidDistribution(
                "negative or non-finite probability".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MetricsError::InvalidDistribution(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probabilities })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Earth mover's distance between ordinal distributions: the mean absolute
/// difference of cumulative sums (r = 1 on the bucket line).
pub fn emd(a: &ScoreDistribution, b: &ScoreDistribution) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::BucketMismatch(a.len(), b.len()));
    }
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut acc = 0.0;
    for (&pa, &pb) in a.probabilities.iter().zip(&b.probabilities) {
        ca += pa;
        cb += pb;
        acc += (ca - cb).abs();
    }
    Ok(acc / a.len() as f64)
}

/// The metric bundle reported by evaluation runs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricReport {
    pub srcc: f64,
    pub pcc: f64,
    pub accuracy: f64,
    pub rmse: f64,
}

/// Compute the full report at the default threshold.
pub fn report(p: &PairedScores) -> Result<MetricReport, MetricsError> {
    Ok(MetricReport {
        srcc: srcc(p)?,
        pcc: pcc(p)?,
        accuracy: accuracy(p, DEFAULT_THRESHOLD),
        rmse: rmse(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(p: &[f64], t: &[f64]) -> PairedScores {
        PairedScores::new(p.to_vec(), t.to_vec()).unwrap()
    }

    #[test]
    fn srcc_perfect_and_reversed() {
        let t = [1.0, 2.0, 3.0, 7.0, 9.0];
        assert!((srcc(&ps(&t, &t)).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = t.iter().rev().copied().collect();
        assert!((srcc(&ps(&rev, &t)).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn srcc_constant_vector_errors() {
        let err = srcc(&ps(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0])).unwrap_err();
        assert!(matches!(err, MetricsError::ConstantInput("predicted")));
    }

    #[test]
    fn pcc_affine_invariance() {
        let t = [0.5, 1.5, 2.0, 4.0];
        let p: Vec<f64> = t.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pcc(&ps(&p, &t)).unwrap() - 1.0).abs() < 1e-12);
        let n: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pcc(&ps(&n, &t)).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_counting() {
        let t = [6.0, 6.0, 4.0, 4.0];
        assert_eq!(accuracy(&ps(&t, &t), 5.0), 1.0);
        let wrong = [4.0, 4.0, 6.0, 6.0];
        assert_eq!(accuracy(&ps(&wrong, &t), 5.0), 0.0);
        let mixed = [6.0, 6.0, 4.0, 6.0];
        assert_eq!(accuracy(&ps(&mixed, &t), 5.0), 0.75);
    }

    #[test]
    fn rmse_cases() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rmse(&ps(&t, &t)), 0.0);
        let off: Vec<f64> = t.iter().map(|v| v + 0.5).collect();
        assert!((rmse(&ps(&off, &t)) - 0.5).abs() < 1e-12);
        let p = [1.0, 2.0, 4.0, 6.0];
        let expect = ((0.0 + 0.0 + 1.0 + 4.0) / 4.0f64).sqrt();
        assert!((rmse(&ps(&p, &t)) - expect).abs() < 1e-12);
    }

    #[test]
    fn emd_point_masses() {
        let mut a = vec![0.0; 10];
        let mut b = vec![0.0; 10];
        a[3] = 1.0;
        b[4] = 1.0;
        let a = ScoreDistribution::new(a).unwrap();
        let b = ScoreDistribution::new(b).unwrap();
        assert!((emd(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(emd(&a, &b).unwrap(), emd(&b, &a).unwrap());
        assert_eq!(emd(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distribution_validation() {
        assert!(ScoreDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(ScoreDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ScoreDistribution::new(vec![-0.1, 1.1]).is_err());
        let a = ScoreDistribution::new(vec![0.5, 0.5]).unwrap();
        let b = ScoreDistribution::new(vec![1.0]).unwrap();
        assert!(matches!(emd(&a, &b), Err(MetricsError::BucketMismatch(2, 1))));
    }

    #[test]
    fn paired_scores_validation() {
        assert!(PairedScores::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(PairedScores::new(vec![], vec![]).is_err());
        assert!(PairedScores::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        // values 10, 20, 20, 30 -> ranks 1, 2.5, 2.5, 4
        let r = average_ranks(&[10.0, 20.0, 20.0, 30.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn emd_is_a_metric_on_the_simplex(
            raw_a in proptest::collection::vec(0.01f64..1.0, 6),
            raw_b in proptest::collection::vec(0.01f64..1.0, 6),
            raw_c in proptest::collection::vec(0.01f64..1.0, 6),
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                ScoreDistribution::new(v.iter().map(|x| x / s).collect()).unwrap()
            };
            let (a, b, c) = (norm(&raw_a), norm(&raw_b), norm(&raw_c));
            let dab = emd(&a, &b).unwrap();
            let dba = emd(&b, &a).unwrap();
            let dac = emd(&a, &c).unwrap();
            let dcb = emd(&c, &b).unwrap();
            prop_assert!((dab - dba).abs() < 1e-12);
            prop_assert!(emd(&a, &a).unwrap() < 1e-12);
            prop_assert!(dab <= dac + dcb + 1e-12);
        }

        #[test]
        fn accuracy_invariant_to_side_preserving_transforms(
            t in proptest::collection::vec(0.0f64..10.0, 4..20),
        ) {
            let p: Vec<f64> = t.iter().map(|&v| v * 0.3 + 3.5).collect();
            // v > 5 iff 0.3 v + 3.5 > 5 does not hold in general, so build a
            // transform that does preserve sides: pull toward 5 by half.
            let q: Vec<f64> = t.iter().map(|&v| 5.0 + (v - 5.0) * 0.5).collect();
            let base = ps(&t, &t);
            let pulled = PairedScores::new(q, t.clone()).unwrap();
            prop_assert_eq!(accuracy(&base, 5.0).to_bits(), accuracy(&pulled, 5.0).to_bits());
            let _ = p;
        }
    }
}
