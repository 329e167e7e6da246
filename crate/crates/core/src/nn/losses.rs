//! Losses: softmax cross-entropy over distortion classes, MSE, and the
//! intensity-detection hinge algebra (plain-real and tape forms).

use ndarray::IxDyn;

use super::ops::tensor_from;
use super::tape::{Tape, Var};
use super::{NnError, Tensor};

impl Tape {
    /// Mean negative log softmax probability of the true class:
    /// `logits[N,K]`, one label per row.
    pub fn softmax_cross_entropy(&self, logits: Var, labels: &[usize]) -> Result<Var, NnError> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(NnError::ShapeMismatch(format!(
                "softmax_cross_entropy: logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let (n, k) = (s[0], s[1]);
        for &l in labels {
            if l >= k {
                return Err(NnError::LabelOutOfRange { label: l, classes: k });
            }
        }
        let labels = labels.to_vec();
        let value = self.with_value(logits, |lv| {
            let xs = lv.as_slice().expect("standard layout");
            let mut total = 0.0;
            for (r, &label) in labels.iter().enumerate() {
                let row = &xs[r * k..(r + 1) * k];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[label];
            }
            Tensor::from_elem(IxDyn(&[]), total / n as f64)
        });
        Ok(self.push(
            value,
            vec![logits],
            Box::new(move |args| {
                let xs = args.parents[0].as_slice().expect("standard layout");
                let g = args.grad.iter().next().copied().expect("scalar grad");
                let mut out = vec![0.0f64; xs.len()];
                for (r, &label) in labels.iter().enumerate() {
                    let row = &xs[r * k..(r + 1) * k];
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    for j in 0..k {
                        let p = (row[j] - m).exp() / sum;
                        let onehot = if j == label { 1.0 } else { 0.0 };
                        out[r * k + j] = g * (p - onehot) / n as f64;
                    }
                }
                vec![tensor_from(&[n, k], out)]
            }),
        ))
    }

    /// Mean squared error of `pred[N]` against constant targets.
    pub fn mse(&self, pred: Var, truth: &[f64]) -> Result<Var, NnError> {
        let s = self.shape(pred);
        let n: usize = s.iter().product();
        if n != truth.len() {
            return Err(NnError::ShapeMismatch(format!(
                "mse: pred {s:?} vs {} targets",
                truth.len()
            )));
        }
        let truth = truth.to_vec();
        let value = self.with_value(pred, |pv| {
            let ss: f64 = pv
                .iter()
                .zip(&truth)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            Tensor::from_elem(IxDyn(&[]), ss / n as f64)
        });
        Ok(self.push(
            value,
            vec![pred],
            Box::new(move |args| {
                let g = args.grad.iter().next().copied().expect("scalar grad");
                let mut out = args.parents[0].clone();
                for (v, &t) in out.iter_mut().zip(&truth) {
                    *v = g * 2.0 * (*v - t) / n as f64;
                }
                vec![out]
            }),
        ))
    }

    /// Elementwise hinge `max(0, 1 + d1 - d2)` over co-shaped distance
    /// vectors.
    pub fn hinge_pair(&self, d1: Var, d2: Var) -> Result<Var, NnError> {
        let diff = self.sub(d1, d2)?;
        let shifted = self.add_scalar(diff, 1.0);
        Ok(self.relu(shifted))
    }
}

/// Margin-1 hinge between a lighter and a heavier distortion distance:
/// `max(0, 1 + d1 - d2)`.
pub fn triplet_intensity_loss(d1: f64, d2: f64) -> f64 {
    (1.0 + d1 - d2).max(0.0)
}

/// Three-level intensity detection loss: the two adjacent hinges minus 1.
/// Minimum value is -1 when both margins are satisfied.
pub fn detection_loss(d1: f64, d2: f64, d3: f64) -> f64 {
    triplet_intensity_loss(d1, d2) + triplet_intensity_loss(d2, d3) - 1.0
}

/// Combined pretraining objective `L_cls + lambda * L_det`.
pub fn combined_pretrain_loss(l_cls: f64, l_det: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    l_cls + lambda * l_det
}

/// Squared Euclidean distance between two L2-normalized feature vectors;
/// rejects inputs whose norm is not within 1e-6 of 1. Range [0, 4].
pub fn squared_feature_distance(p: &[f64], q: &[f64]) -> Result<f64, NnError> {
    if p.len() != q.len() {
        return Err(NnError::ShapeMismatch(format!(
            "squared_feature_distance: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for (row, v) in [(0usize, p), (1usize, q)] {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(NnError::NotNormalized { row, norm });
        }
    }
    Ok(p.iter().zip(q).map(|(&a, &b)| (a - b) * (a - b)).sum())
}

/// Plain mean squared error over slices.
pub fn mse_loss(pred: &[f64], truth: &[f64]) -> Result<f64, NnError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(NnError::ShapeMismatch(format!(
            "mse_loss: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let tape = Tape::new();
        let logits = tape.leaf(tensor_from(&[2, 30], vec![0.25; 60]));
        let loss = tape.softmax_cross_entropy(logits, &[3, 17]).unwrap();
        assert!((tape.scalar(loss) - (30.0f64).ln()).abs() < 1e-12);
        assert!(((30.0f64).ln() - 3.4012).abs() < 1e-4);
    }

    #[test]
    fn confident_logits_give_tiny_loss() {
        let tape = Tape::new();
        let mut row = vec![0.0f64; 30];
        row[7] = 20.0;
        let logits = tape.leaf(tensor_from(&[1, 30], row.clone()));
        let loss = tape.softmax_cross_entropy(logits, &[7]).unwrap();
        // ln(1 + 29 e^-20) = 5.98e-8.
        assert!(tape.scalar(loss) < 1e-7);
        let tape2 = Tape::new();
        row[7] = 25.0;
        let logits2 = tape2.leaf(tensor_from(&[1, 30], row));
        let loss2 = tape2.softmax_cross_entropy(logits2, &[7]).unwrap();
        assert!(tape2.scalar(loss2) < 1e-8);
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let tape = Tape::new();
        let logits = tape.leaf(tensor_from(&[1, 5], vec![0.0; 5]));
        assert!(matches!(
            tape.softmax_cross_entropy(logits, &[5]),
            Err(NnError::LabelOutOfRange { label: 5, classes: 5 })
        ));
    }

    #[test]
    fn triplet_hinge_fixed_points() {
        assert_eq!(triplet_intensity_loss(0.3, 0.3), 1.0);
        assert_eq!(triplet_intensity_loss(0.1, 1.5), 0.0);
        assert!((triplet_intensity_loss(0.5, 0.8) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn detection_loss_fixed_points() {
        assert_eq!(detection_loss(0.5, 0.5, 0.5), 1.0);
        assert_eq!(detection_loss(0.0, 1.5, 3.0), -1.0);
        assert!((detection_loss(0.2, 0.9, 1.1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn combined_loss_algebra() {
        assert_eq!(combined_pretrain_loss(3.0, 123.0, 0.0), 3.0);
        assert!((combined_pretrain_loss(3.0, 1.0, 0.1) - 3.1).abs() < 1e-12);
        assert!((combined_pretrain_loss(2.0, -1.0, 0.1) - 1.9).abs() < 1e-12);
    }

    #[test]
    fn squared_distance_on_unit_vectors() {
        let u = [1.0, 0.0, 0.0];
        assert_eq!(squared_feature_distance(&u, &u).unwrap(), 0.0);
        let v = [-1.0, 0.0, 0.0];
        assert_eq!(squared_feature_distance(&u, &v).unwrap(), 4.0);
        let w = [0.0, 1.0, 0.0];
        assert_eq!(squared_feature_distance(&u, &w).unwrap(), 2.0);
        let bad = [0.5, 0.0, 0.0];
        assert!(matches!(
            squared_feature_distance(&u, &bad),
            Err(NnError::NotNormalized { row: 1, .. })
        ));
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tape_hinge_matches_plain_values() {
        let tape = Tape::new();
        let d1 = tape.leaf(tensor_from(&[3], vec![0.3, 0.1, 0.5]));
        let d2 = tape.leaf(tensor_from(&[3], vec![0.3, 1.5, 0.8]));
        let h = tape.hinge_pair(d1, d2).unwrap();
        let hv = tape.value(h);
        for (i, (&a, &b)) in [0.3, 0.1, 0.5].iter().zip(&[0.3, 1.5, 0.8]).enumerate() {
            assert!((hv[[i]] - triplet_intensity_loss(a, b)).abs() < 1e-15);
        }
    }
}
