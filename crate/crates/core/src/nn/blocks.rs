//! Feature-map blocks: instance statistics, adaptive instance
//! normalization, and the embedded-Gaussian non-local block.

use ndarray::{Axis, Ix4, IxDyn};

use super::ops::tensor_from;
use super::tape::{Tape, Var};
use super::{NnError, Tensor};

/// Variance floor inside the instance standard deviation.
pub const INSTANCE_EPS: f64 = 1e-5;

impl Tape {
    /// Per-sample per-channel spatial mean: `[N,C,H,W] -> [N,C]`.
    pub fn instance_mean(&self, x: Var) -> Result<Var, NnError> {
        self.global_avg_pool(x)
    }

    /// Per-sample per-channel spatial standard deviation with the variance
    /// floor: `sigma = sqrt(mean((x - mu)^2) + eps)`.
    pub fn instance_std(&self, x: Var) -> Result<Var, NnError> {
        let sx = self.shape(x);
        if sx.len() != 4 {
            return Err(NnError::ShapeMismatch(format!("instance_std: {sx:?}")));
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let hw = (h * w) as f64;
        let value = self.with_value(x, |vx| {
            let xs = vx.as_slice().expect("standard layout");
            let mut out = vec![0.0f64; n * c];
            for p in 0..n * c {
                let plane = &xs[p * h * w..(p + 1) * h * w];
                let mu = plane.iter().sum::<f64>() / hw;
                let var = plane.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / hw;
                out[p] = (var + INSTANCE_EPS).sqrt();
            }
            tensor_from(&[n, c], out)
        });
        Ok(self.push(
            value,
            vec![x],
            Box::new(move |args| {
                let xs = args.parents[0].as_slice().expect("standard layout");
                let sig = args.value.as_slice().expect("standard layout");
                let g = args.grad.as_slice().expect("standard layout");
                let mut gx = vec![0.0f64; xs.len()];
                for p in 0..n * c {
                    let plane = &xs[p * h * w..(p + 1) * h * w];
                    let mu = plane.iter().sum::<f64>() / hw;
                    // d sigma / d x_i = (x_i - mu) / (HW * sigma)
                    let coeff = g[p] / (hw * sig[p]);
                    for (q, &v) in plane.iter().enumerate() {
                        gx[p * h * w + q] = coeff * (v - mu);
                    }
                }
                vec![tensor_from(&[n, c, h, w], gx)]
            }),
        ))
    }

    /// Adaptive instance normalization: re-statistics the content map `x`
    /// to match the style map `y` channel-wise:
    /// `adain(x, y) = sigma(y) * (x - mu(x)) / sigma(x) + mu(y)`.
    /// Spatial dims of `x` and `y` may differ; N and C must match.
    pub fn adain(&self, x: Var, y: Var) -> Result<Var, NnError> {
        let sx = self.shape(x);
        let sy = self.shape(y);
        if sx.len() != 4 || sy.len() != 4 || sx[0] != sy[0] || sx[1] != sy[1] {
            return Err(NnError::ShapeMismatch(format!("adain: {sx:?} vs {sy:?}")));
        }
        let mu_x = self.instance_mean(x)?;
        let sd_x = self.instance_std(x)?;
        let mu_y = self.instance_mean(y)?;
        let sd_y = self.instance_std(y)?;
        let centered = self.sub_nc(x, mu_x)?;
        let normalized = self.div_nc(centered, sd_x)?;
        let scaled = self.mul_nc(normalized, sd_y)?;
        self.add_nc(scaled, mu_y)
    }

    /// Embedded-Gaussian non-local block with a C/2 bottleneck and residual
    /// output: `z = W_z attend(x) + x`. With `vars.z` all-zero the block is
    /// the identity.
    pub fn nonlocal_block(&self, x: Var, vars: &NonLocalVars) -> Result<Var, NnError> {
        let sx = self.shape(x);
        if sx.len() != 4 {
            return Err(NnError::ShapeMismatch(format!("nonlocal_block: {sx:?}")));
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        if c % 2 != 0 || c < 2 {
            return Err(NnError::OddChannels(c));
        }
        let c2 = c / 2;
        for (name, var, rows) in [
            ("theta", vars.theta, c2),
            ("phi", vars.phi, c2),
            ("g", vars.g, c2),
        ] {
            let s = self.shape(var);
            if s != vec![rows, c] {
                return Err(NnError::ShapeMismatch(format!(
                    "nonlocal {name} projection: {s:?}, expected [{rows}, {c}]"
                )));
            }
        }
        if self.shape(vars.z) != vec![c, c2] {
            return Err(NnError::ShapeMismatch(format!(
                "nonlocal z projection: {:?}, expected [{c}, {c2}]",
                self.shape(vars.z)
            )));
        }
        let hw = h * w;
        let theta = self.conv1x1(x, vars.theta)?;
        let phi = self.conv1x1(x, vars.phi)?;
        let gproj = self.conv1x1(x, vars.g)?;
        let theta3 = self.reshape(theta, &[n, c2, hw])?;
        let phi3 = self.reshape(phi, &[n, c2, hw])?;
        let g3 = self.reshape(gproj, &[n, c2, hw])?;
        let theta_t = self.transpose_12(theta3)?; // [n, hw, c2]
        let logits = self.bmm(theta_t, phi3)?; // [n, hw, hw]; row i: theta_i . phi_j
        let attention = self.softmax_lastdim(logits)?;
        let attention_t = self.transpose_12(attention)?;
        let mixed = self.bmm(g3, attention_t)?; // [n, c2, hw]; column i = sum_j a_ij g_j
        let mixed4 = self.reshape(mixed, &[n, c2, h, w])?;
        let z = self.conv1x1(mixed4, vars.z)?;
        self.add(z, x)
    }
}

/// Bound parameter handles for one non-local block.
#[derive(Clone, Copy)]
pub struct NonLocalVars {
    pub theta: Var,
    pub phi: Var,
    pub g: Var,
    pub z: Var,
}

/// Forward-only attention matrix `[N, HW, HW]` for inspection; rows are
/// softmax distributions over key positions.
pub fn nonlocal_attention(x: &Tensor, w_theta: &Tensor, w_phi: &Tensor) -> Result<Tensor, NnError> {
    let x4 = x
        .view()
        .into_dimensionality::<Ix4>()
        .map_err(|_| NnError::ShapeMismatch(format!("attention input: {:?}", x.shape())))?;
    let (n, c, h, w) = x4.dim();
    let c2 = w_theta.shape()[0];
    if w_theta.shape() != [c2, c] || w_phi.shape() != [c2, c] {
        return Err(NnError::ShapeMismatch("attention projections".into()));
    }
    let hw = h * w;
    let mut out = Tensor::zeros(IxDyn(&[n, hw, hw]));
    let wt = w_theta.view().into_dimensionality::<ndarray::Ix2>().expect("2-d");
    let wp = w_phi.view().into_dimensionality::<ndarray::Ix2>().expect("2-d");
    for ni in 0..n {
        let xmat = x4
            .index_axis(Axis(0), ni)
            .into_shape_with_order((c, hw))
            .expect("contiguous");
        let theta = wt.dot(&xmat); // [c2, hw]
        let phi = wp.dot(&xmat); // [c2, hw]
        for i in 0..hw {
            let mut row: Vec<f64> = (0..hw)
                .map(|j| (0..c2).map(|k| theta[(k, i)] * phi[(k, j)]).sum())
                .collect();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            for (j, v) in row.iter().enumerate() {
                out[[ni, i, j]] = v / sum;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chacha;
    use rand::Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = chacha(seed);
        let n: usize = shape.iter().product();
        tensor_from(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
    }

    #[test]
    fn instance_stats_of_constant_channel() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_elem(IxDyn(&[1, 1, 3, 3]), 0.7));
        let mu = tape.instance_mean(x).unwrap();
        let sd = tape.instance_std(x).unwrap();
        assert!((tape.value(mu)[[0, 0]] - 0.7).abs() < 1e-12);
        assert!((tape.value(sd)[[0, 0]] - INSTANCE_EPS.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn instance_stats_of_three_values() {
        let tape = Tape::new();
        let x = tape.leaf(tensor_from(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]));
        let mu = tape.instance_mean(x).unwrap();
        let sd = tape.instance_std(x).unwrap();
        assert!((tape.value(mu)[[0, 0]] - 2.0).abs() < 1e-12);
        assert!((tape.value(sd)[[0, 0]] - (2.0 / 3.0 + INSTANCE_EPS).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn instance_stats_permutation_invariant() {
        let tape = Tape::new();
        let a = tape.leaf(tensor_from(&[1, 1, 2, 2], vec![0.1, 0.9, 0.4, 0.6]));
        let b = tape.leaf(tensor_from(&[1, 1, 2, 2], vec![0.6, 0.4, 0.9, 0.1]));
        assert_eq!(
            tape.value(tape.instance_mean(a).unwrap()),
            tape.value(tape.instance_mean(b).unwrap())
        );
        assert_eq!(
            tape.value(tape.instance_std(a).unwrap()),
            tape.value(tape.instance_std(b).unwrap())
        );
    }

    #[test]
    fn adain_self_is_identity_up_to_eps() {
        let tape = Tape::new();
        let x = tape.leaf(random_tensor(&[2, 3, 4, 4], 1));
        let y = tape.adain(x, x).unwrap();
        let xv = tape.value(x);
        let yv = tape.value(y);
        for (a, b) in xv.iter().zip(yv.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn adain_matches_style_statistics() {
        let tape = Tape::new();
        let x = tape.leaf(random_tensor(&[2, 3, 5, 5], 2));
        let y = tape.leaf(random_tensor(&[2, 3, 7, 3], 3));
        let out = tape.adain(x, y).unwrap();
        let mu_out = tape.value(tape.instance_mean(out).unwrap());
        let sd_out = tape.value(tape.instance_std(out).unwrap());
        let mu_y = tape.value(tape.instance_mean(y).unwrap());
        let sd_y = tape.value(tape.instance_std(y).unwrap());
        for (a, b) in mu_out.iter().zip(mu_y.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
        for (a, b) in sd_out.iter().zip(sd_y.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn adain_known_values() {
        // x channel {1,2,3} normalized to unit stats: {-1.2247, 0, 1.2247}.
        let tape = Tape::new();
        let x = tape.leaf(tensor_from(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]));
        // Style with mean 0 and std 1: {-1, 0, 1} has std sqrt(2/3), so use
        // a wider row whose std is 1: {-a, 0, a} with a = sqrt(3/2).
        let a = (1.5f64).sqrt();
        let y = tape.leaf(tensor_from(&[1, 1, 1, 3], vec![-a, 0.0, a]));
        let out = tape.value(tape.adain(x, y).unwrap());
        let expect = 1.224744871391589;
        assert!((out[[0, 0, 0, 0]] + expect).abs() < 1e-2);
        assert!((out[[0, 0, 0, 1]]).abs() < 1e-6);
        assert!((out[[0, 0, 0, 2]] - expect).abs() < 1e-2);
    }

    #[test]
    fn nonlocal_zero_projection_is_bit_identity() {
        let tape = Tape::new();
        let x = tape.leaf(random_tensor(&[2, 4, 3, 3], 4));
        let vars = NonLocalVars {
            theta: tape.leaf(random_tensor(&[2, 4], 5)),
            phi: tape.leaf(random_tensor(&[2, 4], 6)),
            g: tape.leaf(random_tensor(&[2, 4], 7)),
            z: tape.leaf(Tensor::zeros(IxDyn(&[4, 2]))),
        };
        let out = tape.nonlocal_block(x, &vars).unwrap();
        let xv = tape.value(x);
        let ov = tape.value(out);
        for (a, b) in xv.iter().zip(ov.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn nonlocal_single_position_closed_form() {
        // H = W = 1: softmax over one key is 1, so out = Wz Wg x + x.
        let tape = Tape::new();
        let x = tape.leaf(tensor_from(&[1, 2, 1, 1], vec![0.3, -0.7]));
        let wt = random_tensor(&[1, 2], 8);
        let wp = random_tensor(&[1, 2], 9);
        let wg = random_tensor(&[1, 2], 10);
        let wz = random_tensor(&[2, 1], 11);
        let vars = NonLocalVars {
            theta: tape.leaf(wt),
            phi: tape.leaf(wp),
            g: tape.leaf(wg.clone()),
            z: tape.leaf(wz.clone()),
        };
        let out = tape.value(tape.nonlocal_block(x, &vars).unwrap());
        let gval = wg[[0, 0]] * 0.3 + wg[[0, 1]] * (-0.7);
        let expect0 = wz[[0, 0]] * gval + 0.3;
        let expect1 = wz[[1, 0]] * gval - 0.7;
        assert!((out[[0, 0, 0, 0]] - expect0).abs() < 1e-12);
        assert!((out[[0, 1, 0, 0]] - expect1).abs() < 1e-12);
    }

    #[test]
    fn attention_rows_are_distributions() {
        let x = random_tensor(&[2, 4, 3, 3], 12);
        let wt = random_tensor(&[2, 4], 13);
        let wp = random_tensor(&[2, 4], 14);
        let att = nonlocal_attention(&x, &wt, &wp).unwrap();
        for ni in 0..2 {
            for i in 0..9 {
                let sum: f64 = (0..9).map(|j| att[[ni, i, j]]).sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!((0..9).all(|j| att[[ni, i, j]] >= 0.0));
            }
        }
    }

    #[test]
    fn nonlocal_rejects_odd_channels() {
        let tape = Tape::new();
        let x = tape.leaf(random_tensor(&[1, 3, 2, 2], 15));
        let vars = NonLocalVars {
            theta: tape.leaf(random_tensor(&[1, 3], 16)),
            phi: tape.leaf(random_tensor(&[1, 3], 17)),
            g: tape.leaf(random_tensor(&[1, 3], 18)),
            z: tape.leaf(random_tensor(&[3, 1], 19)),
        };
        assert!(matches!(
            tape.nonlocal_block(x, &vars),
            Err(NnError::OddChannels(3))
        ));
    }
}
