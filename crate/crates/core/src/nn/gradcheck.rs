//! Central finite-difference verification utilities.
//!
//! These helpers re-evaluate a forward closure; they never touch the tape
//! internals, so they are an independent check of the analytic gradients.

use super::Tensor;

/// Relative error with a unit floor: |a - b| / max(|a|, |b|, 1).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Full central-difference gradient of a scalar function at `x`.
pub fn numeric_grad(f: &mut dyn FnMut(&Tensor) -> f64, x: &Tensor, eps: f64) -> Tensor {
    let mut grad = Tensor::zeros(x.raw_dim());
    let mut probe = x.clone();
    let n = x.len();
    for i in 0..n {
        let slice = probe.as_slice_mut().expect("standard layout");
        let orig = slice[i];
        slice[i] = orig + eps;
        let fp = f(&probe);
        probe.as_slice_mut().expect("standard layout")[i] = orig - eps;
        let fm = f(&probe);
        probe.as_slice_mut().expect("standard layout")[i] = orig;
        grad.as_slice_mut().expect("standard layout")[i] = (fp - fm) / (2.0 * eps);
    }
    grad
}

/// Maximum elementwise relative error between two co-shaped tensors.
pub fn max_rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Outcome of a coordinate-by-coordinate check with kink detection.
#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    /// Max relative error over coordinates where the function is locally C1.
    pub max_rel_err: f64,
    /// Coordinates where the two-step central differences disagreed,
    /// indicating a relu/maxpool kink inside the stencil; these carry no
    /// information about the analytic gradient and are excluded.
    pub kinked: usize,
    pub total: usize,
}

impl CheckReport {
    /// Every smooth coordinate under `tol` and kinks below one percent.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol && (self.kinked as f64) < 0.01 * self.total as f64 + 1.0
    }
}

/// Compare `analytic` against central differences of `f` at `x`, probing
/// each coordinate with step sizes `eps` and `eps / 2`. A coordinate is
/// counted as kinked (and skipped) when the two estimates disagree by more
/// than 1e-3 relative: piecewise-linear seams move the estimate by O(slope
/// jump) while smooth curvature moves it by O(eps^2).
pub fn check_coords(
    f: &mut dyn FnMut(&Tensor) -> f64,
    x: &Tensor,
    analytic: &Tensor,
    eps: f64,
) -> CheckReport {
    assert_eq!(analytic.shape(), x.shape());
    let mut probe = x.clone();
    let n = x.len();
    let mut max_err = 0.0f64;
    let mut kinked = 0usize;
    for i in 0..n {
        let orig = probe.as_slice().expect("standard layout")[i];
        let mut central = |h: f64, probe: &mut Tensor| -> f64 {
            probe.as_slice_mut().expect("standard layout")[i] = orig + h;
            let fp = f(probe);
            probe.as_slice_mut().expect("standard layout")[i] = orig - h;
            let fm = f(probe);
            probe.as_slice_mut().expect("standard layout")[i] = orig;
            (fp - fm) / (2.0 * h)
        };
        let g1 = central(eps, &mut probe);
        let g2 = central(eps / 2.0, &mut probe);
        if rel_err(g1, g2) > 1e-3 {
            kinked += 1;
            continue;
        }
        let a = analytic.as_slice().expect("standard layout")[i];
        max_err = max_err.max(rel_err(a, g2));
    }
    CheckReport {
        max_rel_err: max_err,
        kinked,
        total: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn numeric_grad_of_quadratic() {
        let x = Tensor::from_shape_vec(IxDyn(&[3]), vec![1.0, -2.0, 0.5]).unwrap();
        let mut f = |t: &Tensor| t.iter().map(|v| v * v).sum::<f64>();
        let g = numeric_grad(&mut f, &x, 1e-5);
        for (gv, xv) in g.iter().zip(x.iter()) {
            assert!(rel_err(*gv, 2.0 * xv) < 1e-8);
        }
    }

    #[test]
    fn kink_detection_flags_abs_at_zero() {
        let x = Tensor::from_shape_vec(IxDyn(&[2]), vec![0.0, 3.0]).unwrap();
        let analytic = Tensor::from_shape_vec(IxDyn(&[2]), vec![0.0, 1.0]).unwrap();
        let mut f = |t: &Tensor| t.iter().map(|v| v.abs()).sum::<f64>();
        let report = check_coords(&mut f, &x, &analytic, 1e-4);
        assert_eq!(report.kinked, 1);
        assert!(report.max_rel_err < 1e-8);
    }
}
