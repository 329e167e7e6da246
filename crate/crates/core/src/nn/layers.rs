//! Differentiable layers: convolution, pooling, linear, and bilinear resize.

use super::ops::{as_2d, tensor_from};
use super::tape::{Tape, Var};
use super::NnError;

fn bad_shape(op: &str, detail: String) -> NnError {
    NnError::ShapeMismatch(format!("{op}: {detail}"))
}

impl Tape {
    /// 2-d convolution of `x[N,Ci,H,W]` with `w[Co,Ci,kh,kw]` and bias
    /// `b[Co]`, zero padding `pad`, square stride `stride`.
    pub fn conv2d(&self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var, NnError> {
        let sx = self.shape(x);
        let sw = self.shape(w);
        let sb = self.shape(b);
        if sx.len() != 4 || sw.len() != 4 || sb.len() != 1 {
            return Err(bad_shape("conv2d", format!("x{sx:?} w{sw:?} b{sb:?}")));
        }
        let (n, ci, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (co, wci, kh, kw) = (sw[0], sw[1], sw[2], sw[3]);
        if wci != ci || sb[0] != co {
            return Err(bad_shape("conv2d", format!("channels x{ci} w{wci} b{}", sb[0])));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw || stride == 0 {
            return Err(bad_shape("conv2d", format!("kernel {kh}x{kw} too large for {h}x{wd} pad {pad}")));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;

        let value = self.with_value(x, |vx| {
            self.with_value(w, |vw| {
                self.with_value(b, |vb| {
                    let xs = vx.as_slice().expect("standard layout");
                    let ws = vw.as_slice().expect("standard layout");
                    let bs = vb.as_slice().expect("standard layout");
                    let mut out = vec![0.0f64; n * co * oh * ow];
                    for ni in 0..n {
                        for oc in 0..co {
                            let wbase = oc * ci * kh * kw;
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let mut acc = bs[oc];
                                    for ic in 0..ci {
                                        let xbase = (ni * ci + ic) * h * wd;
                                        let kbase = wbase + ic * kh * kw;
                                        for ky in 0..kh {
                                            let iy = (oy * stride + ky) as isize - pad as isize;
                                            if iy < 0 || iy >= h as isize {
                                                continue;
                                            }
                                            let row = xbase + iy as usize * wd;
                                            for kx in 0..kw {
                                                let ix = (ox * stride + kx) as isize - pad as isize;
                                                if ix < 0 || ix >= wd as isize {
                                                    continue;
                                                }
                                                acc += xs[row + ix as usize] * ws[kbase + ky * kw + kx];
                                            }
                                        }
                                    }
                                    out[((ni * co + oc) * oh + oy) * ow + ox] = acc;
                                }
                            }
                        }
                    }
                    tensor_from(&[n, co, oh, ow], out)
                })
            })
        });

        Ok(self.push(
            value,
            vec![x, w, b],
            Box::new(move |args| {
                let g = args.grad.as_slice().expect("standard layout");
                let xs = args.parents[0].as_slice().expect("standard layout");
                let ws = args.parents[1].as_slice().expect("standard layout");
                let mut gx = vec![0.0f64; xs.len()];
                let mut gw = vec![0.0f64; ws.len()];
                let mut gb = vec![0.0f64; co];
                for ni in 0..n {
                    for oc in 0..co {
                        let wbase = oc * ci * kh * kw;
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let go = g[((ni * co + oc) * oh + oy) * ow + ox];
                                gb[oc] += go;
                                for ic in 0..ci {
                                    let xbase = (ni * ci + ic) * h * wd;
                                    let kbase = wbase + ic * kh * kw;
                                    for ky in 0..kh {
                                        let iy = (oy * stride + ky) as isize - pad as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        let row = xbase + iy as usize * wd;
                                        for kx in 0..kw {
                                            let ix = (ox * stride + kx) as isize - pad as isize;
                                            if ix < 0 || ix >= wd as isize {
                                                continue;
                                            }
                                            gw[kbase + ky * kw + kx] += go * xs[row + ix as usize];
                                            gx[row + ix as usize] += go * ws[kbase + ky * kw + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                vec![
                    tensor_from(&[n, ci, h, wd], gx),
                    tensor_from(&[co, ci, kh, kw], gw),
                    tensor_from(&[co], gb),
                ]
            }),
        ))
    }

    /// Pointwise channel mix: `x[N,C,H,W]` with `w[C2,C]` -> `[N,C2,H,W]`.
    pub fn conv1x1(&self, x: Var, w: Var) -> Result<Var, NnError> {
        let sx = self.shape(x);
        let sw = self.shape(w);
        if sx.len() != 4 || sw.len() != 2 || sw[1] != sx[1] {
            return Err(bad_shape("conv1x1", format!("x{sx:?} w{sw:?}")));
        }
        let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let c2 = sw[0];
        let hw = h * wd;
        let value = self.with_value(x, |vx| {
            self.with_value(w, |vw| {
                let wmat = as_2d(vw);
                let xs = vx.as_slice().expect("standard layout");
                let mut out = vec![0.0f64; n * c2 * hw];
                for ni in 0..n {
                    let xmat = ndarray::ArrayView2::from_shape((c, hw), &xs[ni * c * hw..(ni + 1) * c * hw])
                        .expect("contiguous");
                    let prod = wmat.dot(&xmat);
                    out[ni * c2 * hw..(ni + 1) * c2 * hw]
                        .copy_from_slice(prod.as_standard_layout().as_slice().expect("standard"));
                }
                tensor_from(&[n, c2, h, wd], out)
            })
        });
        Ok(self.push(
            value,
            vec![x, w],
            Box::new(move |args| {
                let g = args.grad.as_slice().expect("standard layout");
                let xs = args.parents[0].as_slice().expect("standard layout");
                let wmat = as_2d(args.parents[1]);
                let mut gx = vec![0.0f64; xs.len()];
                let mut gw = ndarray::Array2::<f64>::zeros((c2, c));
                for ni in 0..n {
                    let gmat = ndarray::ArrayView2::from_shape((c2, hw), &g[ni * c2 * hw..(ni + 1) * c2 * hw])
                        .expect("contiguous");
                    let xmat = ndarray::ArrayView2::from_shape((c, hw), &xs[ni * c * hw..(ni + 1) * c * hw])
                        .expect("contiguous");
                    gw += &gmat.dot(&xmat.t());
                    let gxm = wmat.t().dot(&gmat);
                    gx[ni * c * hw..(ni + 1) * c * hw]
                        .copy_from_slice(gxm.as_standard_layout().as_slice().expect("standard"));
                }
                vec![tensor_from(&[n, c, h, wd], gx), gw.into_dyn()]
            }),
        ))
    }

    /// 2x2 max pooling with stride 2; spatial dims must be even.
    pub fn maxpool2(&self, x: Var) -> Result<Var, NnError> {
        let sx = self.shape(x);
        if sx.len() != 4 || sx[2] % 2 != 0 || sx[3] % 2 != 0 {
            return Err(bad_shape("maxpool2", format!("{sx:?} (H, W must be even)")));
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (oh, ow) = (h / 2, w / 2);
        let value = self.with_value(x, |vx| {
            let xs = vx.as_slice().expect("standard layout");
            let mut out = vec![0.0f64; n * c * oh * ow];
            for p in 0..n * c {
                let base = p * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let i0 = base + 2 * oy * w + 2 * ox;
                        let m = xs[i0].max(xs[i0 + 1]).max(xs[i0 + w]).max(xs[i0 + w + 1]);
                        out[p * oh * ow + oy * ow + ox] = m;
                    }
                }
            }
            tensor_from(&[n, c, oh, ow], out)
        });
        Ok(self.push(
            value,
            vec![x],
            Box::new(move |args| {
                // Recompute the argmax from the parent value; first maximal
                // element in window order wins, matching the forward max.
                let xs = args.parents[0].as_slice().expect("standard layout");
                let g = args.grad.as_slice().expect("standard layout");
                let mut gx = vec![0.0f64; xs.len()];
                for p in 0..n * c {
                    let base = p * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let i0 = base + 2 * oy * w + 2 * ox;
                            let idx = [i0, i0 + 1, i0 + w, i0 + w + 1];
                            let mut best = idx[0];
                            for &i in &idx[1..] {
                                if xs[i] > xs[best] {
                                    best = i;
                                }
                            }
                            gx[best] += g[p * oh * ow + oy * ow + ox];
                        }
                    }
                }
                vec![tensor_from(&[n, c, h, w], gx)]
            }),
        ))
    }

    /// Spatial mean: `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&self, x: Var) -> Result<Var, NnError> {
        let sx = self.shape(x);
        if sx.len() != 4 {
            return Err(bad_shape("global_avg_pool", format!("{sx:?}")));
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let hw = (h * w) as f64;
        let value = self.with_value(x, |vx| {
            let xs = vx.as_slice().expect("standard layout");
            let mut out = vec![0.0f64; n * c];
            for p in 0..n * c {
                out[p] = xs[p * h * w..(p + 1) * h * w].iter().sum::<f64>() / hw;
            }
            tensor_from(&[n, c], out)
        });
        Ok(self.push(
            value,
            vec![x],
            Box::new(move |args| {
                let g = args.grad.as_slice().expect("standard layout");
                let mut gx = vec![0.0f64; n * c * h * w];
                for p in 0..n * c {
                    let gv = g[p] / hw;
                    for q in 0..h * w {
                        gx[p * h * w + q] = gv;
                    }
                }
                vec![tensor_from(&[n, c, h, w], gx)]
            }),
        ))
    }

    /// Fully connected layer: `x[N,Din] . w[Din,Dout] + b[Dout]`.
    pub fn linear(&self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let sx = self.shape(x);
        let sw = self.shape(w);
        let sb = self.shape(b);
        if sx.len() != 2 || sw.len() != 2 || sb.len() != 1 || sx[1] != sw[0] || sw[1] != sb[0] {
            return Err(bad_shape("linear", format!("x{sx:?} w{sw:?} b{sb:?}")));
        }
        let value = self.with_value(x, |vx| {
            self.with_value(w, |vw| {
                self.with_value(b, |vb| {
                    let mut out = as_2d(vx).dot(&as_2d(vw));
                    let bs = vb.as_slice().expect("standard layout");
                    for mut row in out.rows_mut() {
                        for (v, &bv) in row.iter_mut().zip(bs) {
                            *v += bv;
                        }
                    }
                    out.into_dyn()
                })
            })
        });
        Ok(self.push(
            value,
            vec![x, w, b],
            Box::new(|args| {
                let g = as_2d(args.grad);
                let x = as_2d(args.parents[0]);
                let w = as_2d(args.parents[1]);
                let gb = g.sum_axis(ndarray::Axis(0));
                vec![
                    g.dot(&w.t()).into_dyn(),
                    x.t().dot(&g).into_dyn(),
                    gb.into_dyn(),
                ]
            }),
        ))
    }

    /// Differentiable bilinear resize of `[N,C,H,W]` to `(oh, ow)`,
    /// half-pixel centers with clamped taps.
    pub fn bilinear_resize(&self, x: Var, oh: usize, ow: usize) -> Result<Var, NnError> {
        let sx = self.shape(x);
        if sx.len() != 4 || oh == 0 || ow == 0 {
            return Err(bad_shape("bilinear_resize", format!("{sx:?} -> {oh}x{ow}")));
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        if (h, w) == (oh, ow) {
            // Still record a node so gradients flow uniformly.
            let value = self.value(x);
            return Ok(self.push(value, vec![x], Box::new(|args| vec![args.grad.clone()])));
        }
        // Tap indices and weights are shared across samples and channels.
        let plan_axis = |src: usize, dst: usize| -> Vec<(usize, usize, f64)> {
            let scale = src as f64 / dst as f64;
            (0..dst)
                .map(|o| {
                    let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                    let i0 = s.floor() as usize;
                    let i1 = (i0 + 1).min(src - 1);
                    (i0, i1, s - i0 as f64)
                })
                .collect()
        };
        let ys = plan_axis(h, oh);
        let xs_plan = plan_axis(w, ow);
        let value = self.with_value(x, |vx| {
            let xs = vx.as_slice().expect("standard layout");
            let mut out = vec![0.0f64; n * c * oh * ow];
            for p in 0..n * c {
                let base = p * h * w;
                for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1, fx)) in xs_plan.iter().enumerate() {
                        let v = xs[base + y0 * w + x0] * (1.0 - fy) * (1.0 - fx)
                            + xs[base + y0 * w + x1] * (1.0 - fy) * fx
                            + xs[base + y1 * w + x0] * fy * (1.0 - fx)
                            + xs[base + y1 * w + x1] * fy * fx;
                        out[p * oh * ow + oy * ow + ox] = v;
                    }
                }
            }
            tensor_from(&[n, c, oh, ow], out)
        });
        Ok(self.push(
            value,
            vec![x],
            Box::new(move |args| {
                let g = args.grad.as_slice().expect("standard layout");
                let mut gx = vec![0.0f64; n * c * h * w];
                for p in 0..n * c {
                    let base = p * h * w;
                    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                        for (ox, &(x0, x1, fx)) in xs_plan.iter().enumerate() {
                            let go = g[p * oh * ow + oy * ow + ox];
                            gx[base + y0 * w + x0] += go * (1.0 - fy) * (1.0 - fx);
                            gx[base + y0 * w + x1] += go * (1.0 - fy) * fx;
                            gx[base + y1 * w + x0] += go * fy * (1.0 - fx);
                            gx[base + y1 * w + x1] += go * fy * fx;
                        }
                    }
                }
                vec![tensor_from(&[n, c, h, w], gx)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn identity_1x1_conv_is_identity() {
        let tape = Tape::new();
        let x = tape.leaf(tensor_from(
            &[1, 2, 2, 2],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        ));
        // conv2d with 1x1 identity kernel.
        let mut wdata = vec![0.0; 4];
        wdata[0] = 1.0; // w[0,0]
        wdata[3] = 1.0; // w[1,1]
        let w = tape.leaf(tensor_from(&[2, 2, 1, 1], wdata));
        let b = tape.leaf(tensor_from(&[2], vec![0.0, 0.0]));
        let y = tape.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn relu_zeroes_negatives_and_their_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(tensor_from(&[4], vec![-2.0, -0.5, 0.5, 2.0]));
        let y = tape.relu(x);
        assert_eq!(
            tape.value(y).as_slice().unwrap(),
            &[0.0, 0.0, 0.5, 2.0]
        );
        let loss = tape.mean_all(y);
        let grads = tape.backward(loss).unwrap();
        let gx = grads.wrt(x).unwrap();
        assert_eq!(gx.as_slice().unwrap(), &[0.0, 0.0, 0.25, 0.25]);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let tape = Tape::new();
        let x = tape.leaf(tensor_from(&[1, 1, 2, 2], vec![1.0, 5.0, 2.0, 3.0]));
        let y = tape.maxpool2(x).unwrap();
        assert_eq!(tape.value(y).as_slice().unwrap(), &[5.0]);
        let loss = tape.mean_all(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(
            grads.wrt(x).unwrap().as_slice().unwrap(),
            &[0.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn resize_identity_shape_passes_through() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_elem(IxDyn(&[1, 1, 4, 4]), 0.3));
        let y = tape.bilinear_resize(x, 4, 4).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        let z = tape.bilinear_resize(x, 2, 2).unwrap();
        assert_eq!(tape.shape(z), vec![1, 1, 2, 2]);
        for &v in tape.value(z).iter() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }
}
