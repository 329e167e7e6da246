//! Elementwise, broadcast, and matrix primitives on the tape.

use ndarray::{Ix2, Ix3, IxDyn};

use super::tape::{Tape, Var};
use super::{NnError, Tensor};

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> NnError {
    NnError::ShapeMismatch(format!("{op}: {a:?} vs {b:?}"))
}

pub(crate) fn as_2d(t: &Tensor) -> ndarray::ArrayView2<'_, f64> {
    t.view().into_dimensionality::<Ix2>().expect("2-d tensor")
}

fn as_3d(t: &Tensor) -> ndarray::ArrayView3<'_, f64> {
    t.view().into_dimensionality::<Ix3>().expect("3-d tensor")
}

impl Tape {
    pub fn add(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("add", &sa, &sb));
        }
        let value = self.with_value(a, |va| self.with_value(b, |vb| va + vb));
        Ok(self.push(
            value,
            vec![a, b],
            Box::new(|args| vec![args.grad.clone(), args.grad.clone()]),
        ))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("sub", &sa, &sb));
        }
        let value = self.with_value(a, |va| self.with_value(b, |vb| va - vb));
        Ok(self.push(
            value,
            vec![a, b],
            Box::new(|args| vec![args.grad.clone(), args.grad.mapv(|g| -g)]),
        ))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("mul", &sa, &sb));
        }
        let value = self.with_value(a, |va| self.with_value(b, |vb| va * vb));
        Ok(self.push(
            value,
            vec![a, b],
            Box::new(|args| vec![args.grad * args.parents[1], args.grad * args.parents[0]]),
        ))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let value = self.with_value(a, |va| va.mapv(|v| c * v));
        self.push(
            value,
            vec![a],
            Box::new(move |args| vec![args.grad.mapv(|g| c * g)]),
        )
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        let value = self.with_value(a, |va| va.mapv(|v| v + c));
        self.push(value, vec![a], Box::new(|args| vec![args.grad.clone()]))
    }

    pub fn relu(&self, a: Var) -> Var {
        let value = self.with_value(a, |va| va.mapv(|v| v.max(0.0)));
        self.push(
            value,
            vec![a],
            Box::new(|args| {
                let mut g = args.grad.clone();
                g.zip_mut_with(args.parents[0], |gv, &x| {
                    if x <= 0.0 {
                        *gv = 0.0;
                    }
                });
                vec![g]
            }),
        )
    }

    /// Mean over every element; result is a 0-d scalar.
    pub fn mean_all(&self, a: Var) -> Var {
        let (value, n) = self.with_value(a, |va| {
            (
                Tensor::from_elem(IxDyn(&[]), va.iter().sum::<f64>() / va.len() as f64),
                va.len(),
            )
        });
        self.push(
            value,
            vec![a],
            Box::new(move |args| {
                let g = args.grad.iter().next().copied().expect("scalar grad");
                vec![args.parents[0].mapv(|_| g / n as f64)]
            }),
        )
    }

    /// Broadcast subtract: `x[N,C,H,W] - s[N,C]`.
    pub fn sub_nc(&self, x: Var, s: Var) -> Result<Var, NnError> {
        self.broadcast_nc(x, s, BroadcastOp::Sub)
    }

    /// Broadcast divide: `x[N,C,H,W] / s[N,C]`.
    pub fn div_nc(&self, x: Var, s: Var) -> Result<Var, NnError> {
        self.broadcast_nc(x, s, BroadcastOp::Div)
    }

    /// Broadcast multiply: `x[N,C,H,W] * s[N,C]`.
    pub fn mul_nc(&self, x: Var, s: Var) -> Result<Var, NnError> {
        self.broadcast_nc(x, s, BroadcastOp::Mul)
    }

    /// Broadcast add: `x[N,C,H,W] + s[N,C]`.
    pub fn add_nc(&self, x: Var, s: Var) -> Result<Var, NnError> {
        self.broadcast_nc(x, s, BroadcastOp::Add)
    }

    fn broadcast_nc(&self, x: Var, s: Var, op: BroadcastOp) -> Result<Var, NnError> {
        let sx = self.shape(x);
        let ss = self.shape(s);
        if sx.len() != 4 || ss.len() != 2 || sx[0] != ss[0] || sx[1] != ss[1] {
            return Err(shape_err("broadcast_nc", &sx, &ss));
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let hw = h * w;
        let value = self.with_value(x, |vx| {
            self.with_value(s, |vs| {
                let xs = vx.as_slice().expect("standard layout");
                let svals = vs.as_slice().expect("standard layout");
                let mut out = Vec::with_capacity(xs.len());
                for i in 0..n {
                    for j in 0..c {
                        let sv = svals[i * c + j];
                        let base = (i * c + j) * hw;
                        for k in 0..hw {
                            out.push(op.apply(xs[base + k], sv));
                        }
                    }
                }
                Tensor::from_shape_vec(IxDyn(&sx), out).expect("shape matches")
            })
        });
        Ok(self.push(
            value,
            vec![x, s],
            Box::new(move |args| {
                let g = args.grad.as_slice().expect("standard layout");
                let xs = args.parents[0].as_slice().expect("standard layout");
                let svals = args.parents[1].as_slice().expect("standard layout");
                let mut gx = vec![0.0f64; xs.len()];
                let mut gs = vec![0.0f64; svals.len()];
                for i in 0..n {
                    for j in 0..c {
                        let sv = svals[i * c + j];
                        let base = (i * c + j) * hw;
                        let mut acc = 0.0;
                        for k in 0..hw {
                            let gi = g[base + k];
                            match op {
                                BroadcastOp::Add => {
                                    gx[base + k] = gi;
                                    acc += gi;
                                }
                                BroadcastOp::Sub => {
                                    gx[base + k] = gi;
                                    acc -= gi;
                                }
                                BroadcastOp::Mul => {
                                    gx[base + k] = gi * sv;
                                    acc += gi * xs[base + k];
                                }
                                BroadcastOp::Div => {
                                    gx[base + k] = gi / sv;
                                    acc -= gi * xs[base + k] / (sv * sv);
                                }
                            }
                        }
                        gs[i * c + j] = acc;
                    }
                }
                vec![
                    Tensor::from_shape_vec(IxDyn(&[n, c, h, w]), gx).expect("shape"),
                    Tensor::from_shape_vec(IxDyn(&[n, c]), gs).expect("shape"),
                ]
            }),
        ))
    }

    /// 2-d matrix product `[m,k] x [k,n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let value = self.with_value(a, |va| {
            self.with_value(b, |vb| as_2d(va).dot(&as_2d(vb)).into_dyn())
        });
        Ok(self.push(
            value,
            vec![a, b],
            Box::new(|args| {
                let g = as_2d(args.grad);
                let a = as_2d(args.parents[0]);
                let b = as_2d(args.parents[1]);
                vec![g.dot(&b.t()).into_dyn(), a.t().dot(&g).into_dyn()]
            }),
        ))
    }

    /// Batched matrix product `[B,m,k] x [B,k,n]`.
    pub fn bmm(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(shape_err("bmm", &sa, &sb));
        }
        let (batch, m, n) = (sa[0], sa[1], sb[2]);
        let value = self.with_value(a, |va| {
            self.with_value(b, |vb| {
                let a3 = as_3d(va);
                let b3 = as_3d(vb);
                let mut out = ndarray::Array3::<f64>::zeros((batch, m, n));
                for i in 0..batch {
                    let prod = a3.index_axis(ndarray::Axis(0), i).dot(&b3.index_axis(ndarray::Axis(0), i));
                    out.index_axis_mut(ndarray::Axis(0), i).assign(&prod);
                }
                out.into_dyn()
            })
        });
        Ok(self.push(
            value,
            vec![a, b],
            Box::new(move |args| {
                let g = as_3d(args.grad);
                let a3 = as_3d(args.parents[0]);
                let b3 = as_3d(args.parents[1]);
                let mut ga = ndarray::Array3::<f64>::zeros(a3.raw_dim());
                let mut gb = ndarray::Array3::<f64>::zeros(b3.raw_dim());
                for i in 0..batch {
                    let gi = g.index_axis(ndarray::Axis(0), i);
                    let ai = a3.index_axis(ndarray::Axis(0), i);
                    let bi = b3.index_axis(ndarray::Axis(0), i);
                    ga.index_axis_mut(ndarray::Axis(0), i).assign(&gi.dot(&bi.t()));
                    gb.index_axis_mut(ndarray::Axis(0), i).assign(&ai.t().dot(&gi));
                }
                vec![ga.into_dyn(), gb.into_dyn()]
            }),
        ))
    }

    /// Swap the last two axes of a 3-d tensor.
    pub fn transpose_12(&self, a: Var) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if sa.len() != 3 {
            return Err(shape_err("transpose_12", &sa, &[]));
        }
        let value = self.with_value(a, |va| {
            as_3d(va).permuted_axes([0, 2, 1]).as_standard_layout().to_owned().into_dyn()
        });
        Ok(self.push(
            value,
            vec![a],
            Box::new(|args| {
                vec![as_3d(args.grad)
                    .permuted_axes([0, 2, 1])
                    .as_standard_layout()
                    .to_owned()
                    .into_dyn()]
            }),
        ))
    }

    /// Reinterpret a tensor with a new shape of equal element count.
    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var, NnError> {
        let sa = self.shape(a);
        let numel: usize = sa.iter().product();
        if shape.iter().product::<usize>() != numel {
            return Err(shape_err("reshape", &sa, shape));
        }
        let shape_vec = shape.to_vec();
        let value = self.with_value(a, |va| {
            Tensor::from_shape_vec(IxDyn(&shape_vec), va.iter().copied().collect())
                .expect("element count checked")
        });
        Ok(self.push(
            value,
            vec![a],
            Box::new(move |args| {
                vec![Tensor::from_shape_vec(
                    IxDyn(args.parents[0].shape()),
                    args.grad.iter().copied().collect(),
                )
                .expect("same element count")]
            }),
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax_lastdim(&self, a: Var) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if sa.is_empty() {
            return Err(shape_err("softmax_lastdim", &sa, &[]));
        }
        let k = *sa.last().expect("nonempty shape");
        let value = self.with_value(a, |va| {
            let mut out = va.as_slice().expect("standard layout").to_vec();
            for row in out.chunks_mut(k) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            Tensor::from_shape_vec(IxDyn(&sa), out).expect("shape")
        });
        Ok(self.push(
            value,
            vec![a],
            Box::new(move |args| {
                let y = args.value.as_slice().expect("standard layout");
                let g = args.grad.as_slice().expect("standard layout");
                let mut out = vec![0.0f64; y.len()];
                for r in 0..y.len() / k {
                    let base = r * k;
                    let dot: f64 = (0..k).map(|j| g[base + j] * y[base + j]).sum();
                    for j in 0..k {
                        out[base + j] = y[base + j] * (g[base + j] - dot);
                    }
                }
                vec![Tensor::from_shape_vec(IxDyn(args.parents[0].shape()), out).expect("shape")]
            }),
        ))
    }

    /// Concatenate two `[N,C,H,W]` maps along the channel axis.
    pub fn concat_channels(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 4
            || sb.len() != 4
            || sa[0] != sb[0]
            || sa[2] != sb[2]
            || sa[3] != sb[3]
        {
            return Err(shape_err("concat_channels", &sa, &sb));
        }
        let (n, ca, cb, h, w) = (sa[0], sa[1], sb[1], sa[2], sa[3]);
        let hw = h * w;
        let value = self.with_value(a, |va| {
            self.with_value(b, |vb| {
                let xs = va.as_slice().expect("standard layout");
                let ys = vb.as_slice().expect("standard layout");
                let mut out = Vec::with_capacity((ca + cb) * n * hw);
                for i in 0..n {
                    out.extend_from_slice(&xs[i * ca * hw..(i + 1) * ca * hw]);
                    out.extend_from_slice(&ys[i * cb * hw..(i + 1) * cb * hw]);
                }
                Tensor::from_shape_vec(IxDyn(&[n, ca + cb, h, w]), out).expect("shape")
            })
        });
        Ok(self.push(
            value,
            vec![a, b],
            Box::new(move |args| {
                let g = args.grad.as_slice().expect("standard layout");
                let mut ga = Vec::with_capacity(n * ca * hw);
                let mut gb = Vec::with_capacity(n * cb * hw);
                let stride = (ca + cb) * hw;
                for i in 0..n {
                    ga.extend_from_slice(&g[i * stride..i * stride + ca * hw]);
                    gb.extend_from_slice(&g[i * stride + ca * hw..(i + 1) * stride]);
                }
                vec![
                    Tensor::from_shape_vec(IxDyn(&[n, ca, h, w]), ga).expect("shape"),
                    Tensor::from_shape_vec(IxDyn(&[n, cb, h, w]), gb).expect("shape"),
                ]
            }),
        ))
    }

    /// L2-normalize each row of `[N,D]` (norm floored at 1e-12).
    pub fn l2_normalize_rows(&self, a: Var) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if sa.len() != 2 {
            return Err(shape_err("l2_normalize_rows", &sa, &[]));
        }
        let (n, d) = (sa[0], sa[1]);
        let value = self.with_value(a, |va| {
            let xs = va.as_slice().expect("standard layout");
            let mut out = vec![0.0f64; xs.len()];
            for r in 0..n {
                let row = &xs[r * d..(r + 1) * d];
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                for j in 0..d {
                    out[r * d + j] = row[j] / norm;
                }
            }
            Tensor::from_shape_vec(IxDyn(&sa), out).expect("shape")
        });
        Ok(self.push(
            value,
            vec![a],
            Box::new(move |args| {
                let xs = args.parents[0].as_slice().expect("standard layout");
                let u = args.value.as_slice().expect("standard layout");
                let g = args.grad.as_slice().expect("standard layout");
                let mut out = vec![0.0f64; xs.len()];
                for r in 0..n {
                    let row = &xs[r * d..(r + 1) * d];
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                    let dot: f64 = (0..d).map(|j| u[r * d + j] * g[r * d + j]).sum();
                    for j in 0..d {
                        out[r * d + j] = (g[r * d + j] - u[r * d + j] * dot) / norm;
                    }
                }
                vec![Tensor::from_shape_vec(IxDyn(&[n, d]), out).expect("shape")]
            }),
        ))
    }

    /// Squared Euclidean distance per row of two `[N,D]` L2-normalized
    /// feature matrices; result is `[N]` with entries in `[0, 4]`.
    pub fn rowwise_squared_distance(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || sa.len() != 2 {
            return Err(shape_err("rowwise_squared_distance", &sa, &sb));
        }
        let (n, d) = (sa[0], sa[1]);
        self.with_value(a, |va| check_rows_normalized(va, n, d))?;
        self.with_value(b, |vb| check_rows_normalized(vb, n, d))?;
        let value = self.with_value(a, |va| {
            self.with_value(b, |vb| {
                let xs = va.as_slice().expect("standard layout");
                let ys = vb.as_slice().expect("standard layout");
                let mut out = vec![0.0f64; n];
                for r in 0..n {
                    out[r] = (0..d)
                        .map(|j| {
                            let diff = xs[r * d + j] - ys[r * d + j];
                            diff * diff
                        })
                        .sum();
                }
                Tensor::from_shape_vec(IxDyn(&[n]), out).expect("shape")
            })
        });
        Ok(self.push(
            value,
            vec![a, b],
            Box::new(move |args| {
                let xs = args.parents[0].as_slice().expect("standard layout");
                let ys = args.parents[1].as_slice().expect("standard layout");
                let g = args.grad.as_slice().expect("standard layout");
                let mut ga = vec![0.0f64; xs.len()];
                let mut gb = vec![0.0f64; ys.len()];
                for r in 0..n {
                    for j in 0..d {
                        let diff = 2.0 * (xs[r * d + j] - ys[r * d + j]) * g[r];
                        ga[r * d + j] = diff;
                        gb[r * d + j] = -diff;
                    }
                }
                vec![
                    Tensor::from_shape_vec(IxDyn(&[n, d]), ga).expect("shape"),
                    Tensor::from_shape_vec(IxDyn(&[n, d]), gb).expect("shape"),
                ]
            }),
        ))
    }
}

fn check_rows_normalized(t: &Tensor, n: usize, d: usize) -> Result<(), NnError> {
    let xs = t.as_slice().expect("standard layout");
    for r in 0..n {
        let norm = xs[r * d..(r + 1) * d]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(NnError::NotNormalized { row: r, norm });
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum BroadcastOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BroadcastOp {
    #[inline]
    fn apply(self, x: f64, s: f64) -> f64 {
        match self {
            BroadcastOp::Add => x + s,
            BroadcastOp::Sub => x - s,
            BroadcastOp::Mul => x * s,
            BroadcastOp::Div => x / s,
        }
    }
}

pub(crate) fn tensor_from(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::from_shape_vec(IxDyn(shape), data).expect("shape/data length agree")
}
