//! Temporal convolutions lowered to GEMM through im2col.

use super::graph::{Backward, BackwardCtx, Graph, Var};
use super::linalg::gemm;
use super::ops::dims3;
use super::tensor::Tensor;
use crate::error::{hyper_err, shape_err, Result};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    t_in: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    padding: usize,
    t_out: usize,
}

impl Geometry {
    /// Input position feeding output `t` through tap `k`, if inside the signal.
    #[inline]
    fn source(&self, t: usize, k: usize) -> Option<usize> {
        let pos = (t * self.stride + k * self.dilation) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < self.t_in).then_some(pos as usize)
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        for ci in 0..self.cin {
            let row_in = &x[ci * self.t_in..(ci + 1) * self.t_in];
            for k in 0..self.k {
                let row =
                    &mut cols[(ci * self.k + k) * self.t_out..(ci * self.k + k + 1) * self.t_out];
                for (t, c) in row.iter_mut().enumerate() {
                    *c = self.source(t, k).map_or(0.0, |p| row_in[p]);
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        for ci in 0..self.cin {
            let row_out = &mut dx[ci * self.t_in..(ci + 1) * self.t_in];
            for k in 0..self.k {
                let row = &cols[(ci * self.k + k) * self.t_out..(ci * self.k + k + 1) * self.t_out];
                for (t, &c) in row.iter().enumerate() {
                    if let Some(p) = self.source(t, k) {
                        row_out[p] += c;
                    }
                }
            }
        }
    }
}

struct Conv1dOp {
    geo: Geometry,
    has_bias: bool,
}

impl Backward for Conv1dOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let g = self.geo;
        let (x, w) = (ctx.inputs[0], ctx.inputs[1]);
        let b = x.shape()[0];
        let cout = w.shape()[0];
        let ck = g.cin * g.k;
        let mut cols = vec![0.0; ck * g.t_out];
        let mut dcols = vec![0.0; ck * g.t_out];
        let mut dx = ctx.needs[0].then(|| vec![0.0; x.len()]);
        let mut dw = ctx.needs[1].then(|| vec![0.0; w.len()]);
        for bi in 0..b {
            let gy = &grad[bi * cout * g.t_out..(bi + 1) * cout * g.t_out];
            if let Some(dw) = dw.as_mut() {
                g.im2col(
                    &x.data()[bi * g.cin * g.t_in..(bi + 1) * g.cin * g.t_in],
                    &mut cols,
                );
                gemm(cout, g.t_out, ck, gy, false, &cols, true, dw, 1.0);
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    ck,
                    cout,
                    g.t_out,
                    w.data(),
                    true,
                    gy,
                    false,
                    &mut dcols,
                    0.0,
                );
                g.col2im(
                    &dcols,
                    &mut dx[bi * g.cin * g.t_in..(bi + 1) * g.cin * g.t_in],
                );
            }
        }
        let mut out = vec![dx, dw];
        if self.has_bias {
            let db = ctx.needs[2].then(|| {
                let mut db = vec![0.0; cout];
                for (i, row) in grad.chunks(g.t_out).enumerate() {
                    db[i % cout] += row.iter().sum::<f64>();
                }
                db
            });
            out.push(db);
        }
        out
    }
}

struct ConvTranspose1dOp {
    geo: Geometry,
}

impl Backward for ConvTranspose1dOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        // Output of the transposed conv plays the role of the conv1d input.
        let g = self.geo;
        let (x, w) = (ctx.inputs[0], ctx.inputs[1]);
        let (b, cin_t, t_x) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let ck = g.cin * g.k;
        let mut dcols = vec![0.0; ck * t_x];
        let mut dx = ctx.needs[0].then(|| vec![0.0; x.len()]);
        let mut dw = ctx.needs[1].then(|| vec![0.0; w.len()]);
        for bi in 0..b {
            g.im2col(
                &grad[bi * g.cin * g.t_in..(bi + 1) * g.cin * g.t_in],
                &mut dcols,
            );
            let xb = &x.data()[bi * cin_t * t_x..(bi + 1) * cin_t * t_x];
            if let Some(dx) = dx.as_mut() {
                gemm(
                    cin_t,
                    ck,
                    t_x,
                    w.data(),
                    false,
                    &dcols,
                    false,
                    &mut dx[bi * cin_t * t_x..(bi + 1) * cin_t * t_x],
                    0.0,
                );
            }
            if let Some(dw) = dw.as_mut() {
                gemm(cin_t, t_x, ck, xb, false, &dcols, true, dw, 1.0);
            }
        }
        vec![dx, dw]
    }
}

/// Output length of a strided, dilated, padded convolution.
pub fn conv1d_out_len(
    t: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    padding: usize,
) -> Option<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = t + 2 * padding;
    (padded >= span).then(|| (padded - span) / stride + 1)
}

impl Graph {
    /// Cross-correlation of `x [B, Cin, T]` with `w [Cout, Cin, K]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Result<Var> {
        if stride == 0 {
            return Err(hyper_err("conv1d", "stride", stride));
        }
        if dilation == 0 {
            return Err(hyper_err("conv1d", "dilation", dilation));
        }
        let (b, cin, t_in) = dims3("conv1d", self.value(x))?;
        let (cout, wcin, k) = dims3("conv1d", self.value(w))?;
        if wcin != cin {
            return Err(shape_err(
                "conv1d",
                "in_channels",
                format!("input has {cin}, weight expects {wcin}"),
            ));
        }
        if let Some(bv) = bias {
            if self.shape(bv) != [cout] {
                return Err(shape_err(
                    "conv1d",
                    "bias",
                    format!("{:?} for {cout} output channels", self.shape(bv)),
                ));
            }
        }
        let t_out = conv1d_out_len(t_in, k, stride, dilation, padding).ok_or_else(|| {
            shape_err(
                "conv1d",
                "time",
                format!(
                    "length {t_in} + 2*{padding} shorter than receptive field {}",
                    dilation * (k - 1) + 1
                ),
            )
        })?;
        let geo = Geometry {
            cin,
            t_in,
            k,
            stride,
            dilation,
            padding,
            t_out,
        };
        let ck = cin * k;
        let mut cols = vec![0.0; ck * t_out];
        let mut data = vec![0.0; b * cout * t_out];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            for bi in 0..b {
                geo.im2col(&xv[bi * cin * t_in..(bi + 1) * cin * t_in], &mut cols);
                gemm(
                    cout,
                    ck,
                    t_out,
                    wv,
                    false,
                    &cols,
                    false,
                    &mut data[bi * cout * t_out..(bi + 1) * cout * t_out],
                    0.0,
                );
            }
        }
        if let Some(bv) = bias {
            let bias_v = self.value(bv).data();
            for (i, row) in data.chunks_mut(t_out).enumerate() {
                let bb = bias_v[i % cout];
                row.iter_mut().for_each(|v| *v += bb);
            }
        }
        let out = Tensor::from_parts(vec![b, cout, t_out], data);
        let inputs: Vec<Var> = match bias {
            Some(bv) => vec![x, w, bv],
            None => vec![x, w],
        };
        Ok(self.record(
            out,
            &inputs,
            Box::new(Conv1dOp {
                geo,
                has_bias: bias.is_some(),
            }),
        ))
    }

    /// Transposed convolution of `x [B, Cin, T]` with `w [Cin, Cout, K]`:
    /// the adjoint of [`Graph::conv1d`] with the same stride and padding.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        if stride == 0 {
            return Err(hyper_err("conv_transpose1d", "stride", stride));
        }
        let (b, cin, t_x) = dims3("conv_transpose1d", self.value(x))?;
        let (wcin, cout, k) = dims3("conv_transpose1d", self.value(w))?;
        if wcin != cin {
            return Err(shape_err(
                "conv_transpose1d",
                "in_channels",
                format!("input has {cin}, weight expects {wcin}"),
            ));
        }
        if k < stride {
            return Err(hyper_err(
                "conv_transpose1d",
                "kernel < stride",
                format!("{k} < {stride}"),
            ));
        }
        let full = (t_x - 1) * stride + k;
        if full <= 2 * padding {
            return Err(hyper_err("conv_transpose1d", "padding", padding));
        }
        let t_out = full - 2 * padding;
        // Geometry of the forward conv1d that this op is the adjoint of.
        let geo = Geometry {
            cin: cout,
            t_in: t_out,
            k,
            stride,
            dilation: 1,
            padding,
            t_out: t_x,
        };
        debug_assert_eq!(conv1d_out_len(t_out, k, stride, 1, padding), Some(t_x));
        let ck = cout * k;
        let mut cols = vec![0.0; ck * t_x];
        let mut data = vec![0.0; b * cout * t_out];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            for bi in 0..b {
                gemm(
                    ck,
                    cin,
                    t_x,
                    wv,
                    true,
                    &xv[bi * cin * t_x..(bi + 1) * cin * t_x],
                    false,
                    &mut cols,
                    0.0,
                );
                geo.col2im(&cols, &mut data[bi * cout * t_out..(bi + 1) * cout * t_out]);
            }
        }
        let out = Tensor::from_parts(vec![b, cout, t_out], data);
        Ok(self.record(out, &[x, w], Box::new(ConvTranspose1dOp { geo })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(shape: [usize; 3], data: Vec<f64>) -> Tensor {
        Tensor::new(&shape, data).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut g = Graph::new();
        let x = g.constant(t3([1, 1, 5], vec![1., 2., 3., 4., 5.]));
        let w = g.constant(t3([1, 1, 1], vec![1.0]));
        let b = g.constant(Tensor::from_vec(vec![0.0]));
        let y = g.conv1d(x, w, Some(b), 1, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3., 4., 5.]);
    }

    #[test]
    fn difference_kernel_matches_direct_sum() {
        // y[t] = x[t-1] - x[t+1] with zero padding.
        let mut g = Graph::new();
        let x = g.constant(t3([1, 1, 3], vec![1., 2., 3.]));
        let w = g.constant(t3([1, 1, 3], vec![1., 0., -1.]));
        let y = g.conv1d(x, w, None, 1, 1, 1).unwrap();
        assert_eq!(g.value(y).data(), &[-2., -2., 2.]);
    }

    #[test]
    fn output_length_formula() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3, 17]));
        let w = g.constant(Tensor::zeros(&[4, 3, 5]));
        let y = g.conv1d(x, w, None, 3, 2, 2).unwrap();
        // floor((17 + 4 - 8 - 1) / 3) + 1 = 5
        assert_eq!(g.shape(y), &[2, 4, 5]);
    }

    #[test]
    fn errors_name_the_dimension() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 2, 8]));
        let w = g.constant(Tensor::zeros(&[1, 3, 3]));
        let err = g.conv1d(x, w, None, 1, 1, 0).unwrap_err().to_string();
        assert!(err.contains("in_channels"), "{err}");
        let w = g.constant(Tensor::zeros(&[1, 2, 3]));
        assert!(g
            .conv1d(x, w, None, 0, 1, 0)
            .unwrap_err()
            .to_string()
            .contains("stride"));
        assert!(g
            .conv1d(x, w, None, 1, 0, 0)
            .unwrap_err()
            .to_string()
            .contains("dilation"));
        let w = g.constant(Tensor::zeros(&[1, 2, 9]));
        assert!(g.conv1d(x, w, None, 1, 1, 0).is_err());
    }

    #[test]
    fn transpose_scatter_add() {
        let mut g = Graph::new();
        let x = g.constant(t3([1, 1, 2], vec![1., 1.]));
        let w = g.constant(t3([1, 1, 2], vec![1., 1.]));
        let y = g.conv_transpose1d(x, w, 2, 0).unwrap();
        assert_eq!(g.value(y).data(), &[1., 1., 1., 1.]);
        let x = g.constant(t3([1, 1, 3], vec![4., 5., 6.]));
        let w = g.constant(t3([1, 1, 1], vec![1.]));
        let y = g.conv_transpose1d(x, w, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &[4., 5., 6.]);
    }

    #[test]
    fn transpose_rejects_kernel_shorter_than_stride() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 1, 4]));
        let w = g.constant(Tensor::zeros(&[1, 1, 2]));
        assert!(g.conv_transpose1d(x, w, 4, 0).is_err());
    }
}
