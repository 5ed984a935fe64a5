//! Elementwise, reduction and layout operations.

use std::sync::Arc;

use super::graph::{Backward, BackwardCtx, Graph, Var};
use super::linalg::gemm;
use super::tensor::Tensor;
use crate::error::{hyper_err, shape_err, Result};

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pointwise {
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Exp,
    /// Natural log; input must be positive.
    Log,
    /// `ln(1 + |x|)`.
    Log1pAbs,
    Square,
    Abs,
    /// `ln(1 + e^x)`.
    Softplus,
}

/// Neumaier summation: loss reductions over thousands of terms otherwise
/// lose the low bits a finite-difference step depends on.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for &v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + carry
}

/// Default leaky-ReLU slope used throughout the networks.
pub const LEAKY_SLOPE: f64 = 0.1;

impl Pointwise {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Pointwise::LeakyRelu(a) => {
                if x >= 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Pointwise::Tanh => x.tanh(),
            Pointwise::Sigmoid => sigmoid(x),
            Pointwise::Exp => x.exp(),
            Pointwise::Log => x.ln(),
            Pointwise::Log1pAbs => x.abs().ln_1p(),
            Pointwise::Square => x * x,
            Pointwise::Abs => x.abs(),
            Pointwise::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// Input at which the derivative jumps, if any.
    pub fn kink(self) -> Option<f64> {
        match self {
            Pointwise::LeakyRelu(_) | Pointwise::Abs | Pointwise::Log1pAbs => Some(0.0),
            _ => None,
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Pointwise::LeakyRelu(a) => {
                if x >= 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Pointwise::Tanh => 1.0 - y * y,
            Pointwise::Sigmoid => y * (1.0 - y),
            Pointwise::Exp => y,
            Pointwise::Log => 1.0 / x,
            Pointwise::Log1pAbs => sign(x) / (1.0 + x.abs()),
            Pointwise::Square => 2.0 * x,
            Pointwise::Abs => sign(x),
            Pointwise::Softplus => sigmoid(x),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn dims3(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [b, c, n] => Ok((b, c, n)),
        _ => Err(shape_err(
            op,
            "rank",
            format!("expected [B,C,T], got {:?}", t.shape()),
        )),
    }
}

struct PointwiseOp(Pointwise);

impl Backward for PointwiseOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let x = ctx.inputs[0].data();
        let y = ctx.output.data();
        let g = grad
            .iter()
            .zip(x.iter().zip(y))
            .map(|(g, (&x, &y))| g * self.0.derivative(x, y))
            .collect();
        vec![Some(g)]
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

struct BinaryOp(Binary);

impl Backward for BinaryOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (a, b) = (ctx.inputs[0].data(), ctx.inputs[1].data());
        let ga = ctx.needs[0].then(|| match self.0 {
            Binary::Add | Binary::Sub => grad.to_vec(),
            Binary::Mul => grad.iter().zip(b).map(|(g, b)| g * b).collect(),
        });
        let gb = ctx.needs[1].then(|| match self.0 {
            Binary::Add => grad.to_vec(),
            Binary::Sub => grad.iter().map(|g| -g).collect(),
            Binary::Mul => grad.iter().zip(a).map(|(g, a)| g * a).collect(),
        });
        vec![ga, gb]
    }
}

struct AffineOp {
    scale: f64,
}

impl Backward for AffineOp {
    fn backward(&self, _ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.iter().map(|g| g * self.scale).collect())]
    }
}

struct AddBiasOp;

impl Backward for AddBiasOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let shape = ctx.output.shape();
        let (c, t) = (shape[1], shape[2]);
        let gb = ctx.needs[1].then(|| {
            let mut gb = vec![0.0; c];
            for (i, chunk) in grad.chunks(t).enumerate() {
                gb[i % c] += chunk.iter().sum::<f64>();
            }
            gb
        });
        vec![ctx.needs[0].then(|| grad.to_vec()), gb]
    }
}

struct ClampMinOp {
    floor: f64,
}

impl Backward for ClampMinOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let x = ctx.inputs[0].data();
        let g = grad
            .iter()
            .zip(x)
            .map(|(g, &x)| if x > self.floor { *g } else { 0.0 })
            .collect();
        vec![Some(g)]
    }
}

struct SumOp {
    scale: f64,
}

impl Backward for SumOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(vec![grad[0] * self.scale; ctx.inputs[0].len()])]
    }
}

struct ReshapeOp;

impl Backward for ReshapeOp {
    fn backward(&self, _ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.to_vec())]
    }
}

struct ConcatOp {
    channels: Vec<usize>,
}

impl Backward for ConcatOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let shape = ctx.output.shape();
        let (b, c_total, t) = (shape[0], shape[1], shape[2]);
        let mut out = Vec::with_capacity(self.channels.len());
        let mut offset = 0;
        for (i, &c) in self.channels.iter().enumerate() {
            if ctx.needs[i] {
                let mut g = Vec::with_capacity(b * c * t);
                for bi in 0..b {
                    let start = (bi * c_total + offset) * t;
                    g.extend_from_slice(&grad[start..start + c * t]);
                }
                out.push(Some(g));
            } else {
                out.push(None);
            }
            offset += c;
        }
        out
    }
}

struct GatherOp {
    index: Arc<Vec<usize>>,
}

impl Backward for GatherOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let mut g = vec![0.0; ctx.inputs[0].len()];
        for (&i, &gv) in self.index.iter().zip(grad) {
            g[i] += gv;
        }
        vec![Some(g)]
    }
}

struct Transpose12Op;

fn transpose12(b: usize, m: usize, n: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for bi in 0..b {
        let src = &x[bi * m * n..(bi + 1) * m * n];
        let dst = &mut y[bi * m * n..(bi + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
    y
}

impl Backward for Transpose12Op {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let s = ctx.output.shape();
        vec![Some(transpose12(s[0], s[1], s[2], grad))]
    }
}

struct LinearMapOp;

impl Backward for LinearMapOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (m, x) = (ctx.inputs[0], ctx.inputs[1]);
        let (r, k) = (m.shape()[0], m.shape()[1]);
        let (b, n) = (x.shape()[0], x.shape()[2]);
        let gm = ctx.needs[0].then(|| {
            let mut gm = vec![0.0; r * k];
            for bi in 0..b {
                let gy = &grad[bi * r * n..(bi + 1) * r * n];
                let xb = &x.data()[bi * k * n..(bi + 1) * k * n];
                gemm(r, n, k, gy, false, xb, true, &mut gm, 1.0);
            }
            gm
        });
        let gx = ctx.needs[1].then(|| {
            let mut gx = vec![0.0; b * k * n];
            for bi in 0..b {
                let gy = &grad[bi * r * n..(bi + 1) * r * n];
                gemm(
                    k,
                    r,
                    n,
                    m.data(),
                    true,
                    gy,
                    false,
                    &mut gx[bi * k * n..(bi + 1) * k * n],
                    0.0,
                );
            }
            gx
        });
        vec![gm, gx]
    }
}

/// Index of `i` (possibly outside `0..len`) under repeated edge reflection
/// that excludes the edge sample, as in `numpy.pad(mode="reflect")`.
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

impl Graph {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                op,
                "operands",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn binary(&mut self, op: &'static str, kind: Binary, a: Var, b: Var) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, q)| match kind {
                Binary::Add => p + q,
                Binary::Sub => p - q,
                Binary::Mul => p * q,
            })
            .collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        Ok(self.record(out, &[a, b], Box::new(BinaryOp(kind))))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", Binary::Mul, a, b)
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|p| scale * p + shift).collect();
        let out = Tensor::from_parts(v.shape().to_vec(), data);
        self.record(out, &[x], Box::new(AffineOp { scale }))
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// Adds a per-channel bias `[C]` to `[B, C, T]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c, t) = dims3("add_bias", self.value(x))?;
        if self.shape(bias) != [c] {
            return Err(shape_err(
                "add_bias",
                "channels",
                format!("bias {:?} for {c} channels", self.shape(bias)),
            ));
        }
        let b = self.value(bias).data().to_vec();
        let v = self.value(x);
        let mut data = v.data().to_vec();
        for (i, chunk) in data.chunks_mut(t).enumerate() {
            let bv = b[i % c];
            chunk.iter_mut().for_each(|p| *p += bv);
        }
        let out = Tensor::from_parts(v.shape().to_vec(), data);
        Ok(self.record(out, &[x, bias], Box::new(AddBiasOp)))
    }

    pub fn pointwise(&mut self, x: Var, kind: Pointwise) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&p| kind.apply(p)).collect();
        let out = Tensor::from_parts(v.shape().to_vec(), data);
        if let Some(at) = kind.kink() {
            self.note_kinks(x, at);
        }
        self.record(out, &[x], Box::new(PointwiseOp(kind)))
    }

    pub fn leaky_relu(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::LeakyRelu(LEAKY_SLOPE))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::Exp)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::Log)
    }

    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&p| p.max(floor)).collect();
        let out = Tensor::from_parts(v.shape().to_vec(), data);
        self.note_kinks(x, floor);
        self.record(out, &[x], Box::new(ClampMinOp { floor }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = compensated_sum(self.value(x).data());
        self.record(Tensor::scalar(s), &[x], Box::new(SumOp { scale: 1.0 }))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = v.len() as f64;
        let s = compensated_sum(v.data()) / n;
        self.record(Tensor::scalar(s), &[x], Box::new(SumOp { scale: 1.0 / n }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.record(out, &[x], Box::new(ReshapeOp)))
    }

    /// Channel-axis concatenation of `[B, C_i, T]` tensors.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let (b, _, t) = dims3("concat", self.value(parts[0]))?;
        let mut channels = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pb, pc, pt) = dims3("concat", self.value(p))?;
            if pb != b {
                return Err(shape_err("concat", "batch", format!("{pb} vs {b}")));
            }
            if pt != t {
                return Err(shape_err("concat", "time", format!("{pt} vs {t}")));
            }
            channels.push(pc);
        }
        let c_total: usize = channels.iter().sum();
        let mut data = Vec::with_capacity(b * c_total * t);
        for bi in 0..b {
            for (&p, &c) in parts.iter().zip(&channels) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[bi * c * t..(bi + 1) * c * t]);
            }
        }
        let out = Tensor::from_parts(vec![b, c_total, t], data);
        Ok(self.record(out, parts, Box::new(ConcatOp { channels })))
    }

    /// `out[j] = x[index[j]]`, reshaped to `shape`.
    pub fn gather(&mut self, x: Var, index: Arc<Vec<usize>>, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(shape_err(
                "gather",
                "length",
                format!("{n} vs {}", index.len()),
            ));
        }
        let src = self.value(x).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(shape_err(
                "gather",
                "index",
                format!("{bad} >= {}", src.len()),
            ));
        }
        let data = index.iter().map(|&i| src[i]).collect();
        let out = Tensor::from_parts(shape.to_vec(), data);
        Ok(self.record(out, &[x], Box::new(GatherOp { index })))
    }

    /// Reflect-pads the time axis of `[B, C, T]` by `left`/`right` samples.
    pub fn reflect_pad(&mut self, x: Var, left: usize, right: usize) -> Result<Var> {
        let (b, c, t) = dims3("reflect_pad", self.value(x))?;
        let t_out = t + left + right;
        let mut index = Vec::with_capacity(b * c * t_out);
        for row in 0..b * c {
            for j in 0..t_out {
                index.push(row * t + reflect_index(j as isize - left as isize, t));
            }
        }
        self.gather(x, Arc::new(index), &[b, c, t_out])
    }

    /// Time slice `[start, start+len)` of `[B, C, T]`.
    pub fn slice_time(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (b, c, t) = dims3("slice_time", self.value(x))?;
        if start + len > t || len == 0 {
            return Err(shape_err(
                "slice_time",
                "time",
                format!("[{start}, {}) of {t}", start + len),
            ));
        }
        let index = (0..b * c)
            .flat_map(|row| (start..start + len).map(move |j| row * t + j))
            .collect();
        self.gather(x, Arc::new(index), &[b, c, len])
    }

    /// `[B, M, N] -> [B, N, M]`.
    pub fn transpose12(&mut self, x: Var) -> Result<Var> {
        let (b, m, n) = dims3("transpose", self.value(x))?;
        let data = transpose12(b, m, n, self.value(x).data());
        let out = Tensor::from_parts(vec![b, n, m], data);
        Ok(self.record(out, &[x], Box::new(Transpose12Op)))
    }

    /// Batched left product `m [R, K] · x[b] [K, N] -> [B, R, N]`.
    pub fn linear_map(&mut self, m: Var, x: Var) -> Result<Var> {
        let (r, k) = match *self.shape(m) {
            [r, k] => (r, k),
            _ => {
                return Err(shape_err(
                    "linear_map",
                    "rank",
                    format!("{:?}", self.shape(m)),
                ))
            }
        };
        let (b, kx, n) = dims3("linear_map", self.value(x))?;
        if kx != k {
            return Err(shape_err("linear_map", "inner", format!("{k} vs {kx}")));
        }
        let mut data = vec![0.0; b * r * n];
        let (mv, xv) = (self.value(m).data(), self.value(x).data());
        for bi in 0..b {
            gemm(
                r,
                k,
                n,
                mv,
                false,
                &xv[bi * k * n..(bi + 1) * k * n],
                false,
                &mut data[bi * r * n..(bi + 1) * r * n],
                0.0,
            );
        }
        let out = Tensor::from_parts(vec![b, r, n], data);
        Ok(self.record(out, &[m, x], Box::new(LinearMapOp)))
    }

    /// Mean absolute difference.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let d = self.pointwise(d, Pointwise::Abs);
        Ok(self.mean(d))
    }

    /// `mean((x - target)^2)` against a constant target value.
    pub fn mse_to(&mut self, x: Var, target: f64) -> Var {
        let d = self.affine(x, 1.0, -target);
        let d = self.pointwise(d, Pointwise::Square);
        self.mean(d)
    }

    /// Average pooling over time for `[B, C, T]`, zero padding counted.
    pub fn avg_pool(
        &mut self,
        x: Var,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        if kernel == 0 || stride == 0 {
            return Err(hyper_err(
                "avg_pool",
                "kernel/stride",
                format!("{kernel}/{stride}"),
            ));
        }
        let (_, c, _) = dims3("avg_pool", self.value(x))?;
        let mut w = vec![0.0; c * c * kernel];
        for ch in 0..c {
            for k in 0..kernel {
                w[(ch * c + ch) * kernel + k] = 1.0 / kernel as f64;
            }
        }
        let w = self.constant(Tensor::from_parts(vec![c, c, kernel], w));
        self.conv1d(x, w, None, stride, 1, padding)
    }
}
