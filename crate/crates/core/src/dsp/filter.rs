//! Complex-cepstrum impulse responses and linear time-varying FIR filtering,
//! both as plain functions and as differentiable graph operations.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::autodiff::{Backward, BackwardCtx, Graph, Tensor, Var};
use crate::error::{shape_err, Error, Result};

/// Per-frame FIR taps, `frames × ir_len`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseResponseFrames {
    pub ir_len: usize,
    pub taps: Vec<f64>,
}

impl ImpulseResponseFrames {
    pub fn new(ir_len: usize, taps: Vec<f64>) -> Result<Self> {
        if ir_len == 0 || taps.len() % ir_len != 0 {
            return Err(Error::Format(format!(
                "{} taps are not rows of {ir_len}",
                taps.len()
            )));
        }
        Ok(Self { ir_len, taps })
    }

    pub fn frames(&self) -> usize {
        self.taps.len() / self.ir_len
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.taps[n * self.ir_len..(n + 1) * self.ir_len]
    }
}

struct CepstrumPlan {
    n_fft: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl CepstrumPlan {
    fn new(n_fft: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            n_fft,
            fwd: p.plan_fft_forward(n_fft),
            inv: p.plan_fft_inverse(n_fft),
        }
    }

    /// Returns the spectrum `H = exp(DFT(c))` and the truncated response.
    fn forward(&self, c: &[f64], ir_len: usize) -> (Vec<Complex64>, Vec<f64>) {
        let n = self.n_fft;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (b, &v) in buf.iter_mut().zip(c) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        let spec: Vec<Complex64> = buf.iter().map(|z| z.exp()).collect();
        let mut time = spec.clone();
        self.inv.process(&mut time);
        let h = time[..ir_len].iter().map(|z| z.re / n as f64).collect();
        (spec, h)
    }

    fn backward(&self, spec: &[Complex64], dh: &[f64], cep_len: usize) -> Vec<f64> {
        let n = self.n_fft;
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        for (b, &v) in g.iter_mut().zip(dh) {
            b.re = v;
        }
        self.fwd.process(&mut g);
        // g now holds N·(dHr + i·dHi); fold in dH/d(A + iB) for H = exp(A + iB).
        for (z, h) in g.iter_mut().zip(spec) {
            let (dr, di) = (z.re / n as f64, z.im / n as f64);
            *z = Complex64::new(dr * h.re + di * h.im, -dr * h.im + di * h.re);
        }
        self.inv.process(&mut g);
        g[..cep_len].iter().map(|z| z.re).collect()
    }
}

fn check_cepstrum(cep_len: usize, n_fft: usize, ir_len: usize) -> Result<()> {
    if cep_len == 0 || cep_len > n_fft {
        return Err(shape_err(
            "cepstrum_to_impulse",
            "cepstrum",
            format!("length {cep_len} vs n_fft {n_fft}"),
        ));
    }
    if ir_len == 0 || ir_len > n_fft {
        return Err(shape_err(
            "cepstrum_to_impulse",
            "ir_len",
            format!("{ir_len} vs n_fft {n_fft}"),
        ));
    }
    Ok(())
}

/// Each row of `ccep` (`frames × cep_len`) becomes
/// `real(IDFT(exp(DFT(c))))[..ir_len]` at `n_fft` points.
pub fn cepstrum_to_impulse(
    ccep: &[f64],
    cep_len: usize,
    n_fft: usize,
    ir_len: usize,
) -> Result<ImpulseResponseFrames> {
    check_cepstrum(cep_len, n_fft, ir_len)?;
    if ccep.len() % cep_len != 0 {
        return Err(shape_err(
            "cepstrum_to_impulse",
            "frames",
            format!("{} values", ccep.len()),
        ));
    }
    let plan = CepstrumPlan::new(n_fft);
    let taps = ccep
        .chunks_exact(cep_len)
        .flat_map(|c| plan.forward(c, ir_len).1)
        .collect();
    ImpulseResponseFrames::new(ir_len, taps)
}

struct CepstrumOp {
    plan: CepstrumPlan,
    spectra: Vec<Vec<Complex64>>,
    cep_len: usize,
    frames: usize,
    ir_len: usize,
}

impl Backward for CepstrumOp {
    fn backward(&self, _ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        // grad: [B, F, ir_len]; input: [B, L, F]
        let (l, f, r) = (self.cep_len, self.frames, self.ir_len);
        let batch = self.spectra.len() / f;
        let mut dc = vec![0.0; batch * l * f];
        for b in 0..batch {
            for t in 0..f {
                let row = &grad[(b * f + t) * r..(b * f + t + 1) * r];
                let d = self.plan.backward(&self.spectra[b * f + t], row, l);
                for (i, v) in d.into_iter().enumerate() {
                    dc[(b * l + i) * f + t] = v;
                }
            }
        }
        vec![Some(dc)]
    }
}

/// Overlap-add window of frame `n` at sample `t`.
fn frame_window(n: usize, frames: usize, hop: usize, t: usize) -> f64 {
    // Frame n spans [n·hop − hop, n·hop + hop) centred at n·hop.
    let center = n * hop;
    if n + 1 == frames && t >= center {
        return 1.0;
    }
    let u = t as f64 + hop as f64 - center as f64;
    let s = (PI * u / (2.0 * hop as f64)).sin();
    s * s
}

/// Sample range `[lo, hi)` and window of frame `n` within a `frames·hop` signal.
fn frame_support(n: usize, frames: usize, hop: usize) -> (usize, usize, Vec<f64>) {
    let lo = (n * hop).saturating_sub(hop);
    let hi = ((n + 1) * hop).min(frames * hop);
    let w = (lo..hi).map(|t| frame_window(n, frames, hop, t)).collect();
    (lo, hi, w)
}

/// Window-weighted segments convolved with each frame's taps and
/// overlap-added; the output has the source's length.
pub fn ltv_filter(source: &[f64], irs: &ImpulseResponseFrames, hop: usize) -> Result<Vec<f64>> {
    let frames = irs.frames();
    if hop == 0 || frames == 0 || source.len() != frames * hop {
        return Err(Error::FrameMismatch(source.len() / hop.max(1), frames));
    }
    let mut y = vec![0.0; source.len()];
    ltv_forward_into(source, &irs.taps, irs.ir_len, frames, hop, &mut y);
    Ok(y)
}

fn ltv_forward_into(
    x: &[f64],
    taps: &[f64],
    ir_len: usize,
    frames: usize,
    hop: usize,
    y: &mut [f64],
) {
    let total = frames * hop;
    let mut seg = Vec::with_capacity(2 * hop);
    for n in 0..frames {
        let h = &taps[n * ir_len..(n + 1) * ir_len];
        let (lo, hi, w) = frame_support(n, frames, hop);
        seg.clear();
        seg.extend(x[lo..hi].iter().zip(&w).map(|(a, b)| a * b));
        for (j, &s) in seg.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let start = lo + j;
            let k_max = ir_len.min(total - start);
            for (o, &hk) in y[start..start + k_max].iter_mut().zip(&h[..k_max]) {
                *o += s * hk;
            }
        }
    }
}

struct LtvOp {
    frames: usize,
    hop: usize,
    ir_len: usize,
}

impl Backward for LtvOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (frames, hop, r) = (self.frames, self.hop, self.ir_len);
        let total = frames * hop;
        let x = ctx.inputs[0].data();
        let taps = ctx.inputs[1].data();
        let batch = x.len() / total;
        let mut dx = ctx.needs[0].then(|| vec![0.0; x.len()]);
        let mut dh = ctx.needs[1].then(|| vec![0.0; taps.len()]);
        for b in 0..batch {
            let xb = &x[b * total..(b + 1) * total];
            let gy = &grad[b * total..(b + 1) * total];
            for n in 0..frames {
                let row = (b * frames + n) * r;
                let h = &taps[row..row + r];
                let (lo, hi, w) = frame_support(n, frames, hop);
                for (j, t) in (lo..hi).enumerate() {
                    let k_max = r.min(total - t);
                    let gseg = &gy[t..t + k_max];
                    if let Some(dx) = dx.as_mut() {
                        let s: f64 = gseg.iter().zip(&h[..k_max]).map(|(a, c)| a * c).sum();
                        dx[b * total + t] += w[j] * s;
                    }
                    if let Some(dh) = dh.as_mut() {
                        let s = w[j] * xb[t];
                        if s != 0.0 {
                            for (d, &g) in dh[row..row + k_max].iter_mut().zip(gseg) {
                                *d += s * g;
                            }
                        }
                    }
                }
            }
        }
        vec![dx, dh]
    }
}

impl Graph {
    /// `ccep [B, L, F]` (channel-major cepstra) to impulse responses
    /// `[B, F, ir_len]`.
    pub fn cepstrum_to_impulse(&mut self, ccep: Var, n_fft: usize, ir_len: usize) -> Result<Var> {
        let (b, l, f) = match *self.shape(ccep) {
            [b, l, f] => (b, l, f),
            _ => {
                return Err(shape_err(
                    "cepstrum_to_impulse",
                    "rank",
                    format!("{:?}", self.shape(ccep)),
                ))
            }
        };
        check_cepstrum(l, n_fft, ir_len)?;
        let plan = CepstrumPlan::new(n_fft);
        let src = self.value(ccep).data();
        let mut spectra = Vec::with_capacity(b * f);
        let mut out = Vec::with_capacity(b * f * ir_len);
        let mut c = vec![0.0; l];
        for bi in 0..b {
            for t in 0..f {
                for (i, v) in c.iter_mut().enumerate() {
                    *v = src[(bi * l + i) * f + t];
                }
                let (spec, h) = plan.forward(&c, ir_len);
                spectra.push(spec);
                out.extend(h);
            }
        }
        let value = Tensor::new(&[b, f, ir_len], out)?;
        let op = CepstrumOp {
            plan,
            spectra,
            cep_len: l,
            frames: f,
            ir_len,
        };
        Ok(self.record(value, &[ccep], Box::new(op)))
    }

    /// `source [B, 1, F·hop]` filtered by `irs [B, F, ir_len]`.
    pub fn ltv_filter(&mut self, source: Var, irs: Var, hop: usize) -> Result<Var> {
        let (b, f, r) = match *self.shape(irs) {
            [b, f, r] => (b, f, r),
            _ => {
                return Err(shape_err(
                    "ltv_filter",
                    "rank",
                    format!("{:?}", self.shape(irs)),
                ))
            }
        };
        let (sb, sc, st) = match *self.shape(source) {
            [sb, sc, st] => (sb, sc, st),
            _ => {
                return Err(shape_err(
                    "ltv_filter",
                    "rank",
                    format!("{:?}", self.shape(source)),
                ))
            }
        };
        if sb != b || sc != 1 {
            return Err(shape_err(
                "ltv_filter",
                "batch",
                format!(
                    "source {:?} vs irs {:?}",
                    self.shape(source),
                    self.shape(irs)
                ),
            ));
        }
        if hop == 0 || st != f * hop {
            return Err(Error::FrameMismatch(st / hop.max(1), f));
        }
        let x = self.value(source).data();
        let taps = self.value(irs).data();
        let mut y = vec![0.0; b * st];
        for bi in 0..b {
            ltv_forward_into(
                &x[bi * st..(bi + 1) * st],
                &taps[bi * f * r..(bi + 1) * f * r],
                r,
                f,
                hop,
                &mut y[bi * st..(bi + 1) * st],
            );
        }
        let value = Tensor::new(&[b, 1, st], y)?;
        let op = LtvOp {
            frames: f,
            hop,
            ir_len: r,
        };
        Ok(self.record(value, &[source, irs], Box::new(op)))
    }
}
