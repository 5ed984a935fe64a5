//! Differentiable framed power spectrum.
//!
//! The DFT is an explicit dense product with a cosine/sine basis so that the
//! backward pass is the transpose product.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use super::graph::{Backward, BackwardCtx, Graph, Var};
use super::linalg::gemm;
use super::ops::dims3;
use super::tensor::Tensor;
use crate::error::{hyper_err, shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => hann_periodic(n),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// `[N, 2F]` basis: cosines in columns `0..F`, sines in `F..2F`.
fn dft_basis(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("dft basis cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let f = n / 2 + 1;
            let mut basis = vec![0.0; n * 2 * f];
            for i in 0..n {
                for k in 0..f {
                    // Reduce i*k mod n first so the angle stays exact for large products.
                    let ang = 2.0 * PI * ((i * k) % n) as f64 / n as f64;
                    basis[i * 2 * f + k] = ang.cos();
                    basis[i * 2 * f + f + k] = ang.sin();
                }
            }
            Arc::new(basis)
        })
        .clone()
}

struct FramedDftPowerOp {
    frame_len: usize,
    hop: usize,
    frames: usize,
    window: Vec<f64>,
    basis: Arc<Vec<f64>>,
    /// Per batch item `[frames, 2F]` real/imaginary parts.
    spectra: Vec<Vec<f64>>,
}

impl Backward for FramedDftPowerOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let x = ctx.inputs[0];
        let t = x.shape()[2];
        let n = self.frame_len;
        let f = n / 2 + 1;
        let mut dx = vec![0.0; x.len()];
        let mut dz = vec![0.0; self.frames * 2 * f];
        let mut dframes = vec![0.0; self.frames * n];
        for (bi, z) in self.spectra.iter().enumerate() {
            let gp = &grad[bi * f * self.frames..(bi + 1) * f * self.frames];
            for fr in 0..self.frames {
                for k in 0..f {
                    let g = gp[k * self.frames + fr];
                    dz[fr * 2 * f + k] = 2.0 * z[fr * 2 * f + k] * g;
                    dz[fr * 2 * f + f + k] = 2.0 * z[fr * 2 * f + f + k] * g;
                }
            }
            gemm(
                self.frames,
                2 * f,
                n,
                &dz,
                false,
                &self.basis,
                true,
                &mut dframes,
                0.0,
            );
            let dxb = &mut dx[bi * t..(bi + 1) * t];
            for fr in 0..self.frames {
                let start = fr * self.hop;
                for i in 0..n {
                    dxb[start + i] += dframes[fr * n + i] * self.window[i];
                }
            }
        }
        vec![Some(dx)]
    }
}

impl Graph {
    /// Power spectrum `|DFT|^2` of windowed frames of `x [B, 1, T]`, laid out
    /// as `[B, frame_len/2 + 1, frames]`. No padding is applied.
    pub fn framed_dft_power(
        &mut self,
        x: Var,
        frame_len: usize,
        hop: usize,
        window: Window,
    ) -> Result<Var> {
        if frame_len == 0 {
            return Err(hyper_err("framed_dft_power", "frame_len", frame_len));
        }
        if hop == 0 {
            return Err(hyper_err("framed_dft_power", "hop", hop));
        }
        let (b, c, t) = dims3("framed_dft_power", self.value(x))?;
        if c != 1 {
            return Err(shape_err(
                "framed_dft_power",
                "channels",
                format!("expected 1, got {c}"),
            ));
        }
        if t < frame_len {
            return Err(Error::TooShort { len: t, frame_len });
        }
        let n = frame_len;
        let f = n / 2 + 1;
        let frames = (t - n) / hop + 1;
        let win = window.coefficients(n);
        let basis = dft_basis(n);
        let mut out = vec![0.0; b * f * frames];
        let mut spectra = Vec::with_capacity(b);
        let mut framed = vec![0.0; frames * n];
        {
            let xv = self.value(x).data();
            for bi in 0..b {
                let xb = &xv[bi * t..(bi + 1) * t];
                for fr in 0..frames {
                    let start = fr * hop;
                    for i in 0..n {
                        framed[fr * n + i] = xb[start + i] * win[i];
                    }
                }
                let mut z = vec![0.0; frames * 2 * f];
                gemm(frames, n, 2 * f, &framed, false, &basis, false, &mut z, 0.0);
                let ob = &mut out[bi * f * frames..(bi + 1) * f * frames];
                for fr in 0..frames {
                    for k in 0..f {
                        let re = z[fr * 2 * f + k];
                        let im = z[fr * 2 * f + f + k];
                        ob[k * frames + fr] = re * re + im * im;
                    }
                }
                spectra.push(z);
            }
        }
        let op = FramedDftPowerOp {
            frame_len: n,
            hop,
            frames,
            window: win,
            basis,
            spectra,
        };
        let out = Tensor::from_parts(vec![b, f, frames], out);
        Ok(self.record(out, &[x], Box::new(op)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_zero_power() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 1, 64]));
        let p = g.framed_dft_power(x, 32, 8, Window::Hann).unwrap();
        assert_eq!(g.shape(p), &[1, 17, 5]);
        assert!(g.value(p).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_tone_concentrates_in_one_bin() {
        let n = 64;
        let k0 = 5;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * k0 as f64 * i as f64 / n as f64).cos())
            .collect();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[1, 1, n], x).unwrap());
        let p = g.framed_dft_power(x, n, n, Window::Rectangular).unwrap();
        let p = g.value(p).data();
        let peak = p[k0];
        assert!((peak - (n as f64 / 2.0).powi(2)).abs() < 1e-8);
        for (k, &v) in p.iter().enumerate() {
            if k != k0 {
                assert!(v < 1e-10 * peak, "bin {k}: {v}");
            }
        }
    }

    #[test]
    fn short_input_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 1, 10]));
        assert!(matches!(
            g.framed_dft_power(x, 16, 4, Window::Hann),
            Err(Error::TooShort { .. })
        ));
    }
}
