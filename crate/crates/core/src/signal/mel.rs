//! HTK-scale log-mel features, plus the matching differentiable path used by
//! the reconstruction losses.

use std::sync::Arc;

use super::stft::{FrameParams, Stft};
use super::wav::Waveform;
use crate::autodiff::{Graph, Tensor, Var, Window};
use crate::error::{Error, Result};

/// Floor applied to mel energies before the natural log.
pub const MEL_FLOOR: f64 = 1e-5;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, `n_mels × n_bins`, peak value 1.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub weights: Vec<f64>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(p: &FrameParams) -> Result<Self> {
        p.validate()?;
        let n_bins = p.n_bins();
        let (lo, hi) = (hz_to_mel(p.fmin), hz_to_mel(p.fmax));
        let edges: Vec<f64> = (0..p.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (p.n_mels + 1) as f64))
            .collect();
        let bin_hz = p.sample_rate as f64 / p.n_fft as f64;
        let mut weights = vec![0.0; p.n_mels * n_bins];
        for m in 0..p.n_mels {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f > l && f <= c {
                    (f - l) / (c - l)
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
                weights[m * n_bins + k] = w;
            }
        }
        Ok(Self {
            n_mels: p.n_mels,
            n_bins,
            weights,
            centers_hz: edges[1..=p.n_mels].to_vec(),
        })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// `frames × n_mels` natural-log mel energies, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub n_mels: usize,
    pub values: Vec<f64>,
}

impl MelSpectrogram {
    pub fn new(n_mels: usize, values: Vec<f64>) -> Result<Self> {
        if n_mels == 0 || values.len() % n_mels != 0 {
            return Err(Error::Format(format!(
                "{} values do not form rows of {n_mels}",
                values.len()
            )));
        }
        Ok(Self { n_mels, values })
    }

    pub fn frames(&self) -> usize {
        self.values.len() / self.n_mels
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_mels..(i + 1) * self.n_mels]
    }

    /// Frames `[start, start+len)`.
    pub fn slice(&self, start: usize, len: usize) -> MelSpectrogram {
        MelSpectrogram {
            n_mels: self.n_mels,
            values: self.values[start * self.n_mels..(start + len) * self.n_mels].to_vec(),
        }
    }

    pub fn truncate(&mut self, frames: usize) {
        self.values.truncate(frames * self.n_mels);
    }

    /// Channel-major `[1, n_mels, frames]` network input.
    pub fn to_tensor(&self) -> Tensor {
        let f = self.frames();
        let mut data = vec![0.0; self.values.len()];
        for t in 0..f {
            for m in 0..self.n_mels {
                data[m * f + t] = self.values[t * self.n_mels + m];
            }
        }
        Tensor::new(&[1, self.n_mels, f], data).expect("non-empty mel")
    }

    /// Inverse of [`MelSpectrogram::to_tensor`] for one batch item.
    pub fn from_channel_major(n_mels: usize, frames: usize, data: &[f64]) -> Self {
        let mut values = vec![0.0; n_mels * frames];
        for m in 0..n_mels {
            for t in 0..frames {
                values[t * n_mels + m] = data[m * frames + t];
            }
        }
        Self { n_mels, values }
    }
}

/// Precomputed STFT plan and filterbank.
pub struct MelAnalyzer {
    stft: Stft,
    bank: Arc<MelFilterbank>,
}

impl MelAnalyzer {
    pub fn new(p: &FrameParams) -> Result<Self> {
        Ok(Self {
            stft: Stft::new(p)?,
            bank: Arc::new(MelFilterbank::new(p)?),
        })
    }

    pub fn params(&self) -> &FrameParams {
        self.stft.params()
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn log_mel_samples(&self, x: &[f64]) -> MelSpectrogram {
        let n_mels = self.bank.n_mels;
        let values = self
            .stft
            .power(x)
            .iter()
            .flat_map(|row| self.bank.apply(row))
            .map(|e| e.max(MEL_FLOOR).ln())
            .collect();
        MelSpectrogram { n_mels, values }
    }

    pub fn log_mel(&self, w: &Waveform) -> Result<MelSpectrogram> {
        if w.sample_rate != self.params().sample_rate {
            return Err(Error::Config(format!(
                "log_mel expects {} Hz input, got {}",
                self.params().sample_rate,
                w.sample_rate
            )));
        }
        Ok(self.log_mel_samples(&w.samples))
    }

    /// Differentiable log-mel of `x [B, 1, T]` as `[B, n_mels, frames]`,
    /// numerically consistent with [`MelAnalyzer::log_mel`].
    pub fn log_mel_graph(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let p = self.params();
        if p.win_len != p.n_fft {
            return Err(Error::Config(
                "differentiable mel path needs win_len == n_fft".into(),
            ));
        }
        let half = p.n_fft / 2;
        let padded = g.reflect_pad(x, half, half)?;
        let power = g.framed_dft_power(padded, p.n_fft, p.hop, Window::Hann)?;
        let fb = g.constant(Tensor::new(
            &[self.bank.n_mels, self.bank.n_bins],
            self.bank.weights.clone(),
        )?);
        let mel = g.linear_map(fb, power)?;
        let mel = g.clamp_min(mel, MEL_FLOOR);
        Ok(g.ln(mel))
    }
}

pub fn log_mel(w: &Waveform, p: &FrameParams) -> Result<MelSpectrogram> {
    MelAnalyzer::new(p)?.log_mel(w)
}
