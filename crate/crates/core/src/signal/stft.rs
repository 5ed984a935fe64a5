use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::autodiff::{hann_periodic, reflect_index};
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 24000;

/// Framing and mel-analysis configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameParams {
    pub n_fft: usize,
    pub hop: usize,
    pub win_len: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            win_len: 1024,
            n_mels: 80,
            fmin: 0.0,
            fmax: 12000.0,
            sample_rate: SAMPLE_RATE,
        }
    }
}

impl FrameParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hop == 0 || self.hop > self.win_len || self.win_len > self.n_fft {
            return bad(format!(
                "need 0 < hop <= win_len <= n_fft, got {}/{}/{}",
                self.hop, self.win_len, self.n_fft
            ));
        }
        if self.n_mels == 0 || self.n_mels >= self.n_fft / 2 + 1 {
            return bad(format!("n_mels {} out of range", self.n_mels));
        }
        if !(self.fmin >= 0.0
            && self.fmin < self.fmax
            && self.fmax <= self.sample_rate as f64 / 2.0)
        {
            return bad(format!(
                "fmin/fmax {}/{} out of range",
                self.fmin, self.fmax
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count under center padding.
    pub fn frames_for(&self, samples: usize) -> usize {
        samples / self.hop + 1
    }

    /// Hann window of `win_len`, zero-padded symmetrically to `n_fft`.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_fft];
        let off = (self.n_fft - self.win_len) / 2;
        w[off..off + self.win_len].copy_from_slice(&hann_periodic(self.win_len));
        w
    }
}

/// Reusable FFT plan for one [`FrameParams`].
pub struct Stft {
    params: FrameParams,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(params: &FrameParams) -> Result<Self> {
        params.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(params.n_fft);
        Ok(Self {
            params: params.clone(),
            window: params.window(),
            fft,
        })
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    /// One-sided complex spectra, one row of `n_fft/2 + 1` bins per frame.
    pub fn complex(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        let p = &self.params;
        if x.is_empty() {
            return vec![vec![Complex64::new(0.0, 0.0); p.n_bins()]];
        }
        let pad = (p.n_fft / 2) as isize;
        let frames = p.frames_for(x.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); p.n_fft];
        (0..frames)
            .map(|f| {
                let start = (f * p.hop) as isize - pad;
                for (i, b) in buf.iter_mut().enumerate() {
                    let s = x[reflect_index(start + i as isize, x.len())];
                    *b = Complex64::new(s * self.window[i], 0.0);
                }
                self.fft.process(&mut buf);
                buf[..p.n_bins()].to_vec()
            })
            .collect()
    }

    /// Power spectrogram, `frames × bins`.
    pub fn power(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.complex(x)
            .into_iter()
            .map(|row| row.iter().map(|c| c.norm_sqr()).collect())
            .collect()
    }
}

pub fn stft(x: &[f64], params: &FrameParams) -> Result<Vec<Vec<Complex64>>> {
    Ok(Stft::new(params)?.complex(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_input_zero_spectrum() {
        let s = stft(&[0.0; 3000], &FrameParams::default()).unwrap();
        assert_eq!(s.len(), 3000 / 256 + 1);
        assert!(s.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn impulse_at_frame_center_is_flat() {
        let p = FrameParams::default();
        let mut x = vec![0.0; 4096];
        // Frame 8 is centered on sample 8 * 256.
        x[8 * 256] = 1.0;
        let s = stft(&x, &p).unwrap();
        let center = p.window()[p.n_fft / 2];
        assert_eq!(center, 1.0);
        for c in &s[8] {
            assert!((c.norm() - center).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let p = FrameParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..5000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let st = Stft::new(&p).unwrap();
        let spec = st.complex(&x);
        let w = p.window();
        for (f, row) in spec.iter().enumerate().take(10) {
            let start = (f * p.hop) as isize - 512;
            let time: f64 = (0..p.n_fft)
                .map(|i| (x[reflect_index(start + i as isize, x.len())] * w[i]).powi(2))
                .sum();
            // Expand the one-sided spectrum back to the full N bins.
            let mut full: f64 = row.iter().map(|c| c.norm_sqr()).sum::<f64>() * 2.0;
            full -= row[0].norm_sqr() + row[p.n_fft / 2].norm_sqr();
            let rel = (time - full / p.n_fft as f64).abs() / time;
            assert!(rel < 1e-10, "frame {f}: {rel}");
        }
    }

    #[test]
    fn short_input_uses_repeated_reflection() {
        let s = stft(&[0.3], &FrameParams::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0][0].norm() > 0.0);
    }
}
