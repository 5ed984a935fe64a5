//! Source signals: sample-rate f0, harmonic sine excitation and Gaussian noise.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const F0_MIN: f64 = 40.0;
pub const F0_MAX: f64 = 1200.0;
/// Harmonic cap for the DSP vocoder's periodic source.
pub const DEFAULT_HARMONICS: usize = 200;
pub const DEFAULT_NOISE_AMPLITUDE: f64 = 0.1;

/// Frame-level f0 in Hz; 0 marks an unvoiced frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PitchContour {
    pub f0: Vec<f64>,
    pub hop: usize,
}

impl PitchContour {
    pub fn new(f0: Vec<f64>, hop: usize) -> Result<Self> {
        if let Some(&bad) = f0
            .iter()
            .find(|&&v| !(v == 0.0 || (F0_MIN..=F0_MAX).contains(&v)))
        {
            return Err(Error::InvalidF0(bad));
        }
        if hop == 0 {
            return Err(Error::Config("hop must be positive".into()));
        }
        Ok(Self { f0, hop })
    }

    pub fn constant(f0: f64, frames: usize, hop: usize) -> Result<Self> {
        Self::new(vec![f0; frames], hop)
    }

    pub fn frames(&self) -> usize {
        self.f0.len()
    }

    pub fn is_voiced(&self, n: usize) -> bool {
        self.f0[n] > 0.0
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.f0.is_empty() {
            return 0.0;
        }
        self.f0.iter().filter(|&&v| v > 0.0).count() as f64 / self.f0.len() as f64
    }
}

/// Sample-level f0 of length `frames × hop`.
///
/// Frame `n` is centered on sample `n·hop` and owns the samples nearest to
/// that center. Within a voiced frame, a sample is interpolated linearly
/// toward the neighbouring frame center on its side when that neighbour is
/// voiced, and otherwise holds the frame value. Unvoiced frames yield 0.
pub fn interpolate_f0(contour: &PitchContour) -> Vec<f64> {
    let hop = contour.hop;
    let frames = contour.frames();
    let f0 = &contour.f0;
    (0..frames * hop)
        .map(|t| {
            let n = ((t + hop / 2) / hop).min(frames - 1);
            let v = f0[n];
            if v == 0.0 {
                return 0.0;
            }
            let center = n * hop;
            let neighbour = if t > center && n + 1 < frames {
                Some(n + 1)
            } else if t < center && n > 0 {
                Some(n - 1)
            } else {
                None
            };
            match neighbour {
                Some(m) if f0[m] > 0.0 => {
                    let frac = (t as f64 - center as f64).abs() / hop as f64;
                    v + (f0[m] - v) * frac
                }
                _ => v,
            }
        })
        .collect()
}

/// `floor(min(k_max, fs / (2·f0)))`.
pub fn harmonic_count(f0: f64, fs: f64, k_max: usize) -> Result<usize> {
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::InvalidF0(f0));
    }
    Ok((fs / (2.0 * f0)).min(k_max as f64).floor() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExcitationKind {
    Harmonic(usize),
    Noise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Excitation {
    pub samples: Vec<f64>,
    pub kind: ExcitationKind,
}

/// Fundamental phase per sample, wrapped to `[0, 2π)`, restarting at 0 at
/// the first sample and at every unvoiced-to-voiced transition. Unvoiced
/// samples carry phase 0.
pub fn fundamental_phase(f0: &[f64], fs: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f0.len());
    let mut phi = 0.0;
    for (n, &f) in f0.iter().enumerate() {
        if f == 0.0 {
            phi = 0.0;
        } else if n > 0 && f0[n - 1] > 0.0 {
            phi = (phi + TAU * f / fs) % TAU;
        } else {
            phi = 0.0;
        }
        out.push(phi);
    }
    out
}

/// `Σ_{k=1}^{count(n)} sin(k·φ₁[n])` with the per-sample harmonic count.
pub fn sine_excitation(f0: &[f64], k_max: usize, fs: f64) -> Result<Excitation> {
    if let Some(&bad) = f0.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidF0(bad));
    }
    let phase = fundamental_phase(f0, fs);
    let samples = f0
        .iter()
        .zip(&phase)
        .map(|(&f, &phi)| {
            if f == 0.0 {
                return Ok(0.0);
            }
            let count = harmonic_count(f, fs, k_max)?;
            // sin(kφ) = 2cos(φ)·sin((k-1)φ) − sin((k-2)φ)
            let (s1, c1) = phi.sin_cos();
            let (mut prev, mut cur) = (0.0, s1);
            let mut acc = 0.0;
            for _ in 0..count {
                acc += cur;
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Excitation {
        samples,
        kind: ExcitationKind::Harmonic(k_max),
    })
}

/// i.i.d. `N(0, amplitude²)` samples, deterministic in `seed`.
pub fn noise_source(length: usize, seed: u64, amplitude: f64) -> Result<Excitation> {
    if length == 0 {
        return Err(Error::Config("noise length must be positive".into()));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::Config(format!(
            "noise amplitude {amplitude} invalid"
        )));
    }
    let samples = if amplitude == 0.0 {
        vec![0.0; length]
    } else {
        let dist = Normal::new(0.0, amplitude).expect("valid deviation");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..length).map(|_| dist.sample(&mut rng)).collect()
    };
    Ok(Excitation {
        samples,
        kind: ExcitationKind::Noise,
    })
}
