//! Rational polyphase resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use super::wav::Waveform;
use crate::error::{Error, Result};

pub const KAISER_BETA: f64 = 8.0;
/// Kernel half-width, in periods of the lower of the two rates.
pub const HALF_TAPS: usize = 32;
/// Cutoff as a fraction of the lower Nyquist frequency.
const CUTOFF: f64 = 0.92;

pub const MIN_RATE: u32 = 8000;
pub const MAX_RATE: u32 = 48000;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Per-phase FIR tables for a fixed `source -> target` conversion.
pub struct Resampler {
    up: usize,
    down: usize,
    reach: isize,
    phases: Vec<Vec<f64>>,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Result<Self> {
        for r in [source_rate, target_rate] {
            if !(MIN_RATE..=MAX_RATE).contains(&r) {
                return Err(Error::UnsupportedRate(r));
            }
        }
        let g = gcd(source_rate as u64, target_rate as u64);
        let up = (target_rate as u64 / g) as usize;
        let down = (source_rate as u64 / g) as usize;
        let rho = (up as f64 / down as f64).min(1.0);
        let half_width = HALF_TAPS as f64 / rho;
        let reach = half_width.ceil() as isize + 1;
        let norm = bessel_i0(KAISER_BETA);
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps: Vec<f64> = (-reach..=reach)
                    .map(|j| {
                        let tau = frac - j as f64;
                        let r = tau / half_width;
                        if r.abs() >= 1.0 {
                            0.0
                        } else {
                            let win = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                            CUTOFF * rho * sinc(CUTOFF * rho * tau) * win
                        }
                    })
                    .collect();
                let s: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= s);
                taps
            })
            .collect();
        Ok(Self {
            up,
            down,
            reach,
            phases,
        })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as f64) * self.up as f64 / self.down as f64).round() as usize
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let n_out = self.output_len(x.len());
        let len = x.len() as isize;
        (0..n_out)
            .map(|m| {
                let pos = m * self.down;
                let base = (pos / self.up) as isize;
                let taps = &self.phases[pos % self.up];
                // y[m] = sum_j x[base + j] h(frac - j)
                let mut acc = 0.0;
                for (i, &h) in taps.iter().enumerate() {
                    let n = base + i as isize - self.reach;
                    if n >= 0 && n < len {
                        acc += x[n as usize] * h;
                    }
                }
                acc
            })
            .collect()
    }
}

pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if w.sample_rate == target_rate {
        if !(MIN_RATE..=MAX_RATE).contains(&target_rate) {
            return Err(Error::UnsupportedRate(target_rate));
        }
        return Ok(w.clone());
    }
    let r = Resampler::new(w.sample_rate, target_rate)?;
    Ok(Waveform::new(r.process(&w.samples), target_rate))
}
