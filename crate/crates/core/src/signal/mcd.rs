//! Mel-cepstra by orthonormal DCT-II of log-mel frames, and mel cepstral
//! distortion between aligned cepstra.

use std::f64::consts::{LN_10, PI};

use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 25;

/// Orthonormal DCT-II of `x`, keeping the first `d` coefficients.
pub fn dct2(x: &[f64], d: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..d)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale * s
        })
        .collect()
}

/// Inverse of [`dct2`] given `d ≤ n` coefficients (missing ones taken as 0).
pub fn idct2(c: &[f64], n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let scale = if k == 0 {
                        (1.0 / nf).sqrt()
                    } else {
                        (2.0 / nf).sqrt()
                    };
                    scale * v * (PI * k as f64 * (i as f64 + 0.5) / nf).cos()
                })
                .sum()
        })
        .collect()
}

/// `frames × order` mel-cepstral coefficients, `c0` first.
#[derive(Clone, Debug, PartialEq)]
pub struct MelCepstra {
    pub order: usize,
    pub values: Vec<f64>,
}

impl MelCepstra {
    pub fn from_mel(mel: &MelSpectrogram, order: usize) -> Result<Self> {
        if order == 0 || order > mel.n_mels {
            return Err(Error::Config(format!(
                "cepstral order {order} outside 1..={}",
                mel.n_mels
            )));
        }
        let values = (0..mel.frames())
            .flat_map(|t| dct2(mel.frame(t), order))
            .collect();
        Ok(Self { order, values })
    }

    pub fn frames(&self) -> usize {
        self.values.len() / self.order
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.order..(i + 1) * self.order]
    }
}

/// Mean over frames of `(10 / ln 10) · sqrt(2 · Σ_{d≥1} (a_d − b_d)²)`.
pub fn mcd(a: &MelCepstra, b: &MelCepstra) -> Result<f64> {
    if a.frames() != b.frames() {
        return Err(Error::FrameMismatch(a.frames(), b.frames()));
    }
    if a.order != b.order {
        return Err(Error::Config(format!(
            "cepstral orders {} and {} differ",
            a.order, b.order
        )));
    }
    if a.frames() == 0 {
        return Ok(0.0);
    }
    let k = 10.0 / LN_10;
    let total: f64 = (0..a.frames())
        .map(|t| {
            let d2: f64 = a.frame(t)[1..]
                .iter()
                .zip(&b.frame(t)[1..])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            k * (2.0 * d2).sqrt()
        })
        .sum();
    Ok(total / a.frames() as f64)
}

/// MCD of two log-mel spectrograms at the default order, truncating both to
/// the shorter frame count.
pub fn mel_mcd(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    let f = a.frames().min(b.frames());
    let ca = MelCepstra::from_mel(&a.slice(0, f), DEFAULT_ORDER)?;
    let cb = MelCepstra::from_mel(&b.slice(0, f), DEFAULT_ORDER)?;
    mcd(&ca, &cb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cep(frames: usize, seed: u64) -> MelCepstra {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        MelCepstra {
            order: 25,
            values: (0..frames * 25).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        }
    }

    #[test]
    fn full_order_reconstructs_log_mel() {
        let x: Vec<f64> = (0..80).map(|i| ((i * 37) % 11) as f64 - 5.3).collect();
        let back = idct2(&dct2(&x, 80), 80);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_cases() {
        let a = cep(7, 1);
        assert_eq!(mcd(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        for t in 0..7 {
            b.values[t * 25] += 4.0;
        }
        assert_eq!(mcd(&a, &b).unwrap(), 0.0);
        let mut c = a.clone();
        let delta = 0.37;
        c.values[3 * 25 + 5] += delta;
        let want = 10.0 / LN_10 * 2f64.sqrt() * delta / 7.0;
        assert!((mcd(&a, &c).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn frame_mismatch() {
        assert!(matches!(
            mcd(&cep(3, 1), &cep(4, 1)),
            Err(Error::FrameMismatch(3, 4))
        ));
    }

    proptest! {
        #[test]
        fn pseudo_metric(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000) {
            let (a, b, c) = (cep(5, s1), cep(5, s2), cep(5, s3));
            let ab = mcd(&a, &b).unwrap();
            prop_assert_eq!(ab, mcd(&b, &a).unwrap());
            prop_assert!(ab <= mcd(&a, &c).unwrap() + mcd(&c, &b).unwrap() + 1e-9);
        }
    }
}
