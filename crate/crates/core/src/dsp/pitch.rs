//! Reference pitch tracking and the mel-to-f0 predictor network.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::autodiff::checkpoint::Header;
use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::excitation::{PitchContour, F0_MAX, F0_MIN};
use crate::nn::ConvStack;
use crate::signal::{MelSpectrogram, Waveform};

/// Normalized-autocorrelation peak above which a frame counts as voiced.
pub const VOICING_THRESHOLD: f64 = 0.45;
const ANALYSIS_WINDOW: usize = 1024;
/// Frames whose mean-square energy is below this are unvoiced outright.
const SILENCE_POWER: f64 = 1e-10;
/// Offset added to the log-f0 head so an untrained net starts near 150 Hz.
pub const LOG_F0_CENTER: f64 = 5.0;

/// Autocorrelation pitch tracker with one estimate per `hop` samples,
/// frames centred on `n·hop` as in the mel analysis.
pub fn extract_f0_reference(w: &Waveform, hop: usize) -> Result<PitchContour> {
    if w.sample_rate == 0 || hop == 0 {
        return Err(Error::Config(
            "pitch tracking needs a positive rate and hop".into(),
        ));
    }
    let fs = w.sample_rate as f64;
    let min_lag = (fs / F0_MAX).floor() as usize;
    let max_lag = (fs / F0_MIN).ceil() as usize;
    let win = ANALYSIS_WINDOW;
    let n_fft = (win + max_lag + 1).next_power_of_two() * 2;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);
    let x = &w.samples;
    let frames = x.len() / hop + 1;
    let span = win + max_lag + 1;
    let mut f0 = vec![0.0; frames];
    let mut seg = vec![0.0; span];
    for (n, out) in f0.iter_mut().enumerate() {
        let start = (n * hop) as isize - (win / 2) as isize;
        for (j, s) in seg.iter_mut().enumerate() {
            let t = start + j as isize;
            *s = if t >= 0 && (t as usize) < x.len() {
                x[t as usize]
            } else {
                0.0
            };
        }
        let e0: f64 = seg[..win].iter().map(|v| v * v).sum();
        if e0 / (win as f64) < SILENCE_POWER {
            continue;
        }
        // Cross-correlation of the analysis window against the longer span.
        let mut a: Vec<Complex64> = (0..n_fft)
            .map(|i| Complex64::new(if i < win { seg[i] } else { 0.0 }, 0.0))
            .collect();
        let mut b: Vec<Complex64> = (0..n_fft)
            .map(|i| Complex64::new(if i < span { seg[i] } else { 0.0 }, 0.0))
            .collect();
        fwd.process(&mut a);
        fwd.process(&mut b);
        for (p, q) in a.iter_mut().zip(&b) {
            *p = p.conj() * q;
        }
        inv.process(&mut a);
        let mut prefix = vec![0.0; span + 1];
        for i in 0..span {
            prefix[i + 1] = prefix[i] + seg[i] * seg[i];
        }
        let nccf: Vec<f64> = (0..=max_lag + 1)
            .map(|lag| {
                let el = prefix[lag + win] - prefix[lag];
                let r = a[lag].re / n_fft as f64;
                if el <= 0.0 {
                    0.0
                } else {
                    r / (e0 * el).sqrt()
                }
            })
            .collect();
        let peaks: Vec<usize> = (min_lag.max(1)..=max_lag)
            .filter(|&l| nccf[l] > nccf[l - 1] && nccf[l] >= nccf[l + 1])
            .collect();
        let Some(best) = peaks.iter().map(|&l| nccf[l]).reduce(f64::max) else {
            continue;
        };
        if best <= VOICING_THRESHOLD {
            continue;
        }
        let lag = *peaks
            .iter()
            .find(|&&l| nccf[l] >= 0.95 * best)
            .expect("maximum is among the peaks");
        let (y0, y1, y2) = (nccf[lag - 1], nccf[lag], nccf[lag + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        let shift = if denom.abs() > 1e-12 {
            0.5 * (y0 - y2) / denom
        } else {
            0.0
        };
        *out = (fs / (lag as f64 + shift.clamp(-0.5, 0.5))).clamp(F0_MIN, F0_MAX);
    }
    median_filter_voiced(&mut f0);
    PitchContour::new(f0, hop)
}

/// Width-3 median inside voiced runs; run endpoints are kept.
fn median_filter_voiced(f0: &mut [f64]) {
    let src = f0.to_vec();
    for i in 1..src.len().saturating_sub(1) {
        if src[i - 1] > 0.0 && src[i] > 0.0 && src[i + 1] > 0.0 {
            let mut w = [src[i - 1], src[i], src[i + 1]];
            w.sort_by(|a, b| a.partial_cmp(b).expect("finite f0"));
            f0[i] = w[1];
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PitchConfig {
    pub n_mels: usize,
    pub hidden: usize,
    pub layers: usize,
    pub kernel: usize,
    pub hop: usize,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            hidden: 256,
            layers: 4,
            kernel: 3,
            hop: 256,
        }
    }
}

/// Mel to per-frame `(log f0, voicing logit)`.
pub struct PitchPredictor {
    pub config: PitchConfig,
    pub store: ParamStore,
    net: ConvStack,
}

impl PitchPredictor {
    pub fn new(config: PitchConfig, seed: u64) -> Result<Self> {
        if config.kernel % 2 == 0 || config.layers == 0 || config.hidden == 0 {
            return Err(Error::Config(
                "pitch net needs positive width/depth and an odd kernel".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let net = ConvStack::new(
            &mut store,
            "pitch",
            config.n_mels,
            config.hidden,
            2,
            config.layers,
            config.kernel,
            false,
            &mut rng,
        );
        Ok(Self { config, store, net })
    }

    pub fn header(&self) -> Header {
        let mut h = Header::new();
        h.set("model", "pitch");
        h.set("n_mels", self.config.n_mels);
        h.set("hidden", self.config.hidden);
        h.set("layers", self.config.layers);
        h.set("kernel", self.config.kernel);
        h.set("hop", self.config.hop);
        h
    }

    pub fn from_checkpoint(header: &Header, params: &ParamStore) -> Result<Self> {
        let config = PitchConfig {
            n_mels: header.parse_value("n_mels")?,
            hidden: header.parse_value("hidden")?,
            layers: header.parse_value("layers")?,
            kernel: header.parse_value("kernel")?,
            hop: header.parse_value("hop")?,
        };
        let mut p = Self::new(config, 0)?;
        p.store.load_from(params)?;
        Ok(p)
    }

    /// `(log_f0 [B, 1, F], voicing_logit [B, 1, F])` for `mel [B, n_mels, F]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mel: Var) -> Result<(Var, Var)> {
        let shape = g.shape(mel).to_vec();
        if shape.len() != 3 || shape[1] != self.config.n_mels {
            return Err(shape_err("pitch predictor", "mel", format!("{shape:?}")));
        }
        let out = self.net.forward(g, store, mel)?;
        let (b, f) = (shape[0], shape[2]);
        let pick = |c: usize| -> Arc<Vec<usize>> {
            Arc::new(
                (0..b)
                    .flat_map(|bi| (0..f).map(move |t| (bi * 2 + c) * f + t))
                    .collect(),
            )
        };
        let raw = g.gather(out, pick(0), &[b, 1, f])?;
        let log_f0 = g.affine(raw, 1.0, LOG_F0_CENTER);
        let logit = g.gather(out, pick(1), &[b, 1, f])?;
        Ok((log_f0, logit))
    }

    /// Squared log-f0 error over voiced frames plus voicing cross-entropy.
    /// Returns `(total, log_f0_l2)`.
    pub fn loss(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        mel: Var,
        target_f0: &[f64],
    ) -> Result<(Var, Var)> {
        let (log_f0, logit) = self.forward(g, store, mel)?;
        let shape = g.shape(log_f0).to_vec();
        if target_f0.len() != shape.iter().product::<usize>() {
            return Err(Error::FrameMismatch(
                target_f0.len(),
                shape.iter().product(),
            ));
        }
        let voiced: Vec<f64> = target_f0
            .iter()
            .map(|&f| if f > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let count = voiced.iter().sum::<f64>().max(1.0);
        let log_target: Vec<f64> = target_f0
            .iter()
            .map(|&f| if f > 0.0 { f.ln() } else { 0.0 })
            .collect();
        let tgt = g.constant(Tensor::new(&shape, log_target)?);
        let mask = g.constant(Tensor::new(&shape, voiced)?);
        let diff = g.sub(log_f0, tgt)?;
        let diff = g.mul(diff, mask)?;
        let sq = g.pointwise(diff, crate::autodiff::Pointwise::Square);
        let sq = g.sum(sq);
        let l2 = g.scale(sq, 1.0 / count);
        // BCE with logits: softplus(z) − y·z
        let sp = g.pointwise(logit, crate::autodiff::Pointwise::Softplus);
        let yz = g.mul(logit, mask)?;
        let bce = g.sub(sp, yz)?;
        let bce = g.mean(bce);
        let total = g.add(l2, bce)?;
        Ok((total, l2))
    }
}

/// Frame-level f0 from a trained predictor: voiced where the voicing
/// probability exceeds one half, clamped to the supported range.
pub fn pitch_predict(mel: &MelSpectrogram, net: &PitchPredictor) -> Result<PitchContour> {
    let mut g = Graph::inference();
    let x = g.constant(mel.to_tensor());
    let (log_f0, logit) = net.forward(&mut g, &net.store, x)?;
    let f0 = g
        .value(log_f0)
        .data()
        .iter()
        .zip(g.value(logit).data())
        .map(|(&lf, &z)| {
            if z > 0.0 {
                lf.exp().clamp(F0_MIN, F0_MAX)
            } else {
                0.0
            }
        })
        .collect();
    PitchContour::new(f0, net.config.hop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    #[test]
    fn pure_sine_is_tracked() {
        for f in [100.0, 220.0, 437.0] {
            let x: Vec<f64> = (0..24000)
                .map(|n| 0.5 * (2.0 * PI * f * n as f64 / 24000.0).sin())
                .collect();
            let c = extract_f0_reference(&Waveform::new(x, 24000), 256).unwrap();
            assert_eq!(c.frames(), 94);
            for n in 3..c.frames() - 3 {
                assert!((c.f0[n] - f).abs() < 1.0, "{f}: frame {n} = {}", c.f0[n]);
            }
        }
    }

    #[test]
    fn noise_and_silence_are_unvoiced() {
        let c = extract_f0_reference(&Waveform::new(vec![0.0; 12000], 24000), 256).unwrap();
        assert!(c.f0.iter().all(|&v| v == 0.0));
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..24000).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let c = extract_f0_reference(&Waveform::new(x, 24000), 256).unwrap();
            assert!(
                c.voiced_fraction() <= 0.1,
                "seed {seed}: {}",
                c.voiced_fraction()
            );
        }
    }

    #[test]
    fn predictions_respect_range_and_voicing() {
        let net = PitchPredictor::new(
            PitchConfig {
                hidden: 8,
                ..PitchConfig::default()
            },
            2,
        )
        .unwrap();
        let mel = MelSpectrogram::new(80, vec![-4.0; 80 * 6]).unwrap();
        let c = pitch_predict(&mel, &net).unwrap();
        assert_eq!(c.frames(), 6);
        assert!(c
            .f0
            .iter()
            .all(|&v| v == 0.0 || (F0_MIN..=F0_MAX).contains(&v)));

        let mut silent = PitchPredictor::new(
            PitchConfig {
                hidden: 8,
                ..PitchConfig::default()
            },
            2,
        )
        .unwrap();
        // Drive the voicing logit to a large negative value.
        let last = silent.net.layers.last().unwrap().bias;
        silent.store.get_mut(last).value.data_mut()[1] = -1e6;
        let c = pitch_predict(&mel, &silent).unwrap();
        assert!(c.f0.iter().all(|&v| v == 0.0));
    }
}
