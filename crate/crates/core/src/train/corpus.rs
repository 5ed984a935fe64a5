//! Seeded synthetic speech-like corpus: harmonic voiced syllables through
//! drifting formant resonators, fricative noise bursts and pauses.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::excitation::{sine_excitation, F0_MAX, F0_MIN};
use crate::par::parallel_map;
use crate::signal::{write_wav, Codec, Sidecar, SidecarKind, Waveform, SAMPLE_RATE};

use super::data::{DatasetManifest, ManifestEntry, RatePolicy, Split};

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub train_clips: usize,
    pub valid_clips: usize,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    /// About five minutes of audio.
    fn default() -> Self {
        Self {
            train_clips: 96,
            valid_clips: 4,
            min_seconds: 2.5,
            max_seconds: 3.5,
            seed: 0,
        }
    }
}

/// One generated utterance and its frame-level f0 ground truth.
pub struct SyntheticClip {
    pub audio: Waveform,
    pub f0: Vec<f64>,
}

const HOP: usize = 256;
const FS: f64 = SAMPLE_RATE as f64;

/// Second-order resonator with per-sample centre frequency.
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tick(&mut self, x: f64, freq: f64, bandwidth: f64) -> f64 {
        let r = (-PI * bandwidth / FS).exp();
        let theta = 2.0 * PI * freq / FS;
        let gain = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
        let y = gain * x + 2.0 * r * theta.cos() * self.y1 - r * r * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Generates one clip; a pure function of `seed`.
pub fn synthesize_clip(seed: u64, seconds: f64) -> Result<SyntheticClip> {
    if !(seconds >= 1.0) {
        return Err(Error::Config(format!(
            "clip length {seconds} s below one second"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (seconds * FS) as usize;
    let base_f0 = rng.gen_range(95.0..210.0);
    let vib_rate = rng.gen_range(4.0..6.5);
    let mut f0 = vec![0.0; len];
    // (start, end, voiced) regions
    let mut regions = Vec::new();
    let mut t = (rng.gen_range(0.05..0.15) * FS) as usize;
    while t < len {
        let voiced = (rng.gen_range(0.15..0.40) * FS) as usize;
        let end = (t + voiced).min(len);
        regions.push((t, end, true));
        t = end;
        if t >= len {
            break;
        }
        let gap = (rng.gen_range(0.05..0.15) * FS) as usize;
        let end = (t + gap).min(len);
        regions.push((t, end, false));
        t = end;
    }
    let mut formants = vec![0.0; len * 3];
    let mut fric = vec![0.0; len];
    let mut env = vec![0.0; len];
    let mut prev = [
        rng.gen_range(300.0..800.0),
        rng.gen_range(900.0..2200.0),
        rng.gen_range(2300.0..3000.0),
    ];
    let fill_formants = |from: usize, to: usize, a: [f64; 3], b: [f64; 3], out: &mut [f64]| {
        for n in from..to {
            let u = (n - from) as f64 / (to - from).max(1) as f64;
            for k in 0..3 {
                out[n * 3 + k] = lerp(a[k], b[k], u);
            }
        }
    };
    fill_formants(
        0,
        regions.first().map_or(len, |r| r.0),
        prev,
        prev,
        &mut formants,
    );
    for &(s, e, voiced) in &regions {
        let next = [
            rng.gen_range(300.0..800.0),
            rng.gen_range(900.0..2200.0),
            rng.gen_range(2300.0..3000.0),
        ];
        fill_formants(s, e, prev, next, &mut formants);
        prev = next;
        let ramp = (0.02 * FS) as usize;
        if voiced {
            let (g0, g1) = (
                base_f0 * rng.gen_range(0.85..1.15),
                base_f0 * rng.gen_range(0.85..1.15),
            );
            for n in s..e {
                let u = (n - s) as f64 / (e - s).max(1) as f64;
                let vib = 1.0 + 0.015 * (2.0 * PI * vib_rate * n as f64 / FS).sin();
                f0[n] = (lerp(g0, g1, u) * vib).clamp(F0_MIN, F0_MAX);
                let edge = (n - s).min(e - 1 - n) as f64 / ramp as f64;
                env[n] = 0.5 - 0.5 * (PI * edge.min(1.0)).cos();
            }
        } else if rng.gen_bool(0.6) {
            let centre = rng.gen_range(3000.0..6000.0);
            for n in s..e {
                fric[n] = centre;
                let edge = (n - s).min(e - 1 - n) as f64 / ramp as f64;
                env[n] = 0.3 * (0.5 - 0.5 * (PI * edge.min(1.0)).cos());
            }
        }
    }
    fill_formants(
        regions.last().map_or(0, |r| r.1),
        len,
        prev,
        prev,
        &mut formants,
    );

    let harmonic = sine_excitation(&f0, 200, FS)?.samples;
    let normal = Normal::new(0.0, 1.0).expect("unit deviation");
    let mut tilt = 0.0;
    let mut res = [
        Resonator { y1: 0.0, y2: 0.0 },
        Resonator { y1: 0.0, y2: 0.0 },
        Resonator { y1: 0.0, y2: 0.0 },
    ];
    let mut fr = Resonator { y1: 0.0, y2: 0.0 };
    let bandwidths = [90.0, 130.0, 180.0];
    let mut out = vec![0.0; len];
    for n in 0..len {
        let z: f64 = normal.sample(&mut rng);
        let voiced_src = if f0[n] > 0.0 {
            env[n] * (harmonic[n] * 0.05 + 0.02 * z)
        } else {
            0.0
        };
        tilt = 0.9 * tilt + voiced_src;
        let mut v = 0.0;
        for (k, r) in res.iter_mut().enumerate() {
            v += r.tick(tilt, formants[n * 3 + k], bandwidths[k]) / (k + 1) as f64;
        }
        let u = if fric[n] > 0.0 {
            fr.tick(env[n] * z, fric[n], 1500.0)
        } else {
            fr.tick(0.0, 4000.0, 1500.0)
        };
        out[n] = v + 4.0 * u + 1e-4 * z;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut out {
            *v *= 0.6 / peak;
        }
    }
    let frames = len / HOP + 1;
    let f0_frames = (0..frames).map(|i| f0[(i * HOP).min(len - 1)]).collect();
    Ok(SyntheticClip {
        audio: Waveform::new(out, SAMPLE_RATE),
        f0: f0_frames,
    })
}

/// Writes `clips/*.wav`, `clips/*.f0` and `manifest.txt` under `dir` and
/// returns the manifest path.
pub fn generate_corpus(dir: &Path, spec: &CorpusSpec, jobs: usize) -> Result<PathBuf> {
    if spec.train_clips == 0 || spec.valid_clips == 0 {
        return Err(Error::Config("corpus needs train and valid clips".into()));
    }
    if !(spec.min_seconds >= 1.0 && spec.max_seconds >= spec.min_seconds) {
        return Err(Error::Config(
            "clip durations must be at least one second".into(),
        ));
    }
    let clips_dir = dir.join("clips");
    std::fs::create_dir_all(&clips_dir)?;
    let total = spec.train_clips + spec.valid_clips;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let plan: Vec<(usize, u64, f64)> = (0..total)
        .map(|i| {
            (
                i,
                rng.gen(),
                rng.gen_range(spec.min_seconds..=spec.max_seconds),
            )
        })
        .collect();
    let written = parallel_map(&plan, jobs, |&(i, seed, secs)| -> Result<ManifestEntry> {
        let clip = synthesize_clip(seed, secs)?;
        let wav = clips_dir.join(format!("clip{i:03}.wav"));
        let f0 = clips_dir.join(format!("clip{i:03}.f0"));
        write_wav(&clip.audio, &wav, Codec::Pcm16)?;
        Sidecar::new(SidecarKind::F0, clip.f0.len(), 1, clip.f0)?.save(&f0)?;
        Ok(ManifestEntry {
            wav,
            f0: Some(f0),
            split: if i < spec.train_clips {
                Split::Train
            } else {
                Split::Valid
            },
        })
    });
    let manifest = DatasetManifest {
        entries: written.into_iter().collect::<Result<_>>()?,
        rate_policy: RatePolicy::Resample,
        shuffle_seed: spec.seed,
    };
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest.to_text(dir))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_is_deterministic_and_bounded() {
        let a = synthesize_clip(3, 1.2).unwrap();
        let b = synthesize_clip(3, 1.2).unwrap();
        assert_eq!(a.audio, b.audio);
        assert_eq!(a.f0.len(), a.audio.len() / HOP + 1);
        assert!(a.audio.samples.iter().all(|v| v.abs() <= 0.6 + 1e-12));
        let voiced = a.f0.iter().filter(|&&f| f > 0.0).count();
        assert!(voiced > a.f0.len() / 3 && voiced < a.f0.len());
        assert!(a
            .f0
            .iter()
            .all(|&f| f == 0.0 || (F0_MIN..=F0_MAX).contains(&f)));
        assert!(synthesize_clip(3, 0.5).is_err());
    }
}
