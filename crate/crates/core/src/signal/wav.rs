//! WAV reading and writing on top of `hound`.

use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Codec {
    Pcm16,
    Float32,
}

impl std::str::FromStr for Codec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(Codec::Pcm16),
            "float32" => Ok(Codec::Float32),
            other => Err(Error::UnsupportedCodec(other.to_string())),
        }
    }
}

/// Outcome of [`write_wav`]; `clipped` counts samples clamped to `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WriteReport {
    pub clipped: usize,
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::Missing(path.to_path_buf())
        }
        hound::Error::IoError(_) => Error::Truncated(path.display().to_string()),
        hound::Error::Unsupported => Error::UnsupportedCodec("unsupported WAV layout".into()),
        other => Error::Format(other.to_string()),
    }
}

pub fn load_wav(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedCodec(format!(
            "{} channels",
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec(format!("{fmt:?} {bits}-bit")));
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let ch = spec.channels as usize;
    if interleaved.len() % ch != 0 {
        return Err(Error::Truncated(path.display().to_string()));
    }
    let samples: Vec<f64> = interleaved
        .chunks_exact(ch)
        .map(|c| c.iter().sum::<f64>() / ch as f64)
        .collect();
    if let Some(&bad) = samples
        .iter()
        .find(|s| !s.is_finite() || s.abs() > 1.0 + 1e-6)
    {
        return Err(Error::SampleRange(bad));
    }
    Ok(Waveform::new(samples, spec.sample_rate))
}

pub fn write_wav(w: &Waveform, path: &Path, codec: Codec) -> Result<WriteReport> {
    if let Some(&bad) = w.samples.iter().find(|s| !s.is_finite()) {
        return Err(Error::SampleRange(bad));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: if codec == Codec::Pcm16 { 16 } else { 32 },
        sample_format: if codec == Codec::Pcm16 {
            hound::SampleFormat::Int
        } else {
            hound::SampleFormat::Float
        },
    };
    let mut report = WriteReport::default();
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &w.samples {
        let c = s.clamp(-1.0, 1.0);
        if c != s {
            report.clipped += 1;
        }
        let r = match codec {
            Codec::Pcm16 => {
                writer.write_sample((c * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
            }
            Codec::Float32 => writer.write_sample(c as f32),
        };
        r.map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))?;
    if report.clipped > 0 {
        log::warn!("{}: clipped {} samples", path.display(), report.clipped);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn write_raw_pcm16(path: &Path, channels: u16, data: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 24000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in data {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn pcm16_normalization_and_stereo_average() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw_pcm16(&p, 1, &[16384]);
        assert_eq!(load_wav(&p).unwrap().samples, vec![0.5]);
        let p = dir.path().join("b.wav");
        let l = (0.2f64 * 32768.0).round() as i16;
        let r = (0.4f64 * 32768.0).round() as i16;
        write_raw_pcm16(&p, 2, &[l, r]);
        let m = load_wav(&p).unwrap().samples[0];
        assert!((m - 0.3).abs() < 1.0 / 32768.0);
    }

    #[test]
    fn empty_data_chunk_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.wav");
        write_raw_pcm16(&p, 1, &[]);
        let err = load_wav(&p).unwrap_err();
        assert_eq!(err.to_string(), "empty audio");
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_raw_pcm16(&p, 1, &[1; 100]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 51]).unwrap();
        assert!(load_wav(&p).is_err());
    }

    #[test]
    fn unsupported_codec() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 24000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&p), Err(Error::UnsupportedCodec(_))));
    }

    #[test]
    fn float_round_trip_exact_and_clipping_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let samples: Vec<f64> = vec![0.25, -0.125, 0.5, 1.5];
        let w = Waveform::new(samples, 24000);
        let rep = write_wav(&w, &p, Codec::Float32).unwrap();
        assert_eq!(rep.clipped, 1);
        let back = load_wav(&p).unwrap();
        assert_eq!(back.samples, vec![0.25, -0.125, 0.5, 1.0]);
    }

    #[test]
    fn pcm16_round_trip_within_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.wav");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..5000).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let w = Waveform::new(samples.clone(), 24000);
        write_wav(&w, &p, Codec::Pcm16).unwrap();
        let back = load_wav(&p).unwrap();
        let worst = samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 32768.0, "{worst}");
    }
}
