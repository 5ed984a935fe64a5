//! Analysis-resynthesis through the GAN and DSP-only paths.

use std::path::{Path, PathBuf};

use crate::dsp::{extract_f0_reference, pitch_predict, NNFilterNets, PitchPredictor};
use crate::error::{Error, Result};
use crate::excitation::PitchContour;
use crate::gan::{build_supervision, Generator};
use crate::signal::{
    mel_mcd, resample, FrameParams, MelAnalyzer, MelSpectrogram, Sidecar, SidecarKind, Waveform,
    SAMPLE_RATE,
};

use super::stages::{generate, load_dsp, load_generator, load_pitch};

/// Where frame-level f0 comes from at synthesis time.
#[derive(Clone, Debug, PartialEq)]
pub enum F0Source {
    Predictor,
    Reference,
    File(PathBuf),
    Const(f64),
}

impl F0Source {
    /// Parses `predictor`, `reference`, `const:F` or `file:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "predictor" => Ok(F0Source::Predictor),
            "reference" => Ok(F0Source::Reference),
            _ => {
                if let Some(v) = s.strip_prefix("const:") {
                    let f: f64 = v
                        .parse()
                        .map_err(|_| Error::Config(format!("bad constant f0 `{v}`")))?;
                    Ok(F0Source::Const(f))
                } else if let Some(p) = s.strip_prefix("file:") {
                    Ok(F0Source::File(PathBuf::from(p)))
                } else {
                    Err(Error::Config(format!(
                        "f0 source `{s}` is not one of predictor, reference, file:PATH, const:F"
                    )))
                }
            }
        }
    }

    /// Contour for `audio` whose mel has `frames` frames.
    pub fn resolve(
        &self,
        audio: &Waveform,
        mel: &MelSpectrogram,
        pitch: Option<&PitchPredictor>,
    ) -> Result<PitchContour> {
        let hop = FrameParams::default().hop;
        let c = match self {
            F0Source::Predictor => {
                let net = pitch.ok_or_else(|| {
                    Error::Config("f0 source `predictor` needs a pitch checkpoint".into())
                })?;
                pitch_predict(mel, net)?
            }
            F0Source::Reference => extract_f0_reference(audio, hop)?,
            F0Source::File(p) => {
                let s = Sidecar::load(p, SidecarKind::F0)?;
                let mut f0 = s.values;
                if f0.len().abs_diff(mel.frames()) > 2 {
                    return Err(Error::FrameMismatch(f0.len(), mel.frames()));
                }
                f0.resize(mel.frames(), 0.0);
                PitchContour::new(f0, hop)?
            }
            F0Source::Const(f) => PitchContour::constant(*f, mel.frames(), hop)?,
        };
        if c.frames() != mel.frames() {
            return Err(Error::FrameMismatch(c.frames(), mel.frames()));
        }
        Ok(c)
    }
}

/// Trained models used for copy synthesis.
pub struct VocoderSet {
    pub generator: Generator,
    /// Whether the generator consumes the DSP vocoder's mel.
    pub tf_s: bool,
    pub dsp: NNFilterNets,
    pub pitch: Option<PitchPredictor>,
}

impl VocoderSet {
    pub fn load(generator: &Path, dsp: &Path, pitch: Option<&Path>) -> Result<Self> {
        let (generator, tf_s) = load_generator(generator)?;
        Ok(Self {
            generator,
            tf_s,
            dsp: load_dsp(dsp)?,
            pitch: pitch.map(load_pitch).transpose()?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CopySynthesis {
    pub gan: Waveform,
    pub dsp: Waveform,
    pub f0: PitchContour,
    /// MCD in dB between the input and the GAN output.
    pub mcd_gan: f64,
    /// MCD in dB between the input and the DSP-only output.
    pub mcd_dsp: f64,
}

/// Extracts mel and f0 from `input`, renders it through both paths and
/// scores each against the input.
pub fn copy_synth(
    input: &Waveform,
    models: &VocoderSet,
    f0_source: &F0Source,
    seed: u64,
) -> Result<CopySynthesis> {
    let audio = if input.sample_rate == SAMPLE_RATE {
        input.clone()
    } else {
        resample(input, SAMPLE_RATE)?
    };
    let analyzer = MelAnalyzer::new(&FrameParams::default())?;
    let mel = analyzer.log_mel(&audio)?;
    let f0 = f0_source.resolve(&audio, &mel, models.pitch.as_ref())?;
    let bundle = build_supervision(&mel, &f0, &models.dsp, models.tf_s, seed)?;
    let input_mel = if models.tf_s { &bundle.mel_dsp } else { &mel };
    let gan = Waveform::new(
        generate(&models.generator, input_mel, &bundle.p1)?,
        SAMPLE_RATE,
    );
    let mcd_gan = mel_mcd(&mel, &analyzer.log_mel(&gan)?)?;
    let mcd_dsp = mel_mcd(&mel, &analyzer.log_mel(&bundle.dsp_audio)?)?;
    Ok(CopySynthesis {
        gan,
        dsp: bundle.dsp_audio,
        f0,
        mcd_gan,
        mcd_dsp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sources() {
        assert_eq!(F0Source::parse("predictor").unwrap(), F0Source::Predictor);
        assert_eq!(
            F0Source::parse("const:100").unwrap(),
            F0Source::Const(100.0)
        );
        assert_eq!(
            F0Source::parse("file:a.f0").unwrap(),
            F0Source::File("a.f0".into())
        );
        assert!(F0Source::parse("harvest").is_err());
        assert!(F0Source::parse("const:x").is_err());
    }
}
