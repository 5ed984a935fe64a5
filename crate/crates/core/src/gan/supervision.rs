//! Per-clip inputs derived from the frozen DSP vocoder.

use crate::dsp::{dsp_synthesize, NNFilterNets};
use crate::error::{Error, Result};
use crate::excitation::{interpolate_f0, sine_excitation, PitchContour};
use crate::signal::{FrameParams, MelAnalyzer, MelSpectrogram, Waveform};

/// Everything the generator needs beyond the input mel.
#[derive(Clone, Debug)]
pub struct SupervisionBundle {
    /// Mel of the DSP output truncated to the input frame count, or the
    /// input mel itself when target substitution is off.
    pub mel_dsp: MelSpectrogram,
    /// Single-harmonic excitation, `frames × hop` samples.
    pub p1: Vec<f64>,
    pub dsp_audio: Waveform,
}

/// Runs the DSP vocoder once on `(mel, f0)`.
pub fn build_supervision(
    mel: &MelSpectrogram,
    f0: &PitchContour,
    nets: &NNFilterNets,
    target_substitution: bool,
    seed: u64,
) -> Result<SupervisionBundle> {
    let dsp_audio = dsp_synthesize(mel, f0, nets, seed)?;
    let p1 = sine_excitation(&interpolate_f0(f0), 1, nets.config.sample_rate as f64)?.samples;
    let mel_dsp = if target_substitution {
        let analyzer = MelAnalyzer::new(&FrameParams::default())?;
        let mut m = analyzer.log_mel(&dsp_audio)?;
        if m.frames() < mel.frames() {
            return Err(Error::FrameMismatch(m.frames(), mel.frames()));
        }
        m.truncate(mel.frames());
        m
    } else {
        mel.clone()
    };
    Ok(SupervisionBundle {
        mel_dsp,
        p1,
        dsp_audio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::DspConfig;

    #[test]
    fn bundle_shapes_and_switch() {
        let nets = NNFilterNets::new(
            DspConfig {
                hidden: 8,
                ..DspConfig::default()
            },
            2,
        )
        .unwrap();
        let mel = MelSpectrogram::new(80, vec![-3.0; 80 * 6]).unwrap();
        let f0 = PitchContour::constant(150.0, 6, 256).unwrap();
        let on = build_supervision(&mel, &f0, &nets, true, 1).unwrap();
        assert_eq!(on.mel_dsp.frames(), 6);
        assert_eq!(on.p1.len(), 6 * 256);
        assert_eq!(on.dsp_audio.len(), 6 * 256);
        assert!(on.p1.iter().all(|v| v.abs() <= 1.0));
        let off = build_supervision(&mel, &f0, &nets, false, 1).unwrap();
        assert_eq!(off.mel_dsp, mel);
        let again = build_supervision(&mel, &f0, &nets, true, 1).unwrap();
        assert_eq!(again.mel_dsp, on.mel_dsp);
    }
}
