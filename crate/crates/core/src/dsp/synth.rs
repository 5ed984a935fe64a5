use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::excitation::{interpolate_f0, noise_source, sine_excitation, PitchContour};
use crate::signal::{MelSpectrogram, Waveform};

use super::nets::NNFilterNets;

/// Periodic and aperiodic source signals for `f0`, each `frames × hop` long.
pub fn dsp_sources(
    f0: &PitchContour,
    nets: &NNFilterNets,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = &nets.config;
    let f0_samples = interpolate_f0(f0);
    let sine = sine_excitation(&f0_samples, c.harmonics, c.sample_rate as f64)?.samples;
    let noise = noise_source(f0_samples.len().max(1), seed, c.noise_amplitude)?.samples;
    Ok((sine, noise))
}

/// Filters sine and noise sources with the cepstra predicted from `mel`.
pub fn dsp_synthesize(
    mel: &MelSpectrogram,
    f0: &PitchContour,
    nets: &NNFilterNets,
    seed: u64,
) -> Result<Waveform> {
    if mel.frames() != f0.frames() {
        return Err(Error::FrameMismatch(mel.frames(), f0.frames()));
    }
    if f0.hop != nets.config.hop {
        return Err(Error::Config(format!(
            "contour hop {} vs vocoder hop {}",
            f0.hop, nets.config.hop
        )));
    }
    let (sine, noise) = dsp_sources(f0, nets, seed)?;
    let t = sine.len();
    let mut g = Graph::inference();
    let m = g.constant(mel.to_tensor());
    let s = g.constant(Tensor::new(&[1, 1, t], sine)?);
    let n = g.constant(Tensor::new(&[1, 1, t], noise)?);
    let y = nets.synthesize_graph(&mut g, &nets.store, m, s, n)?;
    let out = g.value(y).data().to_vec();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dsp vocoder output".into()));
    }
    Ok(Waveform::new(out, nets.config.sample_rate))
}
