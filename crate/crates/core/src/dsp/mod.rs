//! Source-filter DSP vocoder with neural complex-cepstrum filters, plus the
//! pitch tracker and pitch predictor that feed it.

pub mod filter;
pub mod nets;
pub mod pitch;
pub mod synth;

pub use filter::{cepstrum_to_impulse, ltv_filter, ImpulseResponseFrames};
pub use nets::{split_features, DspConfig, FilterOutputs, NNFilterNets};
pub use pitch::{
    extract_f0_reference, pitch_predict, PitchConfig, PitchPredictor, VOICING_THRESHOLD,
};
pub use synth::{dsp_sources, dsp_synthesize};
