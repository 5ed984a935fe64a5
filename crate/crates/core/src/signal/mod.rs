//! WAV I/O, resampling, framing and the log-mel / MCD feature pipeline.

pub mod image;
pub mod mcd;
pub mod mel;
pub mod resample;
pub mod sidecar;
pub mod stft;
pub mod wav;

pub use image::{mel_matrix_text, spectrogram_pgm};
pub use mcd::{mcd, mel_mcd, MelCepstra};
pub use mel::{log_mel, MelAnalyzer, MelFilterbank, MelSpectrogram, MEL_FLOOR};
pub use resample::{resample, Resampler};
pub use sidecar::{Sidecar, SidecarKind};
pub use stft::{stft, FrameParams, Stft, SAMPLE_RATE};
pub use wav::{load_wav, write_wav, Codec, Waveform, WriteReport};
