//! Source-filter supervised GAN vocoder.
//!
//! A differentiable DSP vocoder (sine/noise sources shaped by neural
//! complex-cepstrum filters) produces mel-spectrograms and sine excitation
//! that condition a HiFi-GAN style generator. The crate contains the
//! differentiation engine, signal utilities, both vocoders, training
//! stages and the command-line front end.

pub mod autodiff;
pub mod dsp;
pub mod error;
pub mod excitation;
pub mod gan;
pub mod gradsuite;
pub mod nn;
pub mod par;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
