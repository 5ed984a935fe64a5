use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dspgan::train::F0Source;

#[derive(Parser, Debug)]
#[command(
    name = "dspgan",
    version,
    about = "Mel-to-waveform vocoder toolkit: features, DSP synthesis, GAN training and evaluation",
    after_help = "Logging: set DSPGAN_LOG to quiet, info or debug."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random draw (training commands: overrides the config file)
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Directory receiving every output file
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for utterance-level parallelism
    #[arg(long, value_name = "N", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
}

impl Common {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn jobs(&self) -> usize {
        self.jobs as usize
    }
}

pub fn parse_f0_source(s: &str) -> Result<F0Source, String> {
    F0Source::parse(s)
        .map_err(|_| format!("`{s}` is not one of predictor, reference, file:PATH, const:HZ"))
}

#[derive(Args, Debug, Clone)]
pub struct F0Args {
    /// Where f0 comes from: predictor, reference, file:PATH or const:HZ
    #[arg(long, value_name = "SOURCE", default_value = "reference", value_parser = parse_f0_source)]
    pub f0_source: F0Source,
    /// Pitch predictor checkpoint, required by --f0-source predictor
    #[arg(long, value_name = "CKPT")]
    pub pitch: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExcitationSource {
    Sine,
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Pitch,
    Dsp,
    Gan,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Log-mel spectrogram of each wav as a binary sidecar plus a text copy
    ExtractMel {
        /// Input wav files
        #[arg(required = true, value_name = "WAV")]
        wavs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Frame-level f0 of each wav as a sidecar
    ExtractF0 {
        /// Input wav files
        #[arg(required = true, value_name = "WAV")]
        wavs: Vec<PathBuf>,
        #[command(flatten)]
        f0: F0Args,
        #[command(flatten)]
        common: Common,
    },
    /// Render a sine or noise excitation to a 32-bit float wav
    SynthExcitation {
        /// f0 as const:HZ or file:PATH (frame-level sidecar)
        #[arg(long, value_name = "SOURCE", value_parser = parse_f0_source)]
        f0: F0Source,
        /// Duration for a constant f0
        #[arg(long, value_name = "SECONDS")]
        seconds: Option<f64>,
        /// Maximum number of harmonics
        #[arg(long, value_name = "K", default_value_t = dspgan::excitation::DEFAULT_HARMONICS)]
        k: usize,
        /// Excitation type
        #[arg(long, value_enum, default_value_t = ExcitationSource::Sine)]
        source: ExcitationSource,
        /// Standard deviation of the noise source
        #[arg(long, value_name = "A", default_value_t = dspgan::excitation::DEFAULT_NOISE_AMPLITUDE)]
        noise_amplitude: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Resynthesize wavs through the DSP vocoder alone
    DspSynth {
        /// Input wav files
        #[arg(required = true, value_name = "WAV")]
        wavs: Vec<PathBuf>,
        /// DSP vocoder checkpoint
        #[arg(long, value_name = "CKPT")]
        dsp: PathBuf,
        #[command(flatten)]
        f0: F0Args,
        #[command(flatten)]
        common: Common,
    },
    /// Train one stage (pitch, then dsp, then gan)
    Train {
        /// Stage to train
        #[arg(value_enum)]
        stage: StageArg,
        /// Dataset manifest
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Config file with [pitch], [dsp] and [gan] sections
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Override one config key; repeatable
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Pitch predictor checkpoint (dsp and gan stages)
        #[arg(long, value_name = "CKPT")]
        pitch: Option<PathBuf>,
        /// Frozen DSP vocoder checkpoint (gan stage)
        #[arg(long, value_name = "CKPT")]
        dsp: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Analysis-resynthesis through the GAN and DSP-only paths with MCD
    CopySynth {
        /// Input wav files
        #[arg(required = true, value_name = "WAV")]
        wavs: Vec<PathBuf>,
        /// Generator checkpoint
        #[arg(long, value_name = "CKPT")]
        generator: PathBuf,
        /// DSP vocoder checkpoint
        #[arg(long, value_name = "CKPT")]
        dsp: PathBuf,
        #[command(flatten)]
        f0: F0Args,
        #[command(flatten)]
        common: Common,
    },
    /// Mel cepstral distortion in dB between two wavs
    Mcd {
        /// Reference wav
        #[arg(value_name = "A")]
        a: PathBuf,
        /// Compared wav
        #[arg(value_name = "B")]
        b: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Log-mel spectrogram as a grayscale PGM image and a text matrix
    SpectrogramDump {
        /// Input wav files
        #[arg(required = true, value_name = "WAV")]
        wavs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of every op and of both vocoder objectives
    GradCheck {
        /// Central-difference step
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Parameter coordinates perturbed per tensor in the composite checks
        #[arg(long, value_name = "N", default_value_t = 8)]
        per_tensor: usize,
        /// Largest accepted relative error
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Train the full model and its three ablations (full, no_ts, no_tfs, no_wp)
    AblationMatrix {
        /// Config file shared by every run
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Dataset manifest
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the seeded synthetic speech-like corpus and its manifest
    GenerateCorpus {
        /// Training clips
        #[arg(long, value_name = "N", default_value_t = 96)]
        train_clips: usize,
        /// Held-out clips
        #[arg(long, value_name = "N", default_value_t = 4)]
        valid_clips: usize,
        /// Shortest clip duration
        #[arg(long, value_name = "SECONDS", default_value_t = 2.5)]
        min_seconds: f64,
        /// Longest clip duration
        #[arg(long, value_name = "SECONDS", default_value_t = 3.5)]
        max_seconds: f64,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ExtractMel { .. } => "extract-mel",
            Command::ExtractF0 { .. } => "extract-f0",
            Command::SynthExcitation { .. } => "synth-excitation",
            Command::DspSynth { .. } => "dsp-synth",
            Command::Train { .. } => "train",
            Command::CopySynth { .. } => "copy-synth",
            Command::Mcd { .. } => "mcd",
            Command::SpectrogramDump { .. } => "spectrogram-dump",
            Command::GradCheck { .. } => "grad-check",
            Command::AblationMatrix { .. } => "ablation-matrix",
            Command::GenerateCorpus { .. } => "generate-corpus",
        }
    }
}
