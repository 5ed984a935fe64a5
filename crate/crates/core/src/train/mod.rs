//! Training stages, data plumbing, copy synthesis and the ablation matrix.

pub mod ablation;
pub mod config;
pub mod copy;
pub mod corpus;
pub mod data;
pub mod stages;

pub use ablation::{ablation_matrix, AblationRun, AblationSpec, ABLATIONS};
pub use config::{ConfigFile, ReconTarget, Stage, TrainConfig};
pub use copy::{copy_synth, CopySynthesis, F0Source, VocoderSet};
pub use corpus::{generate_corpus, synthesize_clip, CorpusSpec};
pub use data::{Clip, Corpus, DatasetManifest, ManifestEntry, RatePolicy, SegmentSampler, Split};
pub use stages::{
    derive_seed, file_sha256, generate, load_dsp, load_generator, load_pitch, loss_csv, mel_l1,
    parse_loss_csv, train_dsp, train_gan, train_pitch, LossRow, TrainReport, CSV_HEADER,
};
