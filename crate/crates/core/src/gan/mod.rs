//! Neural waveform generator with excitation conditioning and its discriminators.

pub mod discriminator;
pub mod generator;
pub mod loss;
pub mod supervision;

pub use discriminator::{BranchOutput, DiscriminatorConfig, DiscriminatorEnsemble};
pub use generator::{Generator, GeneratorConfig, EXCITATION_CHANNELS};
pub use loss::{
    adversarial_loss, discriminator_loss, feature_matching_loss, generator_loss, GeneratorLoss,
    LossWeights, LAMBDA_FM, LAMBDA_RECON,
};
pub use supervision::{build_supervision, SupervisionBundle};
