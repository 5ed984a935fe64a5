//! Minimal reverse-mode differentiation engine: tensors, a recording tape,
//! the operations the vocoder networks need, Adam, gradient checking and
//! binary checkpoints.

pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod graph;
mod linalg;
mod ops;
pub mod optim;
mod params;
mod spectral;
mod tensor;

pub use conv::conv1d_out_len;
pub use gradcheck::{grad_check, grad_check_coords, grad_check_params, Coords, GradCheckReport};
pub use graph::{Backward, BackwardCtx, Gradients, Graph, Var};
pub use ops::{reflect_index, Pointwise, LEAKY_SLOPE};
pub use optim::{clip_grad_norm, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore, Parameter};
pub use spectral::{hann_periodic, Window};
pub use tensor::Tensor;
