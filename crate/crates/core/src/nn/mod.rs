//! Deterministic tensor engine, networks and training machinery.
//!
//! Values are row-major `f64` tensors. Gradients come from a [`Tape`] that
//! records one forward pass; parameters borrowed into the tape are returned
//! gradients in registration order, which matches [`Module::params`].

mod checkpoint;
mod ema;
mod encoder;
mod layers;
mod network;
mod optim;
mod tape;
mod tensor;
mod trainer;

pub use checkpoint::{content_hash, file_hash, Checkpoint, MAGIC, VERSION};
pub use ema::Ema;
pub use encoder::{SetEncoder, SetEncoderConfig};
pub use layers::{Dense, Layer, Mlp, Module, TimeEmbedding};
pub use network::{Network, NetworkConfig};
pub use optim::{clip_grad_norm, AdamW, AdamWConfig};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use trainer::Trainer;
