//! Zero-shot editing toolkit for conditional latent diffusion models.
//!
//! The crate bundles a small latent-diffusion stack (noise schedules,
//! a convolutional denoiser with cross-attention conditioning, DDIM
//! sampling and inversion), an embedding-space editing engine that
//! steers generation by shifting text condition embeddings while
//! constraining cross-attention maps, and a self-contained procedural
//! benchmark with objective metrics so every piece can be exercised
//! end to end on a desktop CPU.

pub mod autodiff;
pub mod codec;
pub mod condition;
pub mod container;
pub mod denoiser;
pub mod dsp;
pub mod editor;
pub mod error;
pub mod inversion;
pub mod metrics;
pub mod schedule;
pub mod toybench;

pub use error::{Error, Result};
