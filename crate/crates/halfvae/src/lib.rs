//! Blind source separation with an encoder-free variational autoencoder.
//!
//! The central model keeps no encoder at all: the posterior over the latent
//! components is a bank of trainable parameters (per-entry means, per-row
//! spreads) optimized jointly with a decoder and one adaptive Gaussian-mixture
//! prior per component. Two baselines share the machinery: a VAE with the
//! same trainable GMM priors, and a vanilla VAE with a fixed standard-normal
//! prior and closed-form KL.
//!
//! The crate is self-contained: dense matrices, an analytic-gradient MLP, an
//! Adam optimizer, Monte-Carlo KL estimation against mixture priors, source
//! synthesis and mixing, permutation/sign-invariant scoring, and a CLI
//! (`halfvae generate|train|evaluate|report|plot`) that persists every stage
//! as CSV/JSON. All randomness flows through seeded ChaCha streams so runs
//! are bit-reproducible.

pub mod config;
pub mod diffengine;
pub mod models;
pub mod pipeline;
pub mod distributions;
pub mod divergence;
pub mod eval;
pub mod rng;
pub mod synth;

mod error;

pub use error::{Error, Result};
