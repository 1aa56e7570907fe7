//! Learned transceivers for the two-user symmetric interference channel.
//!
//! Each user owns a neural encoder mapping a `k`-bit message to an
//! `n`-dimensional real codeword and a decoder recovering the message from
//! its own codeword plus `alpha` times the other user's codeword plus
//! Gaussian noise. Two training schemes are provided: alternating
//! independent updates (TwinNet) and joint encoder updates driven by both
//! receivers' losses (SiameseNet). The crate also measures block error rates
//! against an orthogonal uncoded-BPSK reference and analyzes the geometry
//! of the learned codebooks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod models;
pub mod nn;
pub mod tensor;
pub mod training;

pub use channel::{noise_sigma, ChannelParams, RngStream};
pub use error::{Error, Result};
pub use models::{
    build_pair, ArchitectureSpec, CodeBook, MessageBatch, ModelKind, TrainedPair, User,
};
pub use nn::PowerMode;
pub use tensor::Tensor2;
pub use training::{train, TrainingConfig, TrainingTrace};
