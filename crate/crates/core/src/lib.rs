//! Two-step biometric verification engine: face identification gates a 1:1
//! voice verification.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//! Everything here is a pure function of its inputs; file formats, IO and the
//! command line live in the `duoauth` companion crate.
//!
//! Module map:
//!
//! * [`tensor`], [`ops`], [`autograd`], [`gradcheck`], [`optim`]: the minimal
//!   numeric core both networks are built from.
//! * [`audio`]: framing, energy VAD and 64-band log-mel filterbank features.
//! * [`speaker`]: the residual CNN speaker embedder.
//! * [`face`]: images, augmentation and the VGG-16 style face classifier.
//! * [`train`]: triplet-loss and cross-entropy training loops.
//! * [`metrics`]: confusion matrices, EER and DET curves.
//! * [`auth`]: enrollment and the serial face-then-voice decision.
//! * [`synth`]: deterministic toy corpora for desk-scale experiments.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod audio;
pub mod auth;
pub mod autograd;
mod error;
pub mod face;
pub mod gradcheck;
mod math;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod speaker;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
