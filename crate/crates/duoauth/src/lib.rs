//! File formats, IO and the command line for the `duoauth-core` engine.
//!
//! * [`wav`], [`pnm`]: audio and image decoding.
//! * [`container`]: the `BGM1` model container.
//! * [`store_file`]: the enrollment store file.
//! * [`manifest`], [`scores`], [`history`], [`config`]: text formats.
//! * [`detector`]: the external face detector hook.
//! * [`cli`]: command dispatch and exit codes.

pub mod cli;
pub mod config;
pub mod container;
pub mod detector;
pub mod error;
pub mod history;
pub mod manifest;
pub mod pnm;
pub mod scores;
pub mod store_file;
pub mod wav;

pub use error::{Error, Result};
