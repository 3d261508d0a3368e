//! Cooperative joint segmentation and classification.
//!
//! A small reverse-mode autodiff engine ([`engine`]) carries a shared
//! convolutional trunk with two private heads ([`arch`]): a classifier and an
//! attention-gated decoder. The two heads are trained by separate Nesterov
//! optimizers that both update the trunk ([`train`]), on a procedurally
//! generated retina-like benchmark ([`data`]) scored by [`eval`].

pub mod arch;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
