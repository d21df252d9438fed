//! Spiking neural network engine with temporal dynamics enhancement.
//!
//! The crate covers a leaky integrate-and-fire neuron family, a recurrent
//! spiking encoder, float and spike-driven attention, a multiply/accumulate
//! energy ledger, spike pattern diversity analysis and a small reverse-mode
//! autodiff used for gradient checks and toy training.

pub mod attention;
pub mod cli;
pub mod autodiff;
pub mod config;
pub mod diversity;
pub mod encoder;
pub mod energy;
pub mod error;
pub mod gating;
pub mod neuron;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
