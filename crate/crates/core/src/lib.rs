//! Digital self-interference cancellation for full-duplex radios.
//!
//! Two cancellers are provided: a memory-polynomial canceller fitted by least
//! squares, and a linear FIR canceller followed by a two-layer real-valued
//! neural network that reconstructs the non-linear residual. Both have
//! Q-bit saturating fixed-point datapaths and a cycle-accurate model of a
//! macro-pipelined processing-element architecture.
//!
//! Module map:
//!
//! - [`signal`] / [`dataset`]: synthetic OFDM transmit signal, SI chain, dataset files.
//! - [`cancellers`]: floating-point models, least-squares fitting and NN training.
//! - [`fixed`] / [`quant`]: fixed-point arithmetic, model quantization and calibration.
//! - [`pipeline`]: stage geometry, weights memories, the cycle-accurate simulator
//!   and its fixed-point reference.
//! - [`complexity`]: closed-form and instrumented operation counts.
//! - [`metrics`]: cancellation measurement and the bit-width sweep.
//! - [`config`] / [`cli`]: flat TOML configuration and the `fdsic` command line.

pub mod cancellers;
pub mod cli;
pub mod complexity;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fixed;
pub mod metrics;
pub mod pipeline;
pub mod quant;
pub mod signal;

pub use error::{Error, ErrorKind, Result};
pub use fixed::{FxFormat, FxSpec, FxValue};
pub use signal::{ComplexSample, SignalBuffer};
