//! Minimal reverse-mode automatic differentiation over dense matrices, plus
//! the LSTM building blocks, Adam, and a finite-difference gradient checker.
//!
//! A [`Tape`] records operations as they execute; [`Tape::backward`] walks the
//! record once in reverse. With a fixed seed, forward and backward are
//! bitwise deterministic.

pub mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, GradCheckOpts, GradCheckReport};
pub use lstm::{bilstm_encode, lstm_cell, BiLstmOut, LstmGates};
pub use params::{check_finite_grads, clip_global_norm, BoundParams, ParamStore};
pub use tape::{softmax_tensor, Axis, NodeId, Tape};
pub use tensor::{Scalar, Tensor};
