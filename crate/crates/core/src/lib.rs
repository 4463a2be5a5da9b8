//! Recurrent networks that replay a dictionary reconstruction of a bounded
//! scalar sequence, exactly.
//!
//! The pipeline: simulate a delay map on [-1, 1] (`systems`), quantize the
//! training segment onto a jittered grid (`codec`), collect the distinct
//! delay windows into a key-value dictionary (`dictionary`), and assemble a
//! recurrent network whose state walks the columns of a Gram-like matrix so
//! that its readout reproduces the dictionary reconstruction step for step
//! (`rnn`). `verify` certifies every stage and checks the a-priori error
//! bound against the true trajectory; `harness` wires the stages to a CLI
//! and on-disk artifacts.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common concrete choices.

// Validation guards are written `!(x > y)` on purpose: NaN must fail into the
// error arm, which `x <= y` would not do.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod codec;
pub mod config;
pub mod dictionary;
pub mod harness;
pub mod linalg;
pub mod rnn;
pub mod scalar;
pub mod systems;
pub mod verify;

pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;

pub type DelayMap64 = systems::DelayMap<f64>;
pub type Trajectory64 = systems::Trajectory<f64>;
pub type LipschitzCertificate64 = systems::LipschitzCertificate<f64>;

pub type Grid64 = codec::Grid<f64>;
pub type Grid32 = codec::Grid<f32>;

pub type WeightSet64 = rnn::WeightSet<f64>;
pub type RunRecord64 = rnn::RunRecord<f64>;

pub type BoundReport64 = verify::BoundReport<f64>;
