//! Duty-cycle anomaly detection for hydraulic conveyor belts.
//!
//! The crate turns a series of one-minute averaged sensor readings (belt
//! speed, high and low hydraulic pressure) into classified duty-cycle events:
//!
//! 1. [`features`] builds a 12-value causal feature vector per minute.
//! 2. A mode classifier from [`classifiers`] labels each minute as
//!    Off, Idle, Operational or Active.
//! 3. [`pipeline`] smooths the labels, finds cycles either from the labels or
//!    from a speed threshold, and classifies each cycle as normal or
//!    abnormal with rule-based pattern matching or a second classifier.
//! 4. [`evaluate`] scores predicted events against reference events and runs
//!    leave-one-month-out experiments.
//! 5. [`quantize`] converts trained models to int8 parameters with integer
//!    inference.
//!
//! [`synth`] generates labelled synthetic datasets. Everything here is
//! `no_std` with `alloc`; file formats and the command line live in the
//! `beltwatch` crate.
#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::large_enum_variant)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod balance;
pub mod classifiers;
pub mod datamodel;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod matrix;
pub mod pipeline;
pub mod quantize;
pub mod rng;
pub mod synth;
pub mod training;

pub use datamodel::{CycleClass, CycleEvent, OperationMode, SensorRecord};
pub use error::{Error, Result};
pub use features::{FeatureState, FeatureVector, N_FEATURES};
pub use matrix::Matrix;
