//! Hierarchical recurrent models for zero-shot anticipation of procedure
//! steps.
//!
//! A sentence encoder turns each instruction step into a fixed-length
//! vector, a recipe-level LSTM consumes those vectors (seeded with a
//! projection of the ingredient list) and its hidden state is decoded back
//! into the predicted next sentence. A video encoder can be trained to stand
//! in for the sentence encoder so the same recipe model predicts upcoming
//! steps from visual features.
//!
//! The crate is `no_std` with `alloc`; file formats, configuration and the
//! command-line front end live in the `stepcast` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod infer;
mod math;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod text;
pub mod train;

pub use error::{Error, Result};
