//! Sliding-window analysis of basketball passing sequences.
//!
//! The crate ingests possession/pass event data, slices every possession
//! into overlapping fixed-duration windows, classifies the pass chain of
//! each window into a small graphlet taxonomy, and derives shot-clock
//! profiles, state entropy curves, and player/position flow metrics from
//! the classified windows. A statistics module provides the contingency,
//! rank, and odds-ratio tests used to compare profiles and relate
//! involvement to possession outcomes, and a seeded generator produces
//! synthetic datasets with known ground truth.

pub mod data;
pub mod error;
pub mod graphlet;
pub mod metrics;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
