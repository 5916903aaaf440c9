//! Interaction-level transformer for link prediction on continuous-time
//! dynamic graphs.
//!
//! Events are ingested into an [`events::EventStore`], neighbour windows are
//! drawn by [`sampling::NeighborSampler`], encoded into tokens by the
//! [`encoders`] and [`tokens`] modules and scored by [`model::TidFormer`].
//! [`harness`] holds training, evaluation, attention tracing and ablations.

pub mod config;
pub mod encoders;
pub mod error;
pub mod events;
pub mod harness;
pub mod model;
pub mod nn;
pub mod sampling;
pub mod synth;
pub mod tokens;

pub use error::{Error, Result};
