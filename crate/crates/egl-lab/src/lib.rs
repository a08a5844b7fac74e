//! Workbench for learned task-specific losses in predict-then-optimize
//! pipelines.
//!
//! The pipeline, end to end: sample candidate predictions around each
//! instance's labels, price every candidate through the downstream decision
//! problem to get its decision-quality regret, fit a convex surrogate loss to
//! those (candidate, regret) pairs — either one loss per instance or a single
//! feature-conditioned parameter network — and finally train a predictive
//! model against the learned losses instead of squared error.
//!
//! Crate layout:
//! - [`pto`]: decision-problem trait, instances, decision quality and regret.
//! - [`problems`]: the three benchmark decision problems (top-k selection,
//!   website-advertising coverage, simplex portfolio).
//! - [`datagen`], [`sampling`], [`losses`], [`nn`]: the four pipeline steps.
//! - [`harness`]: config-driven experiments and desk-scale reproductions.
//! - [`error`]: crate-wide error type with CLI exit-code mapping.
//! - [`seed`]: deterministic seed-stream derivation.

pub mod datagen;
pub mod error;
pub mod harness;
pub mod losses;
pub mod nn;
pub mod problems;
pub mod pto;
pub mod sampling;
pub mod seed;

pub use error::{Error, Result};
