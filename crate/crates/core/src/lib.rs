//! Temporal feature attribution for windowed time-series event classifiers.
//!
//! Samples are `N` features observed over an `L`-day window preceding a
//! prediction day, labelled 1 when the event occurs on day `L + 1`. The crate
//! covers the full loop: CSV ingestion with training-split imputation, native
//! baseline models plus an external subprocess predictor protocol, exact and
//! kernel Shapley attributions, LIME, permutation importance, cohort
//! aggregation and ranking, deterministic SVG figures, and feature-selection
//! studies driven by any of those rankings.

pub mod analytics;
pub mod config;
pub mod data;
pub mod error;
pub mod explain;
pub mod linalg;
pub mod predict;
pub mod render;
pub mod rng;
pub mod study;
pub mod synthetic;

pub use error::{Error, Result};
