//! Markerless gait analysis from skeleton sequences.
//!
//! The pipeline takes per-frame 2D and 3D skeleton detections
//! ([`pose_io`]), fits an anatomically consistent skeleton ([`optimizer`]),
//! detects steps from the inter-ankle distance signal ([`events`]) and
//! reports gait speed, cadence, step length and step time ([`params`]).
//! [`pipeline`] chains these for one walk under a [`config::RunConfig`].
//! [`stats`] compares two measurement methods and [`plot`] draws the
//! Bland-Altman figures. [`walker`] generates synthetic walks with known
//! ground truth.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod events;
pub mod optimizer;
pub mod params;
pub mod pipeline;
pub mod plot;
pub mod pose_io;
pub mod skeleton;
pub mod stats;
pub mod walker;
