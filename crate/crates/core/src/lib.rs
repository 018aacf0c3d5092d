//! Filtering of application-layer DDoS traffic learned from an unlabeled
//! attack-period mixture.
//!
//! Two detectors share one data path:
//!
//! - **N-over-D**: a normal-period model `N` and a mixture model `D`, each a
//!   two-layer LSTM over hashed request tokens times a histogram over the
//!   static (extra info, protocol list) pair. Sequences are ranked by
//!   `log P_n(x) - log P_d(x)` and the lowest-ranked fraction is rejected.
//! - **Iterative classifier**: a binary LSTM classifier trained on
//!   pseudo-labels (normal period = 0, mixture = 1) whose attack side is
//!   repeatedly reduced to the most attack-like mixture sequences.
//!
//! The [`harness`] module drives both in an interval-based online protocol
//! and provides synthetic ground-truth data, metrics and rejection curves.

pub mod error;
pub mod harness;
pub mod histogram;
pub mod ingest;
pub mod iterative;
pub mod lstm;
pub mod scoring;
pub mod tokenize;

pub use error::{Error, Result};
