//! Statement-level vulnerability localization.
//!
//! A selection network scores every statement of a function, relaxed
//! Bernoulli gates mask the statement matrix, and a classifier trained on the
//! masked function supplies the signal that teaches the selector which
//! statements carry the label. A clustered contrastive loss over each
//! function's top-K statements pulls together functions that share a
//! vulnerability pattern.
//!
//! Modules follow the pipeline: [`corpus`] → [`encoder`] → [`selector`] →
//! [`classifier`] and [`contrastive`] → [`trainer`] → [`evaluator`].

pub mod classifier;
pub mod contrastive;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod nn;
mod par;
pub mod rng;
pub mod selector;
pub mod trainer;

pub use error::{Error, Result};
