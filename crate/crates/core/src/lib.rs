//! Two-branch recurrent classification of radar and optical object time
//! series, with attention, a three-classifier loss, and coarse-to-fine
//! pretraining over a land cover taxonomy.
//!
//! Everything runs on a small tape-based reverse-mode differentiation engine
//! in [`diffcore`]; there is no external tensor library.

pub mod attention;
pub mod baseline;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod taxonomy;
pub mod training;

pub use error::{Error, Result};
