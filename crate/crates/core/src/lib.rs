//! Articulation model estimation from depth-annotated point tracks.

// Negated comparisons such as `!(x > 0.0)` are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artmodel;
pub mod error;
pub mod evalkit;
pub mod lie;
pub mod lm;
pub mod pipeline;
pub mod segmenter;
pub mod smoother;
pub mod synth;
pub mod trackfilter;
pub mod trajest;
pub mod trackio;

pub use error::{Error, ErrorReport, Result};
