//! Document segmentation as sentence-level sequence labeling.
//!
//! A window of consecutive sentences is prefixed with `[CLS]`, embedded
//! (token + position + segment, optionally plus per-word phone means), run
//! through a transformer encoder, and every sentence's token states are
//! mean-pooled and classified as boundary / non-boundary in one pass.
//! Long documents are covered by sliding windows; the [`inference`] module
//! exposes fixed, self-adaptive and cross-segment strategies through a
//! name-keyed registry.

pub mod annotate;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
