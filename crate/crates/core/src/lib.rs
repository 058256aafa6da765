//! Weakly supervised sequence recognition from bag-of-words labels.
//!
//! A word-level frame encoder is trained from unordered word multisets by
//! pooling its per-frame distributions over time and matching the pooled
//! distribution to the bag's word distribution. Its greedy transcripts are
//! then used as pseudo-labels, with `<unk>` tokens filled in by an n-gram
//! LM, to train a letter-level CTC model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggloss;
pub mod ctc;
pub mod encoder;
pub mod error;
pub mod matrix;
pub mod ngramlm;
pub mod pipeline;
pub mod synthdata;
pub mod unkfill;
pub mod vocab;
pub mod worddecode;

pub use error::{Error, Result};
pub use matrix::Matrix;
