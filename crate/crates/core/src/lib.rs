//! Political vs. non-political classification of short messages posted by
//! legislators, plus biterm topic modeling of the resulting sub-corpora.
//!
//! The pipeline runs corpus preparation ([`corpus`]), temporally stratified
//! sampling of labeling pools ([`sampling`]), word vectors ([`embeddings`]),
//! three hand-written classifiers ([`models`]) trained with RMSProp
//! ([`training`]), Macro F1 evaluation ([`evaluation`]) and BTM ([`btm`]).
//! [`pipeline`] ties the stages together and [`synth`] generates labeled
//! synthetic corpora for end-to-end checks.

// Validators spell range checks as `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod btm;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod pipeline;
pub mod sampling;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
