//! Domain-sensitive, sentiment-aware word embeddings.
//!
//! Two review domains share one vocabulary. Every word carries a
//! domain-common input vector, one input vector per domain, a shared output
//! vector and a probability of being domain-common. Training runs EM with
//! negative sampling: the E-step weighs how well each branch explains a word
//! occurrence (its context words and its review sentiment), the M-step takes
//! stochastic gradient-ascent steps weighted by those responsibilities, and
//! the commonality probabilities are re-estimated once per sweep.
//!
//! Modules follow the pipeline: [`corpus`] parses and preprocesses reviews,
//! [`vocab`] builds the shared vocabulary and sampling table, [`model`]
//! holds parameters and serialization, [`trainer`] runs EM or the skip-gram
//! baseline, [`eval`] covers review and lexicon sentiment classification,
//! and [`synthetic`] generates structured test corpora.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod synthetic;
pub mod trainer;
pub mod vocab;

pub use error::{DseError, Result};
