//! Positive-news gating.
//!
//! Rule-based valence scoring assigns weak labels to news documents, a
//! one-class SVM trained on the non-positive documents quarantines
//! suspicious members of the positive pool, and a document-term-matrix
//! linear SVM or a convolutional text classifier is trained to admit only
//! positive documents to an output stream.

pub mod cnn;
pub mod config;
pub mod container;
pub mod corpus;
pub mod dtm;
pub mod error;
pub mod eval;
pub mod linear_svm;
pub mod one_class;
pub mod pipeline;
pub mod seed;
pub mod synthetic;
pub mod tokenize;
pub mod valence;
pub mod vocab;

pub use error::{Error, Result};
