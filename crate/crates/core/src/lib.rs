//! Common spatial patterns with cross-subject transfer for two-class
//! motor-imagery EEG.
//!
//! The crate covers the whole chain: epoch storage and synthetic corpora
//! ([`data`]), CSP filters ([`csp`]), a weighted LDA classifier ([`lda`]),
//! four transfer strategies ([`transfer`]) and a benchmark runner
//! ([`bench`]) that compares them with three baselines as the number of
//! labeled target epochs grows.

pub mod bench;
pub mod csp;
pub mod data;
pub mod error;
pub mod lda;
pub mod pipeline;
pub mod qp;
pub mod transfer;

pub use error::{Error, Result};
