//! File formats, quote ingestion, result persistence and the `fdrcurve`
//! command line on top of [`fdrcurve_core`].

// `!(x >= 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub use fdrcurve_core as core;

pub mod cli;
pub mod model;
pub mod output;
pub mod quotes;

pub use model::{fixture, parse_model, ModelSpecFile};
pub use quotes::{ingest_quotes, QuoteSet};

use fdrcurve_core::{FdrError, HjbError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("parse error ({context}): {message}")]
    Parse { context: String, message: String },
    #[error("duplicate maturity {maturity}")]
    Duplicate { maturity: f64 },
    #[error(transparent)]
    Spec(#[from] FdrError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hjb(#[from] HjbError),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl MarketError {
    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            MarketError::Usage(_) => 2,
            _ => 1,
        }
    }
}
