//! Follow recommendation for social networks: session-filtered pairwise
//! training of multifaceted factorization models, duration-based behavior
//! features, and a logistic-regression blend evaluated by MAP@3.

pub mod behavior;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod ladder;
pub mod mfm;
pub mod pipeline;
pub mod session;
pub mod stages;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
