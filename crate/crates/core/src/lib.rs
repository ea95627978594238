//! Exact Markov-chain analysis and Monte Carlo simulation of pure and
//! mixed strategy (1+1) evolutionary algorithms on bitstrings.

pub mod chain;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod mutate;
pub mod space;
pub mod strategy;

pub use error::{Error, Result};
