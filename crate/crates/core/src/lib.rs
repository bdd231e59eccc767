// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dqn;
pub mod error;
pub mod evaluation;
pub mod firms;
pub mod game;
pub mod geology;
pub mod market;
pub mod pipeline;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
