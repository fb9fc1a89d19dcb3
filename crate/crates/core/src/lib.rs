//! Duality-gap diagnostics for small two-player zero-sum games.

pub mod controller;
pub mod error;
pub mod estimate;
pub mod datasets;
pub mod games;
pub mod report;
pub mod search;
pub mod nn;
pub mod toygame;
pub mod trainer;

pub use error::{AuxSide, Error, Result};
