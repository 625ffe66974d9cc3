//! Adaptive multilevel Monte Carlo for probabilities P(g > 0) of quantities
//! that can only be approximated through a hierarchy of samplers.
//!
//! The crate is organised bottom-up:
//!
//! - [`rng`]: reproducible, addressable random streams.
//! - [`stats`]: per-level running aggregates and weighted line fits.
//! - [`refine`]: the adaptive refinement loop and multilevel corrections.
//! - [`problems`]: nested simulation, GBM digital options and a synthetic
//!   problem with known g.
//! - [`mlmc`]: sample allocation, rate fitting, the continuation estimator
//!   and the theoretical rate formulas.

pub mod error;
pub mod mlmc;
pub mod problems;
pub mod refine;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
