//! Desk-scale Monte Carlo and analysis toolkit for azimuthal polarization
//! correlations of annihilation gamma pairs.
//!
//! The chain mirrors a two-arm pixelated Compton polarimeter experiment:
//! entangled-pair generation with a switchable correlation-retention
//! parameter, an optional prior scatter in a small tagging crystal,
//! simplified two-interaction transport and digitization in 8x8 scintillator
//! matrices, trigger and offline event selection, azimuthal-difference
//! histogramming with event-mixing acceptance correction, and a weighted
//! least-squares fit of the modulation factor.

pub mod analysis;
pub mod config;
pub mod detector;
pub mod error;
pub mod hist;
pub mod io;
pub mod physics;
pub mod pipeline;
pub mod sampling;
pub mod selection;

pub use error::{Error, Result};
