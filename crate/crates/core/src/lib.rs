//! Compressed learning of parameters in decomposable phase-field models.
//!
//! The pipeline: simulate a model ([`model`], [`sim`]), split each
//! per-step change into a value-domain part and a frequency-domain part
//! ([`spectral`]), compress both with seeded Gaussian projections
//! ([`sketch`]) and fit the model parameters against the compressed data
//! ([`learn`]). Arrhenius mobilities are made linear in their parameters by
//! a truncated Taylor expansion ([`taylor`]).

pub mod field;
pub mod io;
pub mod learn;
pub mod model;
pub mod sim;
pub mod sketch;
pub mod spectral;
pub mod taylor;

pub use field::{GridSpec, ScalarField};
