//! Normal-form coordinates, good charts and stable templates for
//! three-dimensional partially hyperbolic model maps, with diagnostics for
//! quantitative non-integrability and joint integrability.
//!
//! The crate is organised bottom-up: [`jets`] provides truncated Taylor
//! arithmetic, [`models`] the maps, and every later module consumes both.

pub mod approx;
pub mod charts;
pub mod cli;
pub mod compat;
pub mod error;
pub mod jets;
pub mod models;
pub mod nform;
pub mod qni;
pub mod splitting;
pub mod templates;

pub use error::{Error, Result};
