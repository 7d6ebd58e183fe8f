//! Simulation and analysis of Fock-state-resolved phase scans with coherent
//! light and a photon-number-resolving detector.
//!
//! The crate is layered bottom-up: [`quantum`] holds the exact photon
//! statistics, [`detector`] models pulse heights and threshold
//! classification, [`experiment`] runs Monte-Carlo scans, [`estimation`]
//! fits and corrects them, and [`subrayleigh`] superimposes shifted fringe
//! patterns. [`io`] defines the CSV interchange formats.

// negated comparisons are used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod io;
pub mod optimize;
pub mod quantum;
pub mod rng;
pub mod subrayleigh;

pub use error::{Error, Result};
