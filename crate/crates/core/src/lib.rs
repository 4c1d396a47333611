//! Qubit coherence under spectrally engineered spin-bath driving.
//!
//! Pipeline: drive waveforms ([`waveform`]) → bath correlations, analytic
//! ([`bath_analytic`]) or Monte-Carlo ([`bath_mc`]) → filter-function
//! coherence and T2 ([`coherence`]) → measurement emulations, calibration and
//! optimization ([`experiments`]).

pub mod bath_analytic;
pub mod bath_mc;
pub mod bloch;
pub mod coherence;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod quadrature;
pub mod search;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
pub use units::*;
