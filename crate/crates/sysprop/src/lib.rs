//! Black-box estimation of input-output system properties.
//!
//! Given an LTI plant hidden behind an evaluation oracle, the estimators in
//! this crate determine its L2-gain, shortage of passivity (with the
//! input-feedforward passivity index) and minimal conic sector purely from
//! iteratively chosen input-output experiments. Gradients of the underlying
//! Rayleigh-quotient objectives are assembled from forward experiments via
//! time-reversal adjoint probing, so the plant matrices are never read.
//!
//! Modules:
//! - [`lti`]: plant models and the finite-horizon convolution operator
//! - [`probe`]: the oracle boundary (noise, sample counting, adjoint tricks)
//! - [`gain`], [`passivity`], [`conic`]: discrete-time iterative estimators
//! - [`flows`]: continuous-time gradient and saddle flows via adaptive RK
//! - [`spectra`]: white-box spectral ground truth, for validation only
//! - [`plantfile`]: the plant description text format

pub mod config;
pub mod conic;
pub mod error;
pub mod flows;
pub mod gain;
pub mod lti;
pub mod passivity;
pub mod plantfile;
pub mod probe;
pub mod signal;
pub mod spectra;
pub mod trace;

pub use config::{ConeMethod, EstimatorConfig, GainMethod, InitialInput, PassivityMethod};
pub use error::{Error, Result};
pub use signal::{retract, Signal};
pub use trace::{EstimateTrace, TraceRow};
