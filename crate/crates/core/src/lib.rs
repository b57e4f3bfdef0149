//! Pulsed single-pass waveguide squeezing toolkit.
//!
//! Gain and loss models, quasi-phase-matching spectra, synthetic homodyne
//! traces, the variance-extraction pipeline and the curve fits that tie
//! them together. The `sqz` binary wraps [`cli`].

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dsp;
pub mod fit;
pub mod physics;
pub mod qpm;
pub mod report;
pub mod rng;
pub mod synth;
pub mod trace_file;
