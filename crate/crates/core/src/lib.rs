//! Core engine for generative stock-volume forecasting.
//!
//! Everything in this crate is pure computation over `f64` buffers: a small
//! feed-forward network engine with exact reverse-mode gradients, a
//! conditional VAE built on top of it, iterative forecast-path generation
//! with advanced-information conditioning, ARMA/VAR baselines, and the
//! evaluation statistics used to compare them. File formats, the CLI, and
//! anything that touches the filesystem live in the companion `volcast`
//! crate.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm`
//! feature when building without `std`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("volcast-core requires either the `std` or the `libm` feature");

pub mod baselines;
pub mod cvae;
pub mod date;
pub mod evaluation;
pub mod features;
pub mod forecaster;
pub mod linalg;
pub(crate) mod math;
pub mod nn;
pub mod persist;
pub mod rng;
