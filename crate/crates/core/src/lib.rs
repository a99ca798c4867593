//! Link-level simulation of CP-OFDM and DFT-s-OFDM through a nonlinear power
//! amplifier, and energy-efficiency optimization of a radio unit that switches
//! between single-stream and two-stream transmission.
//!
//! The crate is organised bottom-up:
//!
//! * [`config`] loads and validates the scenario parameter set.
//! * [`waveform`], [`channel`], [`pa`] and [`receiver`] form the Monte-Carlo
//!   link chain that measures EVM and the minimum EVM-compliant PA backoff.
//! * [`linkbudget`] converts between spectral efficiency and transmit power
//!   and totals the radio-unit power draw.
//! * [`optimizer`] maximizes energy efficiency per transmission mode with the
//!   quadratic-transform fractional program.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod linkbudget;
pub mod optimizer;
pub mod pa;
pub mod receiver;
pub mod rng;
pub mod units;
pub mod waveform;

mod error;

pub use error::Error;

pub use num_complex::Complex64;
