//! Synthetic dual-band channel-sounding laboratory.
//!
//! The crate models a correlation-based time-domain sounder end to end with
//! verifiable ground truth at every stage:
//!
//! * [`scenario`] — the measurement world: room, scatterer panels, antennas,
//!   scan grid, band and clock parameters, loaded from a JSON file.
//! * [`waveform`] — Zadoff-Chu probe generation, circular correlation,
//!   snapshot averaging and receiver noise.
//! * [`synth`] — image-method path tracing and synthesis of full
//!   direction-scan campaigns with injected clock drift.
//! * [`postproc`] — calibration, drift estimation/correction, multipath
//!   extraction from the direction scan, and MPC clustering.
//! * [`characterize`] — path loss and close-in model fits, scattering loss,
//!   K-factor, delay/angular spreads, log-normal fits, and reference-model
//!   comparison.
//! * [`io`] — CSV and binary persistence of campaign artifacts.

pub mod characterize;
pub mod error;
mod fft;
pub mod geom;
pub mod io;
pub mod postproc;
pub mod scenario;
pub mod synth;
pub mod waveform;

pub use error::{Error, Result};
