//! Simulation and reconstruction toolkit for scanning photon-pair
//! coincidence microscopy.
//!
//! The pipeline mirrors the instrument: a time-to-digital converter records
//! signal, idler and line-trigger timetags ([`timetag`]); the signal/idler
//! cross-correlation yields the inter-arm delay and a set of coincidences
//! ([`coincidence`]); line triggers and the scanner timing turn coincidence
//! times into image pixels ([`scan`]). [`simulator`] produces synthetic
//! streams for closed-loop testing and [`analysis`] holds the SNR and edge
//! resolution measurements.

pub mod analysis;
pub mod cli;
pub mod coincidence;
pub mod error;
pub mod scan;
pub mod simulator;
pub mod timetag;

pub use error::{Error, Result};
pub use timetag::{Channel, TagStream, TimeTag};
