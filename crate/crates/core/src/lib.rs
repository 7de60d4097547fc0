//! Simulator and detectors for MIMO-OTFS links over Nakagami-m
//! delay-Doppler channels.

pub mod channel;
pub mod cli;
pub mod complexity;
pub mod config;
pub mod detector;
pub mod error;
pub mod modem;
pub mod neural;
pub mod numerics;
pub mod pipeline;
pub mod reference;

pub use error::{Error, Result};
