//! Two-timescale voltage regulation for radial distribution feeders.
//!
//! Capacitor banks are committed once per interval by a deep Q-network;
//! inverter reactive setpoints are re-optimized every slot by convex
//! optimization over a linearized or SOC-relaxed branch flow model.

pub mod convexopt;
pub mod drl;
pub mod feeder;
pub mod powerflow;
pub mod sim;
