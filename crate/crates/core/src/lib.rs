//! Virtual-battery aggregation of flexible data-center loads and online
//! electricity procurement by drift-plus-penalty control.
//!
//! The crate is organised bottom-up:
//!
//! - [`vb`]: battery specification, SoC dynamics, feasibility checks and
//!   worst-case envelope constants.
//! - [`aggregation`]: thermostatic loads and deadline-constrained task sets
//!   turned into battery specifications, plus additive merging.
//! - [`controller`]: the virtual queue, the closed-form per-slot dispatch and
//!   the optional projection back into the SoC window.
//! - [`oracle`]: hindsight dynamic program and a no-storage baseline.
//! - [`scenario`]: seeded synthetic traces and trace CSV I/O.
//! - [`harness`]: closed-loop simulation and penalty-weight sweeps.
//! - [`cli`]: the `vbatt` command-line frontend.
//!
//! Slots are one hour long, so power (kW) and per-slot energy (kWh) are
//! used interchangeably.

pub mod aggregation;
pub mod cli;
pub mod controller;
mod error;
pub mod exec;
pub mod harness;
pub mod oracle;
pub mod scenario;
pub mod vb;

pub use error::{Error, Result};
