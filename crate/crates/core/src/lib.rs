//! Bell test outcomes relayed through classical torsion-balance dynamics.
//!
//! Modules:
//!
//! * [`quantum`]: two-qubit behaviors under Bloch-equator projective measurements.
//! * [`lhv`]: finite local hidden-variable models, probability kernels and the
//!   reduction of apparatus-level models (setting-dependent distributions) to the
//!   standard factorized form.
//! * [`polytope`]: CHSH evaluation and local-polytope membership by linear programming.
//! * [`cavendish`]: gravitational torque and damped torsion dynamics ending in a pointer readout.
//! * [`causality`]: light-cone audits of protocol schedules.
//! * [`stats`]: finite-sample behavior estimates and CHSH significance.
//! * [`orchestrator`]: configuration plus the end-to-end run with its ledger and report.

#![allow(clippy::needless_range_loop)]

pub mod behavior;
pub mod causality;
pub mod cavendish;
pub mod error;
pub mod lhv;
pub mod orchestrator;
pub mod polytope;
pub mod quantum;
pub mod seed;
pub mod simplex;
pub mod stats;

pub use behavior::{BehaviorTable, Bit};
pub use error::{Error, Result};
