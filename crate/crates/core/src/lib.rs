//! Day-ahead flood protection planning for transmission substations.
//!
//! The planner chooses which substations receive tiger dams and schedules the
//! installation crews, minimizing the expected damage and unserved-energy cost
//! over a set of substation failure scenarios. Every scenario carries a full
//! DC optimal power flow whose network availability depends on the protection
//! decisions.
//!
//! Pipeline: [`domain`] inputs → [`scenario`] failure sets → [`milp`]
//! deterministic equivalent → [`solver`] branch-and-bound → [`eval`] plan
//! scoring and recovery curves. [`cli`] wires these into the `floodguard`
//! binary.

pub mod cases;
pub mod cli;
pub mod domain;
pub mod error;
pub mod eval;
pub mod milp;
pub mod scenario;
pub mod solver;

#[cfg(test)]
pub(crate) mod testing {
    pub use crate::cases::sixbus;
}

pub use error::{Error, Result};
