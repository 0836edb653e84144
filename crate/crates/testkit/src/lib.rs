//! Reference oracles and scripted fixtures shared by the test suites.
//!
//! Everything here is deliberately naive: brute-force scans and direct
//! recounts that the production code is checked against.

pub mod config_oracle;
pub mod envelope_oracle;
pub mod invariants;
pub mod recount;
pub mod scripted;
pub mod strategies;
pub mod synth;
