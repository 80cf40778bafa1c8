//! Ensemble-optimized generator feedback on a linearized transmission grid.
//!
//! The crate simulates a quasi-static closed loop in which every online
//! generator follows a scheduled dispatch plus feedback on system frequency,
//! its discounted integral and the flows on its own lines. Feedback gains and
//! dispatch are tuned by minimizing a penalized cost averaged over a scenario
//! ensemble.

pub mod grid;
pub mod powerflow;
pub mod scenarios;
pub mod dynamics;
pub mod costs;
pub mod opt;
pub mod synth;
pub mod harness;
pub mod bundled;
