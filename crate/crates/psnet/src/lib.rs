//! Processor-sharing networks with simultaneous resource possession.
//!
//! A network has R call types and J resources. A call of type r holds one
//! unit of capacity on every resource it uses for the whole of its service,
//! so the bandwidth allocation b(n) chosen by a control must satisfy all
//! resource capacities jointly. This crate provides:
//!
//! * [`net`]: network description, states, allocations, capacity checks.
//! * [`control`]: declarative bandwidth-sharing controls and their evaluation.
//! * [`fairshare`]: weighted alpha-fair allocation solver (bisection-free
//!   interior point, plus the 0 and infinity limits).
//! * [`sim`]: exact continuous-time simulation, growth detection, fluid limits.
//! * [`lyapunov`]: drift evaluation and Foster certificates over finite boxes.
//! * [`classifier`]: empirical stability classification of monotone controls
//!   through limiting reduced chains.
//! * [`builtin`]: small named example networks used throughout the docs,
//!   examples and tests.
//! * [`config`] / [`cli`]: JSON run configuration and the `psnet` binary.
//!
//! The `examples/` directory of this crate is the best starting point: each
//! example is a runnable walk through one capability.

pub mod builtin;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod fairshare;
pub mod lyapunov;
pub mod net;
pub mod sim;

pub use error::{Error, Result};
pub use net::{AllocationVector, NetworkSpec, State, DEFAULT_TOL};
