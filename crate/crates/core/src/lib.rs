//! Core models and solvers for unbalanced three-phase distribution feeders.
//!
//! The crate is `no_std` and only needs `alloc`. It covers the phase-aware
//! network model, a Newton-Raphson solver for the exact power flow, the
//! linearized magnitude/angle model, the convex phasor-tracking OPF and the
//! Monte Carlo and switching experiments built on top of them. File formats,
//! the CLI and parallel orchestration live in the `phasorflow` crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod error;
pub mod experiments;
pub mod exact;
pub mod feeder;
pub mod linalg;
pub mod linear;
pub mod opf;
pub mod phase;

pub use error::{Error, Result};
pub use exact::{solve_exact, PhasorSolution, SolverOptions};
pub use feeder::{Network, NodeId, Setpoints};
pub use linear::{solve_linear, LinearSolution};

pub use num_complex::Complex64;
pub use phase::{Phase, PhaseSet};
