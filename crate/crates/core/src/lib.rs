//! Risk-sensitive optimal stopping with bounded running cost and unbounded
//! terminal cost.
//!
//! Everything is computed in the log domain. For a model with running cost
//! `g`, terminal cost `G` and transition kernel `P`, the Bellman operator is
//!
//! ```text
//! v'(x) = min( G(x), g(x) + ln E_x[ exp v(X_1) ] )
//! ```
//!
//! Iterating it from `v = 0` gives the minimal solution `u` (the value over
//! all stopping times); iterating from `v = G` gives the maximal solution `w`
//! (the value over bounded stopping times). The two can differ when `G` is
//! unbounded, and [`diagnostics`] checks the uniform-integrability condition
//! that forces them to agree.
//!
//! The crate is `no_std` with `alloc`. Enable `std` for `std::error::Error`
//! impls and `parallel` to fan Monte Carlo trajectories out over rayon.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod bellman;
pub mod closed_form;
pub mod costs;
pub mod diagnostics;
mod error;
pub mod kernel;
pub mod logspace;
mod math;
pub mod model;
pub mod pdmp;
pub mod policy;
pub mod rng;
pub mod state;
pub mod value;

pub use bellman::{
    apply_bellman, iterate_from_above, iterate_from_below, iterate_with, residual,
    truncated_terminal_iteration, verify_sandwich, BellmanRun, Direction, IterateOptions,
    SandwichReport,
};
pub use costs::{CostFn, CostSpec};
pub use error::{Error, Result};
pub use kernel::{Kernel, KernelRow, PowerLawTail, Tail};
pub use model::{log_mgf, sample_next, validate_costs, MarkovModel, ValidationReport, Violation};
pub use policy::{
    bounded_policy_floor, evaluate_policy_mc, martingale_check, McEstimate, MartingaleReport,
    StoppingPolicy,
};
pub use state::State;
pub use value::{Closure, LogValueFn};

/// Tolerance under which the stopping branch of `min(G, continuation)` wins.
pub const TIE_TOL: f64 = 1e-14;
