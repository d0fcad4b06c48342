//! Intensity flows of spatial branching processes with immigration.
//!
//! The crate has three layers:
//!
//! * [`measure`] and [`model`]: finite measures, kernels and branching
//!   models `(G_n, M_{n+1}, mu_n)`;
//! * [`exact`]: the exact intensity flow and every constant that enters
//!   its stability analysis;
//! * [`sim`], [`particles`] and [`harness`]: the physical population
//!   process, the mean-field `N`-particle approximation of the flow, and
//!   seeded statistical checks comparing both against the exact flow.
//!
//! ```
//! use branching_flow::{exact, scenarios};
//!
//! let model = scenarios::s_one();
//! let flow = exact::run_flow(&model, 6).unwrap();
//! assert!((flow.mass(6) - 3.5).abs() < 1e-12);
//! ```

pub mod birth;
pub mod error;
pub mod exact;
pub mod harness;
pub mod measure;
pub mod model;
pub mod particles;
pub mod rng;
pub mod scenarios;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use measure::{
    DiscreteMeasure, Function, MarkovKernel, Potential, ProbabilityMeasure, StateSpace,
    WeightedKernel, EXACT_TOL,
};
pub use model::{BranchingModel, Regime};
