//! Path-dependent BSDEs and their path-dependent PDEs, numerically.
//!
//! The crate is organised bottom-up:
//!
//! * [`path`]: step paths, the `d∞` distance, vertical bumps, flat
//!   extensions, Brownian splicing and the piecewise-constant freeze map.
//! * [`calculus`]: finite-difference vertical/horizontal derivatives and the
//!   discrete functional Itô residual.
//! * [`brownian`]: reproducible Brownian increments with per-path substreams.
//! * [`regression`] and [`bsde`]: least-squares Monte-Carlo and Picard
//!   solvers for BSDEs driven by a path prefix, plus the comparison, moment
//!   and stability estimators.
//! * [`ppde`] and [`cascade`]: the path functional `u(γ_t) = Y_{γ_t}(t)`,
//!   residual and `Z = D_x u` checks, path freezing and the two-stage
//!   finite-difference PDE cascade.
//! * [`oracles`] and [`fixtures`]: closed-form reference solutions and the
//!   named fixture catalogue.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod bsde;
pub mod calculus;
pub mod cascade;
pub mod error;
pub mod fixtures;
pub mod oracles;
pub mod path;
pub mod ppde;
pub mod regression;
pub mod stats;

pub use brownian::{cumulate, simulate, PathBatch, SimulationConfig};
pub use bsde::{BsdeSolution, Generator, RegressionTarget, SolverOptions};
pub use calculus::{DerivativeBundle, Functional};
pub use error::{Error, Result};
pub use path::{CadlagPath, PathView, TimeGrid};
pub use ppde::PpdeProblem;
pub use regression::RegressionBasis;
