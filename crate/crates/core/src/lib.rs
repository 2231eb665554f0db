//! Discretised optimal Skorokhod embedding.
//!
//! A simple random walk on the grid `x_j = j/sqrt(N)` with time step `1/N` is
//! stopped so that its terminal law matches a target measure. The best such
//! stopping rule for a payoff `F(x, t)` is a linear program over sojourn masses
//! `p(j, t)`; this crate assembles that program, solves it together with its
//! dual, extracts the resulting stopping barriers and runs Monte Carlo checks
//! as the grid is refined.
//!
//! Module map:
//!
//! - [`measure`]: grids, target measures and potentials.
//! - [`payoff`]: payoff functions, their tables and the linear time tilt.
//! - [`survival`]: the never-stopped walk and its quasi-stationary profile.
//! - [`lp`]: program assembly, horizon choice and the primal-dual solver.
//! - [`dual`]: dual feasibility, complementary slackness and hedge surfaces.
//! - [`barrier`]: cave barriers, shape checks and mass-tracking swaps.
//! - [`sim`]: seeded path simulation and grid-refinement studies.
//! - [`io`]: CSV and JSON formats used by the command-line tool.

pub mod barrier;
pub mod dual;
pub mod error;
pub mod exec;
pub mod io;
pub mod lattice;
pub mod lp;
pub mod measure;
pub mod payoff;
pub mod pipeline;
pub mod sim;
pub mod survival;

pub use error::{Error, Result};
pub use exec::Execution;
pub use lattice::SiteArray;
pub use measure::{build_grid, potential, project_measure, AtomicMeasure, Grid, MeasureSpec, PotentialArray};
pub use payoff::{default_cave, discretise, tilt, PayoffSpec, PayoffTable};

/// Absolute threshold separating "positive" from "zero" masses and multipliers.
pub const ZERO_THRESHOLD: f64 = 1e-10;
