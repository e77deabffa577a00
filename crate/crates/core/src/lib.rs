//! Spatial SIR dynamics with individually varying infectivity.
//!
//! A population of `N` individuals sits at fixed positions in the unit box.
//! Each infected individual carries a random infectious-load trajectory
//! (its transmission rate as a function of infectious age), and exposes
//! susceptibles through a spatial contact kernel, normalized by a local
//! contact-density denominator raised to a configurable exponent.
//!
//! The crate provides two views of the same dynamics:
//!
//! * [`sim`]: an exact event-driven simulation of the finite-`N` particle
//!   system (Poisson thinning against static per-individual rate bounds);
//! * [`meanfield`]: a deterministic grid solver for the large-`N` limit,
//!   a Volterra-type system for the susceptible/force/infected/recovered
//!   spatial density curves.
//!
//! [`measure`] holds the shared observable layer: test functions paired
//! against both empirical point measures and mean-field densities, and the
//! sup-over-time distance used by convergence studies.

pub mod grid;
pub mod infectivity;
pub mod kernel;
pub mod meanfield;
pub mod measure;
pub mod model;
pub mod rng;
pub mod sim;

pub use grid::SpatialGrid;
pub use infectivity::{InfectivityModel, InfectivityTrajectory};
pub use kernel::Kernel;
pub use measure::{MeasureComponent, TestFunction};
pub use model::{Compartment, Domain, ExperimentConfig, Population};
