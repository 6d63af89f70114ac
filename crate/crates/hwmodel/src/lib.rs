//! Harris-Wilson urban retail model treated as a large-population potential
//! game on a discrete geography.
//!
//! Zones carry shop mass `x_i >= 0`; consumers in zone `j` split demand `Q_j`
//! across zones in proportion to `x_i^alpha * phi^dist(j, i)`. Revenue minus
//! a linear cost rate `kappa` gives each zone's payoff, and the payoff field
//! is the gradient of a scalar potential, so mass-action dynamics ascend the
//! potential and equilibria can be read off from its critical points.
//!
//! Module map:
//! - [`geometry`]: lattice and custom geographies, distances, proximity.
//! - [`symmetry`]: geography symmetry groups, subgroups, orbit supports.
//! - [`model`]: flows, payoffs, potential, Hessian, equilibrium residual.
//! - [`dynamics`]: mass-action ODE integration and basin sampling.
//! - [`equilibria`]: invariant candidate states, verification, stability.
//! - [`stochastic`]: finite-population logit dynamics and stationary laws.
//! - [`sweep`]: parameter scans, two-zone bifurcation, phase partition.
//! - [`figure`]: deterministic SVG renderings of sweep outputs.
//! - [`par`]: order-preserving parallel map with a sequential fallback.

pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod figure;
pub mod geometry;
pub mod model;
pub mod par;
pub mod stochastic;
pub mod sweep;
pub mod symmetry;

pub use error::{Error, Result};

/// Library crate version, embedded in provenance output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
