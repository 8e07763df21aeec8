//! Simulation and exact-computation toolkit for subcritical Bernoulli bond
//! percolation on Z^d with a defect line: the edges of the first-coordinate
//! axis carry probability `p_line` while every other edge carries `p`.
//!
//! The crate provides:
//!
//! - [`lattice`]: finite boxes, bond configurations, connectivity, and the
//!   deterministic sampling contract (one uniform per edge id).
//! - [`oracle`]: exact small-box computations — exhaustive enumeration, a
//!   transfer-matrix evaluator for planar strips, and identity checks relating
//!   the defect measure to the homogeneous one.
//! - [`estimators`]: Monte Carlo connectivity estimates, decay-rate and
//!   log-prefactor fits, and scans over the line probability.
//! - [`geometry`]: cluster anatomy — cone points, renewals on the line,
//!   irreducible decompositions, line interaction statistics, pivotal edges,
//!   and diamond overlap counts.
//! - [`renewal`]: renewal sequences and their exponential normalization,
//!   lattice-walk return laws, pinned partition functions, free-energy roots,
//!   and the polylog defect bound.

pub mod estimate;
pub mod estimators;
pub mod geometry;
pub mod lattice;
pub mod numeric;
pub mod oracle;
pub mod renewal;
pub mod rng;
