//! Exact simulator and verification lab for the two-type contact process on a
//! finite window of the integer lattice.
//!
//! Everything is built from a [`harris::HarrisConstruction`]: a materialized
//! realization of the Poisson death-mark and infection-arrow processes.  The
//! same construction drives
//!
//! - the primal dynamics ([`forward`]): one-type and two-type configurations
//!   evolved by a single chronological sweep, with interface and inversion
//!   observables;
//! - the dual dynamics ([`ancestry`]): priority-ordered ancestor hierarchies,
//!   renewal and joint-renewal analysis, coalescence times and relevant sites;
//! - the perturbed random walk toolkit ([`walk`]): location-dependent step
//!   laws exponentially close to a symmetric law, mixture decompositions, a
//!   coupled chain, and hitting-time estimators with an exact operator oracle;
//! - the replicated Monte Carlo harness ([`experiments`]).
//!
//! Constructions are immutable after sampling and safe to share across
//! replica workers; all randomness flows deterministically from explicit
//! 64-bit seeds.

pub mod ancestry;
pub mod experiments;
pub mod forward;
pub mod harris;
pub mod kernel;
pub mod seeding;
pub mod stats;
pub mod timegrid;
pub mod walk;

pub use harris::{ClusterFate, Flagged, HarrisConstruction, HarrisError, SpaceTimePoint, Window};
pub use kernel::{Kernel, KernelError};
