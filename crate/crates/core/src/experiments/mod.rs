//! Monte Carlo campaign orchestration: replicated simulations over
//! parameter grids, aggregation with standard errors and contamination and
//! censoring accounting, and the statistical checks that turn the model's
//! limit statements into desk-scale pass/fail verdicts.
//!
//! Replicas are embarrassingly parallel; each draws its generator from
//! `(master_seed, replica_index)` through the splittable scheme in
//! [`crate::seeding`], and aggregation runs in replica order, so a report is
//! a deterministic function of its configuration.

mod config;
mod report;
mod runners;

pub use config::{ExperimentConfig, ExperimentError, ExperimentKind};
pub use report::{aggregate, CellRow, CheckRow, ExperimentReport};
pub use runners::{joint_difference_sequence, renewal_campaign, run, RenewalCampaign};
