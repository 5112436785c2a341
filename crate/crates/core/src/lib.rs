//! Joint user-offloading and resource-allocation toolkit for URLLC HetNets.
//!
//! A macro base station (MBS) serves ultra-reliable low-latency users directly
//! or pays overlaid small cells (SBSs) their bid price to take users over. The
//! crate provides:
//!
//! - [`scenario`]: the world model (stations, users, channel, delay) and
//!   deterministic seeded scenario generation,
//! - [`pricing`]: per-user SBS bids and best-bid selection,
//! - [`cro`]: convex power/bandwidth optimization for a fixed association set,
//!   solved both by a KKT/bisection reference and a barrier-penalized
//!   Lagrangian iteration,
//! - [`jur`]: the exact joint association problem via branch-and-bound plus an
//!   exhaustive-enumeration oracle, and the direct-serving baseline,
//! - [`svm`]: a from-scratch soft-margin Gaussian-kernel SVM trained with SMO,
//! - [`lhm`]: the learning-based heuristic pipeline (SVM association + barrier
//!   resource optimization + feasibility repair),
//! - [`harness`]: deterministic batch comparisons and load sweeps with CSV
//!   plot-data output.

pub mod cro;
pub mod harness;
pub mod jur;
pub mod lhm;
pub mod numeric;
pub mod pricing;
pub mod scenario;
pub mod seed;
pub mod svm;

pub use cro::{solve_cro_barrier, solve_cro_reference, BarrierOpts, CroInstance, CroSolution};
pub use jur::{solve_dsm, solve_jur_bnb, solve_jur_exhaustive, JurOpts, JurSolution};
pub use lhm::{build_training_data, solve_lhm, LhmOpts, LhmSolution};
pub use pricing::{build_bid_table, Bid, BidTable};
pub use scenario::{generate_scenario, Scenario, ScenarioConfig};
pub use svm::{train, SvmModel, SvmParams, TrainingSet};
