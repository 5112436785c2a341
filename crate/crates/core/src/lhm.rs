//! Learning-based heuristic method (LHM): predict associations with the SVM,
//! repair infeasible predictions, then run the barrier resource optimizer on
//! the MBS-served set and price offloaded users by their best bids.
//!
//! Repair is deterministic and minimal: predicted offloads without a valid
//! bid (or with an infeasible offloading delay) are re-pinned to the MBS, and
//! under bandwidth exhaustion MBS-served users with the cheapest valid bids
//! are flipped out one at a time until the optimizer succeeds. Every flip
//! removes a positive minimum-bandwidth demand, so the loop terminates.

use std::time::Instant;

use thiserror::Error;

use crate::cro::{solve_cro_barrier, BarrierOpts, CroError, CroInstance};
use crate::jur::{solve_jur_bnb, AssocEntry, Association, JurError, JurOpts, JurSolution};
use crate::pricing::{build_bid_table, BidTable};
use crate::scenario::{features_of, Scenario, UserId};
use crate::svm::{LabeledSample, SvmModel, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhmOpts {
    pub barrier: BarrierOpts,
    /// Disabling repair turns prediction errors into hard failures.
    pub repair: bool,
    /// Power at which the SNR feature is computed; must match the training
    /// side. Defaults to the scenario's MBS `p_max`.
    pub reference_power: Option<f64>,
}

impl Default for LhmOpts {
    fn default() -> Self {
        Self {
            barrier: BarrierOpts::default(),
            repair: true,
            reference_power: None,
        }
    }
}

/// Same shape as [`JurSolution`] plus the agreement and repair counters.
#[derive(Debug, Clone, PartialEq)]
pub struct LhmSolution {
    pub association: Association,
    pub resources: crate::cro::CroSolution,
    pub total_cost: f64,
    pub wall_time_s: f64,
    /// Fraction of users whose final association matches a JUR solution of
    /// the same scenario; filled in by the harness when JUR ran alongside.
    pub svm_agreement: Option<f64>,
    /// Users re-pinned by feasibility repair.
    pub fallbacks: usize,
    /// Per-user repair flags, indexed like `Scenario::users`.
    pub fallback_flags: Vec<bool>,
}

#[derive(Debug, Error)]
pub enum LhmError {
    #[error("repair exhausted: no feasible association remains ({blocking:?})")]
    Infeasible { blocking: Vec<UserId> },
    #[error("resource optimization failed: {0}")]
    Cro(#[from] CroError),
}

/// Run the two-phase pipeline on one scenario.
pub fn solve_lhm(
    scenario: &Scenario,
    model: &SvmModel,
    bids: &BidTable,
    opts: &LhmOpts,
) -> Result<LhmSolution, LhmError> {
    let started = Instant::now();
    let n = scenario.users.len();
    let p_ref = opts.reference_power.unwrap_or(scenario.mbs.p_max);

    // phase 1: predict, then re-pin predictions that cannot be realized
    let mut mbs_served: Vec<bool> = scenario
        .users
        .iter()
        .map(|u| model.predict_mu(&features_of(u, scenario, p_ref)))
        .collect();
    let mut fallback_flags = vec![false; n];
    let eligible: Vec<bool> = scenario
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| bids.best_for(i).is_some() && scenario.delay.delay_feasible(u.d_th, false))
        .collect();
    for i in 0..n {
        if !mbs_served[i] && !eligible[i] {
            if !opts.repair {
                return Err(LhmError::Infeasible {
                    blocking: vec![scenario.users[i].id],
                });
            }
            mbs_served[i] = true;
            fallback_flags[i] = true;
        }
    }

    // phase 2: barrier CRO on the served set, flipping out the cheapest
    // offloadable user while the bandwidth budget cannot hold the set
    let outcome = loop {
        let served_ids: Vec<UserId> = scenario
            .users
            .iter()
            .zip(&mbs_served)
            .filter(|(_, m)| **m)
            .map(|(u, _)| u.id)
            .collect();
        let inst = CroInstance::from_scenario(scenario, &served_ids);
        match solve_cro_barrier(&inst, &opts.barrier) {
            Ok(out) => break out,
            Err(CroError::Infeasible { blocking }) if opts.repair => {
                let candidate =
                    (0..n)
                        .filter(|&i| mbs_served[i] && eligible[i])
                        .min_by(|&a, &b| {
                            let ta = bids.best_for(a).unwrap().total;
                            let tb = bids.best_for(b).unwrap().total;
                            ta.partial_cmp(&tb).unwrap().then(a.cmp(&b))
                        });
                match candidate {
                    Some(i) => {
                        mbs_served[i] = false;
                        fallback_flags[i] = true;
                    }
                    None => return Err(LhmError::Infeasible { blocking }),
                }
            }
            Err(e) => return Err(e.into()),
        }
    };

    let mut total_cost = outcome.solution.total_cost;
    let entries: Vec<AssocEntry> = scenario
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            if mbs_served[i] {
                AssocEntry {
                    user_id: u.id,
                    mbs_served: true,
                    station: scenario.mbs.id,
                    served: true,
                }
            } else {
                let bid = bids.best_for(i).expect("offloaded user has a bid");
                total_cost += bid.total;
                AssocEntry {
                    user_id: u.id,
                    mbs_served: false,
                    station: bid.sbs_id,
                    served: true,
                }
            }
        })
        .collect();

    Ok(LhmSolution {
        association: Association { entries },
        resources: outcome.solution,
        total_cost,
        wall_time_s: started.elapsed().as_secs_f64(),
        svm_agreement: None,
        fallbacks: fallback_flags.iter().filter(|f| **f).count(),
        fallback_flags,
    })
}

/// Fraction of users on which two associations agree (by `mbs_served`).
pub fn association_agreement(a: &Association, b: &Association) -> f64 {
    if a.entries.is_empty() {
        return 1.0;
    }
    let hits = a
        .entries
        .iter()
        .zip(&b.entries)
        .filter(|(x, y)| x.mbs_served == y.mbs_served)
        .count();
    hits as f64 / a.entries.len() as f64
}

/// Label scenarios with the exact solver and emit training rows.
///
/// Scenarios where JUR is infeasible are skipped; the second return value
/// counts them.
pub fn build_training_data(scenarios: &[Scenario], jur_opts: &JurOpts) -> (TrainingSet, usize) {
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for scenario in scenarios {
        let bids = build_bid_table(scenario);
        match solve_jur_bnb(scenario, &bids, jur_opts) {
            Ok(solution) => {
                let p_ref = scenario.mbs.p_max;
                for (user, entry) in scenario.users.iter().zip(&solution.association.entries) {
                    rows.push(LabeledSample {
                        features: features_of(user, scenario, p_ref),
                        mbs_served: entry.mbs_served,
                    });
                }
            }
            Err(JurError::TooLarge { .. }) | Err(JurError::Infeasible { .. }) => skipped += 1,
        }
    }
    (TrainingSet { rows }, skipped)
}

/// Convenience wrapper for callers holding a [`JurSolution`]: agreement of
/// the final LHM association against it.
pub fn agreement_with_jur(lhm: &LhmSolution, jur: &JurSolution) -> f64 {
    association_agreement(&lhm.association, &jur.association)
}
