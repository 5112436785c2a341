//! Exact joint user-association and resource allocation (JUR).
//!
//! Chooses, per user, whether the MBS serves directly (`mu = 1`) or pays the
//! best SBS bid (`mu = 0`), minimizing total cost subject to delay,
//! reliability, power, and shared-bandwidth constraints. Users without a
//! valid bid or with an offloading delay above their threshold are pinned to
//! the MBS up front.
//!
//! [`solve_jur_exhaustive`] enumerates every feasible association (guarded to
//! 20 users); [`solve_jur_bnb`] runs depth-first branch-and-bound whose node
//! relaxation prices undecided users at `min(best bid, uncoupled MBS cost)`,
//! and reports the remaining bound gap when the node budget runs out.
//! [`solve_dsm`] is the no-offloading baseline.

use std::time::Instant;

use thiserror::Error;

use crate::cro::{solve_cro_reference_hinted, CroInstance, CroSolution, CroUser};
use crate::pricing::{min_cost_on_curve, BidTable};
use crate::scenario::{Scenario, StationId, UserId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimality {
    Exact,
    /// Search stopped on the node budget; relative gap between the incumbent
    /// and the best open lower bound.
    BoundGap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssocEntry {
    pub user_id: UserId,
    /// true = MBS-served (mu = 1), false = offloaded (mu = 0).
    pub mbs_served: bool,
    pub station: StationId,
    /// false only for users dropped by DSM under bandwidth exhaustion or an
    /// unreachable delay threshold.
    pub served: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    pub entries: Vec<AssocEntry>,
}

impl Association {
    pub fn offloaded_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.served && !e.mbs_served)
            .count()
    }

    pub fn served_count(&self) -> usize {
        self.entries.iter().filter(|e| e.served).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JurSolution {
    pub association: Association,
    /// Resource allocation of the MBS-served set.
    pub resources: CroSolution,
    pub total_cost: f64,
    pub wall_time_s: f64,
    pub optimality: Optimality,
    pub nodes_explored: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JurOpts {
    pub node_budget: u64,
}

impl Default for JurOpts {
    fn default() -> Self {
        Self {
            node_budget: 1_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum JurError {
    #[error("{n} users exceed the 2^N enumeration guard (20)")]
    TooLarge { n: usize },
    #[error("no feasible assignment exists; blocking users: {blocking:?}")]
    Infeasible { blocking: Vec<UserId> },
}

/// Per-user data shared by the solvers.
struct PrepUser {
    user_id: UserId,
    /// May choose between MBS and offloading.
    eligible: bool,
    mbs_delay_ok: bool,
    /// Uncoupled minimum MBS serving cost (infinite when unreachable).
    mbs_cost: f64,
    /// Minimum bandwidth on the MBS at the power cap.
    floor: f64,
    bid_total: f64,
    bid_station: Option<StationId>,
    cro_user: CroUser,
}

fn prepare(scenario: &Scenario, bids: &BidTable) -> Vec<PrepUser> {
    scenario
        .users
        .iter()
        .enumerate()
        .map(|(i, user)| {
            let cro_user = CroInstance::user_entry(scenario, user);
            let point = min_cost_on_curve(
                cro_user.rate_req,
                cro_user.q,
                scenario.mbs.p_max,
                scenario.mbs.c_p,
                scenario.mbs.gamma * scenario.mbs.c_w,
            );
            let (mbs_cost, floor) = match point {
                Some(pt) => {
                    let s_max = (1.0 + scenario.mbs.p_max * cro_user.q).log2();
                    (
                        pt.cost,
                        if s_max > 0.0 {
                            cro_user.rate_req / s_max
                        } else {
                            0.0
                        },
                    )
                }
                None => (f64::INFINITY, f64::INFINITY),
            };
            let best = bids.best_for(i);
            let offload_delay_ok = scenario.delay.delay_feasible(user.d_th, false);
            PrepUser {
                user_id: user.id,
                eligible: best.is_some() && offload_delay_ok,
                mbs_delay_ok: scenario.delay.delay_feasible(user.d_th, true),
                mbs_cost,
                floor,
                bid_total: best.map_or(f64::INFINITY, |b| b.total),
                bid_station: best.map(|b| b.sbs_id),
                cro_user,
            }
        })
        .collect()
}

/// Users that must be MBS-served but cannot be.
fn forced_infeasible(prep: &[PrepUser]) -> Vec<UserId> {
    prep.iter()
        .filter(|u| !u.eligible && (!u.mbs_delay_ok || u.mbs_cost.is_infinite()))
        .map(|u| u.user_id)
        .collect()
}

/// Candidate solutions compare by cost, then prefer more offloading, then the
/// lexicographically smallest association (offload first). Keeps the two
/// exact solvers agreeing on ties.
fn better(cost_a: f64, mu_a: &[bool], cost_b: f64, mu_b: &[bool]) -> bool {
    if cost_a != cost_b {
        return cost_a < cost_b;
    }
    let off_a = mu_a.iter().filter(|m| !**m).count();
    let off_b = mu_b.iter().filter(|m| !**m).count();
    if off_a != off_b {
        return off_a > off_b;
    }
    mu_a < mu_b
}

struct Candidate {
    mu: Vec<bool>,
    cost: f64,
    cro: CroSolution,
}

fn evaluate_assignment(
    inst_template: &CroInstance,
    prep: &[PrepUser],
    mu: &[bool],
    nu_hint: &mut Option<f64>,
) -> Option<Candidate> {
    let mut inst = inst_template.clone();
    inst.users = prep
        .iter()
        .zip(mu)
        .filter(|(_, m)| **m)
        .map(|(u, _)| u.cro_user.clone())
        .collect();
    let bid_cost: f64 = prep
        .iter()
        .zip(mu)
        .filter(|(_, m)| !**m)
        .map(|(u, _)| u.bid_total)
        .sum();
    match solve_cro_reference_hinted(&inst, *nu_hint) {
        Ok(cro) => {
            if cro.nu > 0.0 {
                *nu_hint = Some(cro.nu);
            }
            Some(Candidate {
                mu: mu.to_vec(),
                cost: cro.total_cost + bid_cost,
                cro,
            })
        }
        Err(_) => None,
    }
}

fn assemble(
    scenario: &Scenario,
    prep: &[PrepUser],
    cand: Candidate,
    optimality: Optimality,
    nodes: u64,
    started: Instant,
) -> JurSolution {
    let entries = prep
        .iter()
        .zip(&cand.mu)
        .map(|(u, m)| AssocEntry {
            user_id: u.user_id,
            mbs_served: *m,
            station: if *m {
                scenario.mbs.id
            } else {
                u.bid_station.expect("offloaded has bid")
            },
            served: true,
        })
        .collect();
    JurSolution {
        association: Association { entries },
        resources: cand.cro,
        total_cost: cand.cost,
        wall_time_s: started.elapsed().as_secs_f64(),
        optimality,
        nodes_explored: nodes,
    }
}

fn instance_template(scenario: &Scenario) -> CroInstance {
    CroInstance {
        users: Vec::new(),
        c_p: scenario.mbs.c_p,
        c_w: scenario.mbs.c_w,
        gamma: scenario.mbs.gamma,
        p_max: scenario.mbs.p_max,
        w_max: scenario.mbs.w_max,
    }
}

/// Enumerate all delay/bid-feasible associations and return the cheapest.
pub fn solve_jur_exhaustive(scenario: &Scenario, bids: &BidTable) -> Result<JurSolution, JurError> {
    let started = Instant::now();
    let n = scenario.users.len();
    if n > 20 {
        return Err(JurError::TooLarge { n });
    }
    let prep = prepare(scenario, bids);
    let blocking = forced_infeasible(&prep);
    if !blocking.is_empty() {
        return Err(JurError::Infeasible { blocking });
    }
    let eligible: Vec<usize> = (0..n).filter(|i| prep[*i].eligible).collect();
    let template = instance_template(scenario);
    let mut nu_hint = None;
    let mut best: Option<Candidate> = None;
    let mut mu = vec![true; n];
    for mask in 0u64..(1u64 << eligible.len()) {
        for (bit, idx) in eligible.iter().enumerate() {
            mu[*idx] = mask & (1 << bit) == 0;
        }
        if let Some(cand) = evaluate_assignment(&template, &prep, &mu, &mut nu_hint) {
            let take = match &best {
                None => true,
                Some(b) => better(cand.cost, &cand.mu, b.cost, &b.mu),
            };
            if take {
                best = Some(cand);
            }
        }
    }
    let nodes = 1u64 << eligible.len();
    match best {
        Some(cand) => Ok(assemble(
            scenario,
            &prep,
            cand,
            Optimality::Exact,
            nodes,
            started,
        )),
        None => Err(JurError::Infeasible {
            blocking: prep
                .iter()
                .filter(|u| !u.eligible)
                .map(|u| u.user_id)
                .collect(),
        }),
    }
}

struct Node {
    /// Per eligible-user decision; None = undecided, Some(true) = MBS.
    decided: Vec<Option<bool>>,
    bound: f64,
    serve_floor: f64,
    n_decided: usize,
}

/// Depth-first branch-and-bound over the association vector.
pub fn solve_jur_bnb(
    scenario: &Scenario,
    bids: &BidTable,
    opts: &JurOpts,
) -> Result<JurSolution, JurError> {
    let started = Instant::now();
    let n = scenario.users.len();
    let prep = prepare(scenario, bids);
    let blocking = forced_infeasible(&prep);
    if !blocking.is_empty() {
        return Err(JurError::Infeasible { blocking });
    }
    let eligible: Vec<usize> = (0..n).filter(|i| prep[*i].eligible).collect();
    let fixed_cost: f64 = (0..n)
        .filter(|i| !prep[*i].eligible)
        .map(|i| prep[i].mbs_cost)
        .sum();
    let fixed_floor: f64 = (0..n)
        .filter(|i| !prep[*i].eligible)
        .map(|i| prep[i].floor)
        .sum();
    if fixed_floor > scenario.mbs.w_max * (1.0 + 1e-12) {
        return Err(JurError::Infeasible {
            blocking: prep
                .iter()
                .filter(|u| !u.eligible)
                .map(|u| u.user_id)
                .collect(),
        });
    }

    // Lower bound of an undecided user: the cheaper of its two options with
    // the bandwidth coupling ignored.
    let option_lb: Vec<f64> = eligible
        .iter()
        .map(|&i| prep[i].bid_total.min(prep[i].mbs_cost))
        .collect();
    let root_bound = fixed_cost + option_lb.iter().sum::<f64>();

    let template = instance_template(scenario);
    let mut nu_hint = None;
    let mut best: Option<Candidate> = None;
    let mut nodes: u64 = 0;
    let mut stack = vec![Node {
        decided: vec![None; eligible.len()],
        bound: root_bound,
        serve_floor: fixed_floor,
        n_decided: 0,
    }];
    let mut budget_hit = false;
    let mut open_bound_min = f64::INFINITY;

    let mut mu = vec![true; n];
    while let Some(node) = stack.pop() {
        if budget_hit && best.is_some() {
            open_bound_min = open_bound_min.min(node.bound);
            continue;
        }
        nodes += 1;
        if nodes > opts.node_budget && best.is_some() {
            budget_hit = true;
            open_bound_min = open_bound_min.min(node.bound);
            continue;
        }
        if let Some(b) = &best {
            if node.bound > b.cost {
                continue;
            }
        }
        if node.serve_floor > scenario.mbs.w_max * (1.0 + 1e-12) {
            continue; // every completion is bandwidth-infeasible
        }
        if node.n_decided == eligible.len() {
            for (slot, &idx) in eligible.iter().enumerate() {
                mu[idx] = node.decided[slot].expect("leaf fully decided");
            }
            if let Some(cand) = evaluate_assignment(&template, &prep, &mu, &mut nu_hint) {
                let take = match &best {
                    None => true,
                    Some(b) => better(cand.cost, &cand.mu, b.cost, &b.mu),
                };
                if take {
                    best = Some(cand);
                }
            }
            continue;
        }

        // branch on the undecided user with the largest cost gap
        let (slot, _) = node
            .decided
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_none())
            .map(|(slot, _)| {
                let i = eligible[slot];
                (slot, (prep[i].mbs_cost - prep[i].bid_total).abs())
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .expect("an undecided user exists");
        let i = eligible[slot];
        let child = |serve: bool| {
            let mut decided = node.decided.clone();
            decided[slot] = Some(serve);
            let add = if serve {
                prep[i].mbs_cost
            } else {
                prep[i].bid_total
            };
            Node {
                decided,
                bound: node.bound - option_lb[slot] + add,
                serve_floor: node.serve_floor + if serve { prep[i].floor } else { 0.0 },
                n_decided: node.n_decided + 1,
            }
        };
        // push the costlier option first so the cheaper branch is explored
        // first (LIFO)
        let offload_first = prep[i].bid_total <= prep[i].mbs_cost;
        if offload_first {
            stack.push(child(true));
            stack.push(child(false));
        } else {
            stack.push(child(false));
            stack.push(child(true));
        }
    }

    match best {
        Some(cand) => {
            let optimality = if budget_hit {
                let lb = open_bound_min.min(cand.cost);
                Optimality::BoundGap(((cand.cost - lb) / cand.cost).max(0.0))
            } else {
                Optimality::Exact
            };
            Ok(assemble(scenario, &prep, cand, optimality, nodes, started))
        }
        None => Err(JurError::Infeasible {
            blocking: prep
                .iter()
                .filter(|u| !u.eligible)
                .map(|u| u.user_id)
                .collect(),
        }),
    }
}

/// Direct serving baseline: the MBS serves everyone. Users that cannot fit
/// the bandwidth budget are dropped greedily, largest minimum demand first.
pub fn solve_dsm(scenario: &Scenario) -> JurSolution {
    let started = Instant::now();
    let n = scenario.users.len();
    let empty_bids = BidTable {
        per_user: Vec::new(),
    };
    let prep: Vec<PrepUser> = {
        // reuse the prep path with no bids: everyone is pinned to the MBS
        let mut p = prepare(scenario, &empty_bids);
        for u in &mut p {
            u.eligible = false;
        }
        p
    };
    let mut served: Vec<bool> = prep
        .iter()
        .map(|u| u.mbs_delay_ok && u.mbs_cost.is_finite())
        .collect();

    // drop until the power-capped demand fits the budget
    let mut floor_total: f64 = (0..n).filter(|&i| served[i]).map(|i| prep[i].floor).sum();
    if floor_total > scenario.mbs.w_max * (1.0 + 1e-12) {
        let mut order: Vec<usize> = (0..n).filter(|&i| served[i]).collect();
        order.sort_by(|a, b| {
            prep[*b]
                .floor
                .partial_cmp(&prep[*a].floor)
                .unwrap()
                .then(a.cmp(b))
        });
        for i in order {
            if floor_total <= scenario.mbs.w_max * (1.0 + 1e-12) {
                break;
            }
            served[i] = false;
            floor_total -= prep[i].floor;
        }
    }

    let mut inst = instance_template(scenario);
    inst.users = (0..n)
        .filter(|&i| served[i])
        .map(|i| prep[i].cro_user.clone())
        .collect();
    let cro = solve_cro_reference_hinted(&inst, None).expect("floor check guarantees feasibility");
    let entries = prep
        .iter()
        .enumerate()
        .map(|(i, u)| AssocEntry {
            user_id: u.user_id,
            mbs_served: true,
            station: scenario.mbs.id,
            served: served[i],
        })
        .collect();
    JurSolution {
        total_cost: cro.total_cost,
        association: Association { entries },
        resources: cro,
        wall_time_s: started.elapsed().as_secs_f64(),
        optimality: Optimality::Exact,
        nodes_explored: 1,
    }
}

/// Recompute the objective from scratch: MBS power/bandwidth cost of served
/// MBS users plus the best-bid totals of offloaded users.
pub fn recompute_objective(
    scenario: &Scenario,
    association: &Association,
    resources: &CroSolution,
    bids: &BidTable,
) -> f64 {
    let mut total = 0.0;
    for entry in &association.entries {
        if !entry.served {
            continue;
        }
        if entry.mbs_served {
            let alloc = resources
                .allocs
                .iter()
                .find(|a| a.user_id == entry.user_id)
                .expect("served MBS user has an allocation");
            total += scenario.mbs.c_p * alloc.p + scenario.mbs.gamma * scenario.mbs.c_w * alloc.w;
        } else {
            let idx = scenario
                .users
                .iter()
                .position(|u| u.id == entry.user_id)
                .expect("user exists");
            total += bids.best_for(idx).expect("offloaded user has a bid").total;
        }
    }
    total
}

/// Check delay, reliability, power, and bandwidth constraints of a returned
/// assignment; returns human-readable violations (empty = feasible).
pub fn audit_constraints(
    scenario: &Scenario,
    association: &Association,
    resources: &CroSolution,
) -> Vec<String> {
    let mut violations = Vec::new();
    for entry in &association.entries {
        if !entry.served {
            continue;
        }
        let user = scenario
            .users
            .iter()
            .find(|u| u.id == entry.user_id)
            .unwrap();
        if !scenario.delay.delay_feasible(user.d_th, entry.mbs_served) {
            violations.push(format!(
                "user {} violates its delay threshold",
                entry.user_id.0
            ));
        }
        if entry.mbs_served {
            let alloc = resources.allocs.iter().find(|a| a.user_id == entry.user_id);
            match alloc {
                None => violations.push(format!("user {} has no allocation", entry.user_id.0)),
                Some(a) => {
                    if a.p < 0.0 || a.p > scenario.mbs.p_max * (1.0 + 1e-9) {
                        violations.push(format!("user {} power out of range", entry.user_id.0));
                    }
                    let gain = user.mean_gain[&scenario.mbs.id];
                    let slack =
                        crate::cro::reliability_slack(a.p, a.w, user, gain, user.mean_noise);
                    if slack < -1e-6 * user.r_th {
                        violations.push(format!(
                            "user {} misses its reliability bound",
                            entry.user_id.0
                        ));
                    }
                }
            }
        }
    }
    let total_w = resources.total_bandwidth();
    if total_w > scenario.mbs.w_max * (1.0 + 1e-9) {
        violations.push(format!(
            "bandwidth budget exceeded: {total_w} > {}",
            scenario.mbs.w_max
        ));
    }
    violations
}

/// Solution CSV with columns
/// `user_id,mu,serving_station,p,w,user_cost,delay,served_flag[,fallback]`.
pub fn solution_csv(
    scenario: &Scenario,
    association: &Association,
    resources: &CroSolution,
    bids: &BidTable,
    fallbacks: Option<&[bool]>,
) -> String {
    let mut out = String::from("user_id,mu,serving_station,p,w,user_cost,delay,served_flag");
    if fallbacks.is_some() {
        out.push_str(",fallback");
    }
    out.push('\n');
    for (i, entry) in association.entries.iter().enumerate() {
        let (p, w, cost) = if !entry.served {
            (0.0, 0.0, 0.0)
        } else if entry.mbs_served {
            let a = resources
                .allocs
                .iter()
                .find(|a| a.user_id == entry.user_id)
                .unwrap();
            (
                a.p,
                a.w,
                scenario.mbs.c_p * a.p + scenario.mbs.gamma * scenario.mbs.c_w * a.w,
            )
        } else {
            let b = bids.best_for(i).unwrap();
            (b.p, b.w, b.total)
        };
        let delay = scenario.delay.delay_of(entry.mbs_served);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            entry.user_id.0,
            u8::from(entry.mbs_served),
            entry.station.0,
            p,
            w,
            cost,
            delay,
            u8::from(entry.served)
        ));
        if let Some(f) = fallbacks {
            out.push_str(&format!(",{}", u8::from(f[i])));
        }
        out.push('\n');
    }
    out
}
