//! Convex resource optimization (CRO) for a fixed MBS-served user set.
//!
//! Minimizes `sum_i c_p*p_i + gamma*c_w*w_i` subject to each user's expected
//! rate meeting `r_th*(1-delta_r)`, a per-user power cap, and a shared
//! bandwidth budget `sum_i w_i <= w_max`.
//!
//! Two solvers are provided. [`solve_cro_reference`] exploits separability:
//! at a trial bandwidth price `nu`, every user independently minimizes
//! `c_p*p + (gamma*c_w + nu)*w` on its active rate curve, and `nu` is driven
//! to the price that clears the bandwidth budget by safeguarded root-finding
//! on the demand residual. [`solve_cro_barrier`]
//! iterates the block scheme on the penalized Lagrangian
//! `L = sum_i c_p*p_i + gamma*c_w*w_i + lambda_i*ln g_i`, keeping every
//! iterate strictly inside the reliability region (`g_i > 0`) while the
//! barrier weight is driven to zero geometrically. Cost must match the
//! reference within `BarrierOpts::match_tol`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::newton_bracketed_from;
use crate::pricing::{fast_curve_point, min_rate_requirement, CurvePoint};
use crate::scenario::{Scenario, User, UserId};

const LN2: f64 = std::f64::consts::LN_2;
/// Upper guard on the bandwidth-price search.
const NU_CAP: f64 = 1e30;

/// One user of a CRO instance, reduced to what the optimizer needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CroUser {
    pub user_id: UserId,
    /// Minimum admissible expected rate `r_th * (1 - delta_r)`.
    pub rate_req: f64,
    pub r_th: f64,
    /// Channel quality `gain^2 / n0` in 1/W.
    pub q: f64,
}

/// Immutable problem description for one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CroInstance {
    pub users: Vec<CroUser>,
    pub c_p: f64,
    pub c_w: f64,
    pub gamma: f64,
    pub p_max: f64,
    pub w_max: f64,
}

impl CroInstance {
    /// Build an instance for the given MBS-served users of a scenario.
    pub fn from_scenario(scenario: &Scenario, served: &[UserId]) -> Self {
        let users = served
            .iter()
            .map(|id| {
                let user = scenario
                    .users
                    .iter()
                    .find(|u| u.id == *id)
                    .unwrap_or_else(|| panic!("user {id:?} not in scenario"));
                Self::user_entry(scenario, user)
            })
            .collect();
        Self {
            users,
            c_p: scenario.mbs.c_p,
            c_w: scenario.mbs.c_w,
            gamma: scenario.mbs.gamma,
            p_max: scenario.mbs.p_max,
            w_max: scenario.mbs.w_max,
        }
    }

    pub fn user_entry(scenario: &Scenario, user: &User) -> CroUser {
        let gain = user.mean_gain.get(&scenario.mbs.id).copied().unwrap_or(0.0);
        CroUser {
            user_id: user.id,
            rate_req: min_rate_requirement(user),
            r_th: user.r_th,
            q: gain * gain / user.mean_noise,
        }
    }

    pub fn bandwidth_price(&self, nu: f64) -> f64 {
        self.gamma * self.c_w + nu
    }

    fn true_cost(&self, p: &[f64], w: &[f64]) -> f64 {
        p.iter()
            .zip(w)
            .map(|(pi, wi)| self.c_p * pi + self.gamma * self.c_w * wi)
            .sum()
    }

    /// Minimum bandwidth each user can ever run on (power at the cap).
    fn floors(&self) -> Option<Vec<f64>> {
        self.users
            .iter()
            .map(|u| {
                let s_max = (1.0 + self.p_max * u.q).log2();
                if u.rate_req <= 0.0 {
                    Some(0.0)
                } else if s_max > 0.0 {
                    Some(u.rate_req / s_max)
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Per-user allocation of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserAlloc {
    pub user_id: UserId,
    pub p: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CroSolution {
    pub allocs: Vec<UserAlloc>,
    pub total_cost: f64,
    /// Multiplier of each user's reliability constraint.
    pub lambda: Vec<f64>,
    /// Multiplier of the shared bandwidth constraint.
    pub nu: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl CroSolution {
    pub fn total_bandwidth(&self) -> f64 {
        self.allocs.iter().map(|a| a.w).sum()
    }

    fn empty() -> Self {
        Self {
            allocs: Vec::new(),
            total_cost: 0.0,
            lambda: Vec::new(),
            nu: 0.0,
            iterations: 0,
            converged: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum CroError {
    /// The bandwidth budget cannot hold even the power-capped allocation; the
    /// blocking set is the smallest group of heaviest users whose removal
    /// restores feasibility.
    #[error("instance infeasible: bandwidth exhausted by {} user(s)", blocking.len())]
    Infeasible { blocking: Vec<UserId> },
    #[error("no strictly interior starting point exists")]
    InteriorStartFailed,
    #[error("barrier iteration did not converge within {iterations} iterations")]
    NotConverged {
        iterations: usize,
        last: Box<BarrierOutcome>,
    },
}

/// Deviation of the offered reliability from the user's bound:
/// `g = E[r](p, w) - r_th*(1-delta_r)`; feasible iff non-negative.
pub fn reliability_slack(p: f64, w: f64, user: &User, gain: f64, n0: f64) -> f64 {
    crate::scenario::expected_rate(p, w, gain, n0) - min_rate_requirement(user)
}

fn slack_of(u: &CroUser, p: f64, w: f64) -> f64 {
    if w == 0.0 {
        return -u.rate_req;
    }
    w * (1.0 + p * u.q).log2() - u.rate_req
}

/// Feasibility precheck shared by both solvers. Returns the per-user minimum
/// bandwidths or the blocking set.
fn check_bandwidth_floors(inst: &CroInstance) -> Result<Vec<f64>, CroError> {
    let floors = match inst.floors() {
        Some(f) => f,
        None => {
            let blocking = inst
                .users
                .iter()
                .filter(|u| {
                    let s_max = (1.0 + inst.p_max * u.q).log2();
                    u.rate_req > 0.0 && (s_max.is_nan() || s_max <= 0.0)
                })
                .map(|u| u.user_id)
                .collect();
            return Err(CroError::Infeasible { blocking });
        }
    };
    let total: f64 = floors.iter().sum();
    if total > inst.w_max * (1.0 + 1e-12) {
        // smallest prefix of heaviest users whose removal fits the budget
        let mut order: Vec<usize> = (0..floors.len()).collect();
        order.sort_by(|a, b| floors[*b].partial_cmp(&floors[*a]).unwrap().then(a.cmp(b)));
        let mut remaining = total;
        let mut blocking = Vec::new();
        for idx in order {
            if remaining <= inst.w_max {
                break;
            }
            remaining -= floors[idx];
            blocking.push(inst.users[idx].user_id);
        }
        blocking.sort();
        return Err(CroError::Infeasible { blocking });
    }
    Ok(floors)
}

fn allocate_at_price(inst: &CroInstance, nu: f64) -> Vec<CurvePoint> {
    let price_w = inst.bandwidth_price(nu);
    inst.users
        .iter()
        .map(|u| {
            fast_curve_point(u.rate_req, u.q, inst.p_max, inst.c_p, price_w)
                .expect("feasibility established by floor check")
        })
        .collect()
}

/// Demand and its price sensitivity at bandwidth price `beta`:
/// `(sum w_i, sum -dw_i/dbeta, points)`. Users pinned at the power cap do
/// not respond to the price.
fn demand_with_slope(inst: &CroInstance, beta: f64) -> (f64, f64, Vec<CurvePoint>) {
    let points = {
        let nu = beta - inst.bandwidth_price(0.0);
        allocate_at_price(inst, nu)
    };
    let mut total = 0.0;
    let mut slope = 0.0;
    for (u, pt) in inst.users.iter().zip(&points) {
        total += pt.w;
        if u.rate_req <= 0.0 {
            continue;
        }
        let s_max = (1.0 + inst.p_max * u.q).log2();
        if pt.s < s_max * (1.0 - 1e-12) {
            // interior: ds/dbeta = (rate/s^2) / h'(s) with
            // h(s) = c_p*ln2*2^s/q - beta*rate/s^2
            let dh = inst.c_p * LN2 * LN2 * pt.s.exp2() / u.q
                + 2.0 * beta * u.rate_req / (pt.s * pt.s * pt.s);
            let r_over_s2 = u.rate_req / (pt.s * pt.s);
            slope += r_over_s2 * r_over_s2 / dh;
        }
    }
    (total, slope, points)
}

/// Reference solver; see module docs. `nu_hint` warm-starts the price
/// bracket, which matters when evaluating many related instances.
pub fn solve_cro_reference_hinted(
    inst: &CroInstance,
    nu_hint: Option<f64>,
) -> Result<CroSolution, CroError> {
    if inst.users.is_empty() {
        return Ok(CroSolution::empty());
    }
    check_bandwidth_floors(inst)?;

    let base = allocate_at_price(inst, 0.0);
    let mut iterations = 0usize;
    let (nu, points) = if base.iter().map(|pt| pt.w).sum::<f64>() <= inst.w_max {
        (0.0, base)
    } else {
        // Bracket a clearing price, then safeguarded Newton on the residual
        // W_max - demand(beta), which is increasing in the price.
        let beta0 = inst.bandwidth_price(0.0);
        let mut lo = beta0;
        let mut hi = nu_hint
            .filter(|h| *h > 0.0)
            .map(|h| beta0 + h)
            .unwrap_or(2.0 * beta0)
            .max(2.0 * beta0);
        while demand_with_slope(inst, hi).0 > inst.w_max {
            lo = hi;
            hi *= 2.0;
            iterations += 1;
            if hi > NU_CAP {
                // only reachable when the budget sits on the floor sum
                break;
            }
        }
        let beta = crate::numeric::newton_bracketed_from(
            |b| {
                let (total, slope, _) = demand_with_slope(inst, b);
                (inst.w_max - total, slope)
            },
            lo,
            hi,
            0.5 * (lo + hi),
        );
        iterations += 1;
        // land on the feasible side of the clearing price
        let mut beta = beta;
        let mut pts = allocate_at_price(inst, beta - beta0);
        let mut guard = 0;
        while pts.iter().map(|pt| pt.w).sum::<f64>() > inst.w_max && guard < 60 {
            beta *= 1.0 + 1e-12;
            pts = allocate_at_price(inst, beta - beta0);
            guard += 1;
        }
        (beta - beta0, pts)
    };

    let p: Vec<f64> = points.iter().map(|pt| pt.p).collect();
    let w: Vec<f64> = points.iter().map(|pt| pt.w).collect();
    let lambda = points
        .iter()
        .map(|pt| {
            if pt.s > 0.0 {
                inst.bandwidth_price(nu) / pt.s
            } else {
                0.0
            }
        })
        .collect();
    let allocs = inst
        .users
        .iter()
        .zip(points.iter())
        .map(|(u, pt)| UserAlloc {
            user_id: u.user_id,
            p: pt.p,
            w: pt.w,
        })
        .collect();
    Ok(CroSolution {
        allocs,
        total_cost: inst.true_cost(&p, &w),
        lambda,
        nu,
        iterations,
        converged: true,
    })
}

pub fn solve_cro_reference(inst: &CroInstance) -> Result<CroSolution, CroError> {
    solve_cro_reference_hinted(inst, None)
}

/// Options of the barrier iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierOpts {
    /// Stop when the largest relative block change falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Contract bound on |cost_barrier - cost_reference| / cost_reference.
    pub match_tol: f64,
    /// Geometric decrease factor of the barrier weight per outer iteration.
    pub kappa: f64,
    /// Initial barrier weight; scaled from the uncoupled cost when absent.
    pub mu0: Option<f64>,
}

impl Default for BarrierOpts {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 500,
            match_tol: 1e-4,
            kappa: 0.5,
            mu0: None,
        }
    }
}

/// One recorded outer iteration of the barrier run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierStep {
    pub iter: usize,
    pub mu: f64,
    pub nu: f64,
    pub cost: f64,
    pub max_rel_change: f64,
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierOutcome {
    pub solution: CroSolution,
    pub trace: Vec<BarrierStep>,
}

/// Penalized Lagrangian `sum_i c_p*p_i + gamma*c_w*w_i + lambda_i*ln g_i`.
///
/// Only defined strictly inside the reliability region; returns NaN when any
/// slack is non-positive.
pub fn penalized_lagrangian(inst: &CroInstance, p: &[f64], w: &[f64], lambda: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, u) in inst.users.iter().enumerate() {
        let g = slack_of(u, p[i], w[i]);
        if g <= 0.0 {
            return f64::NAN;
        }
        total += inst.c_p * p[i] + inst.gamma * inst.c_w * w[i] + lambda[i] * g.ln();
    }
    total
}

/// Analytic partials of [`penalized_lagrangian`] with respect to each `p_i`
/// and `w_i`.
pub fn penalized_lagrangian_grad(
    inst: &CroInstance,
    p: &[f64],
    w: &[f64],
    lambda: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut dp = Vec::with_capacity(inst.users.len());
    let mut dw = Vec::with_capacity(inst.users.len());
    for (i, u) in inst.users.iter().enumerate() {
        let g = slack_of(u, p[i], w[i]);
        let s = (1.0 + p[i] * u.q).log2();
        let dr_dp = w[i] * u.q / ((1.0 + p[i] * u.q) * LN2);
        dp.push(inst.c_p + lambda[i] * dr_dp / g);
        dw.push(inst.gamma * inst.c_w + lambda[i] * s / g);
    }
    (dp, dw)
}

/// Barrier-penalized Lagrangian iteration; see module docs.
///
/// The stated `+lambda*ln g` penalty admits no per-block minimizer for
/// positive multipliers (the infimum sits on the boundary), so the blocks are
/// minimized with the barrier acting repulsively — equivalently `lambda_i =
/// -mu` in the formula above — and `mu` is the weight that the documented
/// geometric schedule drives to zero. Reported multipliers are the standard
/// central-path estimates `mu / g_i`, which converge to the reference KKT
/// multipliers.
pub fn solve_cro_barrier(
    inst: &CroInstance,
    opts: &BarrierOpts,
) -> Result<BarrierOutcome, CroError> {
    if inst.users.is_empty() {
        return Ok(BarrierOutcome {
            solution: CroSolution::empty(),
            trace: Vec::new(),
        });
    }
    check_bandwidth_floors(inst)?;
    let n = inst.users.len();

    // Strictly interior start: inflate each user's uncoupled optimum by 5%.
    let uncoupled = allocate_at_price(inst, 0.0);
    let mut p: Vec<f64> = uncoupled
        .iter()
        .map(|pt| (1.05 * pt.p).min(inst.p_max))
        .collect();
    let mut w: Vec<f64> = uncoupled.iter().map(|pt| 1.05 * pt.w).collect();
    for (i, u) in inst.users.iter().enumerate() {
        if u.rate_req > 0.0 && slack_of(u, p[i], w[i]) <= 0.0 {
            return Err(CroError::InteriorStartFailed);
        }
    }

    let mean_cost = inst.true_cost(&p, &w) / n as f64;
    let mut mu = opts.mu0.unwrap_or(0.05 * mean_cost).max(1e-12);
    let mut nu = 0.0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0usize;
    let active: Vec<usize> = (0..n).filter(|i| inst.users[*i].rate_req > 0.0).collect();

    // Mutually stationary point of the p- and w-blocks for one user at
    // barrier weight `mu` and bandwidth price `beta`. The w-stationarity
    // gives g = mu*s/beta; substituting it into the p-stationarity leaves a
    // single increasing function of s:
    //     h(s) = c_p*ln2*2^s/q - beta*rate/s^2 - mu/s.
    // Alternating the raw blocks zigzags along the nearly rigid rate curve
    // (loop gain 1 - O(g/rate)), so the blocks are driven to their joint
    // root directly.
    let seeds = std::cell::RefCell::new(
        inst.users
            .iter()
            .zip(&p)
            .map(|(u, pi)| (1.0 + pi * u.q).log2())
            .collect::<Vec<f64>>(),
    );
    let user_point = |i: usize, mu: f64, beta: f64| -> (f64, f64) {
        let u = &inst.users[i];
        let s_max = (1.0 + inst.p_max * u.q).log2();
        let h = |s: f64| {
            let v = inst.c_p * LN2 * s.exp2() / u.q - beta * u.rate_req / (s * s) - mu / s;
            let dv = inst.c_p * LN2 * LN2 * s.exp2() / u.q
                + 2.0 * beta * u.rate_req / (s * s * s)
                + mu / (s * s);
            (v, dv)
        };
        let s = if h(s_max).0 <= 0.0 {
            s_max
        } else {
            let seed = seeds.borrow()[i];
            newton_bracketed_from(h, s_max * 1e-12, s_max, seed)
        };
        seeds.borrow_mut()[i] = s;
        (s, u.rate_req / s + mu / beta)
    };

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        if iter > 0 {
            mu *= opts.kappa;
        }
        // bandwidth price: nu = 0 if the unpriced demand fits, else drive
        // the residual W_max - demand(beta) to zero (increasing in beta)
        let demand = |beta: f64| -> (f64, f64) {
            let mut total = 0.0;
            let mut slope = 0.0;
            for &i in &active {
                let u = &inst.users[i];
                let (s, w_i) = user_point(i, mu, beta);
                total += w_i;
                slope += mu / (beta * beta);
                let s_max = (1.0 + inst.p_max * u.q).log2();
                if s < s_max * (1.0 - 1e-12) {
                    let dh = inst.c_p * LN2 * LN2 * s.exp2() / u.q
                        + 2.0 * beta * u.rate_req / (s * s * s)
                        + mu / (s * s);
                    let r_over_s2 = u.rate_req / (s * s);
                    slope += r_over_s2 * r_over_s2 / dh;
                }
            }
            (total, slope)
        };
        let beta0 = inst.bandwidth_price(0.0);
        let beta = if demand(beta0).0 <= inst.w_max {
            beta0
        } else {
            let mut lo = beta0;
            let mut hi = if nu > 0.0 {
                (beta0 + nu) * 2.0
            } else {
                2.0 * beta0
            };
            let mut guard = 0;
            while demand(hi).0 > inst.w_max && guard < 300 {
                lo = hi;
                hi *= 2.0;
                guard += 1;
            }
            crate::numeric::newton_bracketed_from(
                |b| {
                    let (total, slope) = demand(b);
                    (inst.w_max - total, slope)
                },
                lo,
                hi,
                (beta0 + nu).clamp(lo, hi),
            )
        };
        nu = beta - beta0;

        let mut max_rel_change = 0.0f64;
        for &i in &active {
            let (s, w_new) = user_point(i, mu, beta);
            let p_new = ((s.exp2() - 1.0) / inst.users[i].q).min(inst.p_max);
            max_rel_change = max_rel_change.max((p_new - p[i]).abs() / p_new.max(1e-300));
            max_rel_change = max_rel_change.max((w_new - w[i]).abs() / w_new.max(1e-300));
            p[i] = p_new;
            w[i] = w_new;
        }
        let min_slack = active
            .iter()
            .map(|&i| slack_of(&inst.users[i], p[i], w[i]))
            .fold(f64::INFINITY, f64::min);
        trace.push(BarrierStep {
            iter,
            mu,
            nu,
            cost: inst.true_cost(&p, &w),
            max_rel_change,
            min_slack,
        });
        // movement between barrier levels is O(mu), so stalling below tol
        // certifies the weight is spent
        if iter > 0 && max_rel_change < opts.tol {
            converged = true;
            break;
        }
    }

    let lambda: Vec<f64> = inst
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            if u.rate_req <= 0.0 {
                0.0
            } else {
                mu / slack_of(u, p[i], w[i])
            }
        })
        .collect();
    let allocs = inst
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| UserAlloc {
            user_id: u.user_id,
            p: p[i],
            w: w[i],
        })
        .collect();
    let solution = CroSolution {
        allocs,
        total_cost: inst.true_cost(&p, &w),
        lambda,
        nu,
        iterations,
        converged,
    };
    let outcome = BarrierOutcome { solution, trace };
    if converged {
        Ok(outcome)
    } else {
        Err(CroError::NotConverged {
            iterations,
            last: Box::new(outcome),
        })
    }
}

/// Residuals of the KKT conditions of a solution, all relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Stationarity w.r.t. every p_i (power-cap multiplier accounted for).
    pub stationarity_p: f64,
    /// Stationarity w.r.t. every w_i.
    pub stationarity_w: f64,
    /// nu * (w_max - sum w), normalized by the total cost.
    pub complementary_slackness: f64,
    /// Largest |g_i| / r_th_i: reliability constraints must sit on the curve.
    pub activity: f64,
}

impl KktReport {
    pub fn worst(&self) -> f64 {
        self.stationarity_p
            .max(self.stationarity_w)
            .max(self.complementary_slackness)
            .max(self.activity)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() < tol
    }
}

/// Verify stationarity, complementary slackness, and reliability activity of
/// `sol` on `inst`. Report-only; never fails.
pub fn check_kkt(inst: &CroInstance, sol: &CroSolution) -> KktReport {
    let mut st_p = 0.0f64;
    let mut st_w = 0.0f64;
    let mut activity = 0.0f64;
    let beta = inst.bandwidth_price(sol.nu);
    for (i, u) in inst.users.iter().enumerate() {
        if u.rate_req <= 0.0 {
            continue;
        }
        let a = &sol.allocs[i];
        let lambda = sol.lambda[i];
        let s = (1.0 + a.p * u.q).log2();
        let g = slack_of(u, a.p, a.w);
        activity = activity.max(g.abs() / u.r_th);
        st_w = st_w.max((beta - lambda * s).abs() / beta);
        let dr_dp = a.w * u.q / ((1.0 + a.p * u.q) * LN2);
        let resid = (inst.c_p - lambda * dr_dp) / inst.c_p;
        if a.p < inst.p_max * (1.0 - 1e-9) {
            st_p = st_p.max(resid.abs());
        } else {
            // at the cap only a negative-direction violation matters
            st_p = st_p.max(resid.max(0.0));
        }
    }
    let slack = inst.w_max - sol.total_bandwidth();
    let comp = (sol.nu * slack).abs() / sol.total_cost.max(1e-300);
    KktReport {
        stationarity_p: st_p,
        stationarity_w: st_w,
        complementary_slackness: comp,
        activity,
    }
}

/// Solver trace as CSV with columns `iteration,cost,max_residual,nu`.
pub fn trace_to_csv(trace: &[BarrierStep]) -> String {
    let mut out = String::from("iteration,cost,max_residual,nu\n");
    for step in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            step.iter, step.cost, step.max_rel_change, step.nu
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::min_cost_on_curve;
    use crate::scenario::{expected_rate, generate_scenario, ScenarioConfig};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, n: usize, budget_frac: f64) -> CroInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let users: Vec<CroUser> = (0..n)
            .map(|i| {
                let r_th = 1e6 + 9e6 * rng.random::<f64>();
                let delta_r = 0.01 + 0.09 * rng.random::<f64>();
                CroUser {
                    user_id: UserId(i as u32),
                    rate_req: r_th * (1.0 - delta_r),
                    r_th,
                    q: 10f64.powf(0.5 + 3.0 * rng.random::<f64>()),
                }
            })
            .collect();
        let mut inst = CroInstance {
            users,
            c_p: 3000.0,
            c_w: 1e-5,
            gamma: 1.0,
            p_max: 1.0,
            w_max: f64::INFINITY,
        };
        let uncoupled: f64 = allocate_at_price(&inst, 0.0).iter().map(|pt| pt.w).sum();
        inst.w_max = budget_frac * uncoupled;
        inst
    }

    fn single_user_instance(seed: u64) -> CroInstance {
        random_instance(seed, 1, 10.0)
    }

    #[test]
    fn reliability_slack_matches_composition() {
        let sc = generate_scenario(&ScenarioConfig::baseline().with_users(5), 2).unwrap();
        let u = &sc.users[1];
        let gain = u.mean_gain[&sc.mbs.id];
        let (p, w) = (0.3, 2.5e6);
        let expected = expected_rate(p, w, gain, u.mean_noise) - min_rate_requirement(u);
        assert!((reliability_slack(p, w, u, gain, u.mean_noise) - expected).abs() < 1e-9);
        // zero allocation leaves the full requirement as negative slack
        assert!(
            (reliability_slack(0.0, 0.0, u, gain, u.mean_noise) + min_rate_requirement(u)).abs()
                < 1e-9
        );
        // a point on the curve has ~zero slack
        let pt = min_cost_on_curve(
            min_rate_requirement(u),
            gain * gain / u.mean_noise,
            1.0,
            3000.0,
            1e-5,
        )
        .unwrap();
        let g = reliability_slack(pt.p, pt.w, u, gain, u.mean_noise);
        assert!(g.abs() <= 1e-9 * min_rate_requirement(u));
    }

    #[test]
    fn single_user_uncoupled_matches_per_user_min_cost() {
        let inst = single_user_instance(3);
        let sol = solve_cro_reference(&inst).unwrap();
        let u = &inst.users[0];
        let pt = min_cost_on_curve(u.rate_req, u.q, inst.p_max, inst.c_p, inst.gamma * inst.c_w)
            .unwrap();
        assert_eq!(sol.nu, 0.0);
        assert!((sol.total_cost - pt.cost).abs() / pt.cost < 1e-12);
    }

    #[test]
    fn two_identical_users_split_budget_without_pricing() {
        let mut inst = random_instance(4, 1, 10.0);
        let u = inst.users[0].clone();
        inst.users.push(CroUser {
            user_id: UserId(1),
            ..u
        });
        let pt = min_cost_on_curve(
            inst.users[0].rate_req,
            inst.users[0].q,
            inst.p_max,
            inst.c_p,
            inst.gamma * inst.c_w,
        )
        .unwrap();
        inst.w_max = 2.0 * pt.w;
        let sol = solve_cro_reference(&inst).unwrap();
        assert_eq!(sol.nu, 0.0);
        for a in &sol.allocs {
            assert!((a.w - pt.w).abs() / pt.w < 1e-9);
        }
    }

    #[test]
    fn binding_budget_clears_exactly() {
        let inst = random_instance(5, 10, 0.6);
        let sol = solve_cro_reference(&inst).unwrap();
        assert!(sol.nu > 0.0);
        let total = sol.total_bandwidth();
        assert!((total - inst.w_max).abs() <= 1e-9 * inst.w_max);
        assert!(total <= inst.w_max * (1.0 + 1e-9));
        let report = check_kkt(&inst, &sol);
        assert!(report.passes(1e-5), "residuals: {report:?}");
    }

    #[test]
    fn infeasible_budget_reports_blocking_users() {
        let mut inst = random_instance(6, 5, 0.5);
        inst.w_max = 1.0; // absurdly small
        match solve_cro_reference(&inst) {
            Err(CroError::Infeasible { blocking }) => assert!(!blocking.is_empty()),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn kkt_flags_perturbed_solution() {
        let inst = random_instance(7, 6, 0.8);
        let mut sol = solve_cro_reference(&inst).unwrap();
        assert!(check_kkt(&inst, &sol).passes(1e-5));
        sol.allocs[0].p *= 1.1;
        let report = check_kkt(&inst, &sol);
        assert!(report.stationarity_p > 1e-5 || report.activity > 1e-5);
    }

    #[test]
    fn comp_slack_is_zero_when_budget_is_loose() {
        let inst = random_instance(8, 4, 5.0);
        let sol = solve_cro_reference(&inst).unwrap();
        assert_eq!(sol.nu, 0.0);
        let report = check_kkt(&inst, &sol);
        assert_eq!(report.complementary_slackness, 0.0);
    }

    #[test]
    fn barrier_single_user_matches_uncoupled_cost() {
        let inst = single_user_instance(9);
        let out = solve_cro_barrier(&inst, &BarrierOpts::default()).unwrap();
        let reference = solve_cro_reference(&inst).unwrap();
        let rel = (out.solution.total_cost - reference.total_cost).abs() / reference.total_cost;
        assert!(rel < 1e-6, "rel err {rel}");
    }

    #[test]
    fn barrier_iterates_stay_interior_and_match_reference() {
        for seed in [10u64, 11, 12] {
            for frac in [0.5, 0.9, 1.2] {
                let inst = random_instance(seed, 10, frac);
                let reference = solve_cro_reference(&inst).unwrap();
                let out = solve_cro_barrier(&inst, &BarrierOpts::default()).unwrap();
                for step in &out.trace {
                    assert!(step.min_slack > 0.0, "interior violated at {step:?}");
                }
                let rel =
                    (out.solution.total_cost - reference.total_cost).abs() / reference.total_cost;
                assert!(rel < 1e-4, "seed {seed} frac {frac}: rel {rel}");
                assert!(out.solution.total_bandwidth() <= inst.w_max * (1.0 + 1e-9));
                for (u, a) in inst.users.iter().zip(&out.solution.allocs) {
                    let g = slack_of(u, a.p, a.w);
                    assert!(g >= 0.0 && g <= 1e-6 * u.r_th, "slack {g} outside band");
                }
            }
        }
    }

    #[test]
    fn raising_delta_r_never_raises_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..10u64 {
            let mut inst = random_instance(100 + seed, 8, 0.9);
            let before = solve_cro_reference(&inst).unwrap().total_cost;
            let k = (rng.random::<f64>() * inst.users.len() as f64) as usize;
            let u = &mut inst.users[k];
            // relax: grow delta_r by shrinking the required rate
            u.rate_req *= 0.9;
            let after = solve_cro_reference(&inst).unwrap().total_cost;
            assert!(after <= before * (1.0 + 1e-9));
        }
    }

    #[test]
    fn cost_scales_with_prices_but_argmin_stays() {
        let inst = random_instance(13, 6, 0.7);
        let sol = solve_cro_reference(&inst).unwrap();
        let mut scaled = inst.clone();
        scaled.c_p *= 3.0;
        scaled.c_w *= 3.0;
        let sol3 = solve_cro_reference(&scaled).unwrap();
        assert!((sol3.total_cost - 3.0 * sol.total_cost).abs() / sol3.total_cost < 1e-9);
        for (a, b) in sol.allocs.iter().zip(&sol3.allocs) {
            assert!((a.p - b.p).abs() <= 1e-6 * a.p.max(1e-12));
            assert!((a.w - b.w).abs() <= 1e-6 * a.w.max(1e-12));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inst = random_instance(14, 5, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = inst.users.len();
        for _ in 0..20 {
            // random strictly interior point
            let mut p = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            let mut lambda = Vec::with_capacity(n);
            for u in &inst.users {
                let s_max = (1.0 + inst.p_max * u.q).log2();
                let s = s_max * (0.3 + 0.6 * rng.random::<f64>());
                let pw = (s.exp2() - 1.0) / u.q;
                let wu = u.rate_req / s * (1.1 + rng.random::<f64>());
                p.push(pw);
                w.push(wu);
                lambda.push(0.1 + 10.0 * rng.random::<f64>());
            }
            let (dp, dw) = penalized_lagrangian_grad(&inst, &p, &w, &lambda);
            for i in 0..n {
                let hp = p[i].abs().max(1e-3) * 1e-6;
                let mut pp = p.clone();
                pp[i] = p[i] + hp;
                let up = penalized_lagrangian(&inst, &pp, &w, &lambda);
                pp[i] = p[i] - hp;
                let dn = penalized_lagrangian(&inst, &pp, &w, &lambda);
                let fd = (up - dn) / (2.0 * hp);
                assert!(
                    (fd - dp[i]).abs() <= 1e-5 * dp[i].abs().max(1.0),
                    "dp mismatch"
                );

                let hw = w[i].abs().max(1.0) * 1e-6;
                let mut ww = w.clone();
                ww[i] = w[i] + hw;
                let up = penalized_lagrangian(&inst, &p, &ww, &lambda);
                ww[i] = w[i] - hw;
                let dn = penalized_lagrangian(&inst, &p, &ww, &lambda);
                let fd = (up - dn) / (2.0 * hw);
                assert!(
                    (fd - dw[i]).abs() <= 1e-5 * dw[i].abs().max(1.0),
                    "dw mismatch"
                );
            }
        }
    }

    #[test]
    fn reference_matches_projected_gradient_oracle() {
        // Independent cross-check: minimize over the bandwidth vector with
        // power eliminated on the active rate curve, projecting onto the
        // budget simplex intersected with the per-user floor box.
        for (seed, frac) in [(16u64, 0.6), (17, 1.0), (18, 2.0)] {
            let inst = random_instance(seed, 8, frac);
            let reference = solve_cro_reference(&inst).unwrap();
            let oracle = projected_gradient_cost(&inst);
            let rel = (reference.total_cost - oracle).abs() / oracle;
            assert!(
                rel < 1e-5,
                "seed {seed} frac {frac}: ref {} vs oracle {oracle}",
                reference.total_cost
            );
        }
    }

    /// Gradient-projection oracle used by tests only.
    fn projected_gradient_cost(inst: &CroInstance) -> f64 {
        let n = inst.users.len();
        let floors: Vec<f64> = inst
            .users
            .iter()
            .map(|u| u.rate_req / (1.0 + inst.p_max * u.q).log2())
            .collect();
        let cost = |w: &[f64]| -> f64 {
            w.iter()
                .zip(&inst.users)
                .map(|(wi, u)| {
                    let p = ((u.rate_req / wi).exp2() - 1.0) / u.q;
                    inst.c_p * p + inst.gamma * inst.c_w * wi
                })
                .sum()
        };
        let grad = |w: &[f64]| -> Vec<f64> {
            w.iter()
                .zip(&inst.users)
                .map(|(wi, u)| {
                    let e = (u.rate_req / wi).exp2();
                    inst.gamma * inst.c_w - inst.c_p / u.q * e * LN2 * u.rate_req / (wi * wi)
                })
                .collect()
        };
        // start from uncoupled allocations scaled into the budget
        let mut w: Vec<f64> = allocate_at_price(inst, 0.0).iter().map(|pt| pt.w).collect();
        project(&mut w, &floors, inst.w_max);
        let mut step = inst.w_max / (n as f64) * 0.05;
        let mut best = cost(&w);
        for _ in 0..20000 {
            let g = grad(&w);
            let mut cand: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            project(&mut cand, &floors, inst.w_max);
            let c = cost(&cand);
            if c < best {
                best = c;
                w = cand;
                step *= 1.05;
            } else {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
        best
    }

    /// Euclidean projection onto {w >= floors, sum w <= budget}.
    fn project(w: &mut [f64], floors: &[f64], budget: f64) {
        for (wi, fi) in w.iter_mut().zip(floors) {
            *wi = wi.max(*fi * (1.0 + 1e-12));
        }
        let total: f64 = w.iter().sum();
        if total <= budget {
            return;
        }
        // bisection on the shift that lands the clipped sum on the budget
        let mut lo = 0.0;
        let mut hi = (total - budget) / 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let s: f64 = w
                .iter()
                .zip(floors)
                .map(|(wi, fi)| (wi - mid).max(*fi * (1.0 + 1e-12)))
                .sum();
            if s > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for (wi, fi) in w.iter_mut().zip(floors) {
            *wi = (*wi - hi).max(*fi * (1.0 + 1e-12));
        }
    }
}
