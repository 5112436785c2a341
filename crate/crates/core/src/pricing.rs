//! SBS bidding: per-user minimum serving cost and best-bid selection.
//!
//! Serving one user at expected rate R with channel quality `q = h^2/n0`
//! reduces to a one-dimensional convex problem in the spectral efficiency
//! `s = log2(1 + p*q)`: power is `p = (2^s - 1)/q`, bandwidth is `w = R/s`,
//! and the cost `price_p * p + price_w * w` is minimized over `s` in
//! `(0, s_max]` by golden-section search. The same curve solver backs the
//! bandwidth-priced subproblems of the resource optimizer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::golden_section_min;
use crate::scenario::{Scenario, StationId, StationParams, User, UserId};

/// Tolerance of the golden-section search on `s`.
pub const S_TOL: f64 = 1e-10;

/// Optimal point on a user's active-rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub p: f64,
    pub w: f64,
    /// Spectral efficiency log2(1 + p*q) at the optimum.
    pub s: f64,
    pub cost: f64,
}

/// Minimum admissible expected rate `r_th * (1 - delta_r)` for a user.
pub fn min_rate_requirement(user: &User) -> f64 {
    user.r_th * (1.0 - user.delta_r)
}

/// Minimize `price_p * p + price_w * w` subject to the expected rate hitting
/// `rate_req` exactly, `0 <= p <= p_max`, with `q = gain^2 / n0`.
///
/// Returns `None` when `rate_req > 0` but `q * p_max == 0` (no rate is
/// achievable at any bandwidth). The bandwidth is left a hair above the
/// constraint curve so the delivered rate never rounds below the requirement.
pub fn min_cost_on_curve(
    rate_req: f64,
    q: f64,
    p_max: f64,
    price_p: f64,
    price_w: f64,
) -> Option<CurvePoint> {
    if rate_req <= 0.0 {
        return Some(CurvePoint {
            p: 0.0,
            w: 0.0,
            s: 0.0,
            cost: 0.0,
        });
    }
    let s_max = (1.0 + p_max * q).log2();
    if s_max.is_nan() || s_max <= 0.0 || s_max.is_infinite() {
        return None;
    }
    let cost_at = |s: f64| price_p * (s.exp2() - 1.0) / q + price_w * rate_req / s;
    let s_lo = s_max * 1e-14;
    let (mut s, _) = golden_section_min(cost_at, s_lo, s_max, S_TOL);
    // Golden section localizes the argmin only to ~sqrt(eps); polish the
    // stationarity root so downstream price bisection sees a smooth curve.
    let dcost =
        |s: f64| price_p * std::f64::consts::LN_2 * s.exp2() / q - price_w * rate_req / (s * s);
    if dcost(s_max) <= 0.0 {
        s = s_max;
    } else {
        for _ in 0..3 {
            let d2 = price_p * std::f64::consts::LN_2 * std::f64::consts::LN_2 * s.exp2() / q
                + 2.0 * price_w * rate_req / (s * s * s);
            let next = s - dcost(s) / d2;
            if next.is_finite() && next > 0.0 && next < s_max {
                s = next;
            } else {
                break;
            }
        }
    }
    // Snap onto the power cap when the search converged at the right edge.
    if s_max - s <= 2.0 * S_TOL {
        s = s_max;
    }
    let p = ((s.exp2() - 1.0) / q).min(p_max);
    let w = rate_req / s * (1.0 + 1e-12);
    Some(CurvePoint {
        p,
        w,
        s,
        cost: price_p * p + price_w * w,
    })
}

/// Same optimum as [`min_cost_on_curve`], located by safeguarded Newton on
/// the stationarity condition instead of golden section. The resource
/// optimizer calls this inside its price root-finding, where the curve solve
/// is the innermost hot loop.
///
/// The interior stationarity `price_p*ln2*2^s/q = price_w*rate/s^2` is
/// equivalent to `s*ln2 + 2*ln s = ln K` with
/// `K = price_w*rate*q/(price_p*ln2)`, whose left side is increasing in `s`.
pub fn fast_curve_point(
    rate_req: f64,
    q: f64,
    p_max: f64,
    price_p: f64,
    price_w: f64,
) -> Option<CurvePoint> {
    if rate_req <= 0.0 {
        return Some(CurvePoint {
            p: 0.0,
            w: 0.0,
            s: 0.0,
            cost: 0.0,
        });
    }
    let s_max = (1.0 + p_max * q).log2();
    if s_max.is_nan() || s_max <= 0.0 || s_max.is_infinite() {
        return None;
    }
    let ln_k = (price_w * rate_req * q / (price_p * std::f64::consts::LN_2)).ln();
    let g_at = |s: f64| {
        (
            s * std::f64::consts::LN_2 + 2.0 * s.ln() - ln_k,
            std::f64::consts::LN_2 + 2.0 / s,
        )
    };
    let s = if g_at(s_max).0 <= 0.0 {
        // derivative still negative at the power cap
        s_max
    } else {
        crate::numeric::newton_bracketed(g_at, s_max * 1e-14, s_max)
    };
    let p = ((s.exp2() - 1.0) / q).min(p_max);
    let w = rate_req / s * (1.0 + 1e-12);
    Some(CurvePoint {
        p,
        w,
        s,
        cost: price_p * p + price_w * w,
    })
}

/// Cheapest MBS-style allocation for `user` at `station`, or `None` when the
/// requirement is unreachable. Uses the station's own unit costs.
pub fn per_user_min_cost(
    user: &User,
    station: &StationParams,
    gain: f64,
    n0: f64,
) -> Option<CurvePoint> {
    let q = gain * gain / n0;
    min_cost_on_curve(
        min_rate_requirement(user),
        q,
        station.p_max,
        station.c_p,
        station.gamma * station.c_w,
    )
}

/// An SBS's offer to serve one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub sbs_id: StationId,
    pub user_id: UserId,
    pub resource_cost: f64,
    pub reward: f64,
    pub total: f64,
    pub p: f64,
    pub w: f64,
}

/// Bid of `sbs` for `user`: the SBS's minimum serving cost plus its reward
/// markup. `None` when the user is out of coverage or unreachable.
pub fn compute_bid(sbs: &StationParams, user: &User) -> Option<Bid> {
    if user.position.distance(&sbs.position) > sbs.coverage_radius {
        return None;
    }
    let gain = *user.mean_gain.get(&sbs.id)?;
    let point = per_user_min_cost(user, sbs, gain, user.mean_noise)?;
    let resource_cost = point.cost;
    let reward = sbs.reward_markup * resource_cost;
    Some(Bid {
        sbs_id: sbs.id,
        user_id: user.id,
        resource_cost,
        reward,
        total: resource_cost + reward,
        p: point.p,
        w: point.w,
    })
}

/// All valid bids per user, with the cheapest one marked.
#[derive(Debug, Clone, PartialEq)]
pub struct BidTable {
    /// Indexed like `Scenario::users`.
    pub per_user: Vec<UserBids>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserBids {
    pub user_id: UserId,
    pub bids: Vec<Bid>,
    /// Index into `bids` of the minimum-total bid; ties go to the lowest
    /// station id.
    pub best: Option<usize>,
}

impl UserBids {
    pub fn best_bid(&self) -> Option<&Bid> {
        self.best.map(|i| &self.bids[i])
    }
}

impl BidTable {
    pub fn best_for(&self, user_index: usize) -> Option<&Bid> {
        self.per_user.get(user_index).and_then(|ub| ub.best_bid())
    }

    /// CSV export with columns
    /// `user_id,sbs_id,p,w,resource_cost,reward,total,is_best`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_id,sbs_id,p,w,resource_cost,reward,total,is_best\n");
        for ub in &self.per_user {
            for (i, b) in ub.bids.iter().enumerate() {
                let is_best = ub.best == Some(i);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    b.user_id.0,
                    b.sbs_id.0,
                    b.p,
                    b.w,
                    b.resource_cost,
                    b.reward,
                    b.total,
                    u8::from(is_best)
                ));
            }
        }
        out
    }
}

fn best_index(bids: &[Bid]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, b) in bids.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(j) => {
                let cur = &bids[j];
                if b.total < cur.total || (b.total == cur.total && b.sbs_id < cur.sbs_id) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best
}

/// Collect every SBS's bid for every user it covers.
pub fn build_bid_table(scenario: &Scenario) -> BidTable {
    let per_user = scenario
        .users
        .par_iter()
        .map(|user| {
            let bids: Vec<Bid> = scenario
                .sbss
                .iter()
                .filter_map(|sbs| compute_bid(sbs, user))
                .collect();
            let best = best_index(&bids);
            UserBids {
                user_id: user.id,
                bids,
                best,
            }
        })
        .collect();
    BidTable { per_user }
}
