//! Tightness-based bidding and auctioning.
//!
//! A node's tightness is its hop surplus (or deficit) against the packet's
//! hop limit if the packet followed that node's shortest path. Bids follow
//! a logistic curve in relative tightness, winners are picked on a
//! price/tightness preference plane, and zero-budget requests are answered
//! by dropping the packet.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{Auction, ProtocolError, Rfb};
use crate::money::{Fraction, Money};
use crate::topology::{HopCountTable, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    pub budget_fraction: Fraction,
    pub fine_fraction: Fraction,
    pub k1: f64,
    pub k2: f64,
    /// Bid instant as fractions of the auction window.
    pub bid_window: [f64; 2],
    /// Saturation value for relative tightness and steepness.
    pub c_cap: f64,
    /// A stranded holder bypasses when `B0 >= factor * own fine`.
    pub stranded_exposure_factor: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            budget_fraction: Fraction::from_ppm(600_000),
            fine_fraction: Fraction::from_ppm(900_000),
            k1: 2.0,
            k2: 3.0,
            bid_window: [0.5, 0.75],
            c_cap: 1e6,
            stranded_exposure_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl StrategyParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let bad = |field, reason: &str| Err(ParamsError::Invalid { field, reason: reason.into() });
        let in_unit = |f: Fraction| f.ppm() > 0 && f <= Fraction::ONE;
        if !in_unit(self.budget_fraction) {
            return bad("budget_fraction", "must be in (0, 1]");
        }
        if !in_unit(self.fine_fraction) {
            return bad("fine_fraction", "must be in (0, 1]");
        }
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return bad("k1", "must be positive");
        }
        if !(self.k2 > self.k1 && self.k2.is_finite()) {
            return bad("k2", "must exceed k1");
        }
        let [lo, hi] = self.bid_window;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad("bid_window", "must satisfy 0 <= lo <= hi <= 1");
        }
        if !(self.c_cap > 0.0 && self.c_cap.is_finite()) {
            return bad("c_cap", "must be positive");
        }
        if !(self.stranded_exposure_factor >= 0.0 && self.stranded_exposure_factor.is_finite()) {
            return bad("stranded_exposure_factor", "must be non-negative");
        }
        Ok(())
    }
}

/// Hop surplus of a candidate next hop: `(H0 - p_u - 1) - hc`.
pub fn tightness(timeout: u32, hops_traversed: u32, hop_count: u32) -> i64 {
    (timeout as i64 - hops_traversed as i64 - 1) - hop_count as i64
}

fn tightness_of(rfb: &Rfb, hops: &HopCountTable, node: NodeId) -> i64 {
    // Valid topologies reach every node; an unreachable one can never make it.
    match hops.get(node) {
        Some(hc) => tightness(rfb.timeout, rfb.hops_traversed, hc),
        None => i64::MIN / 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightnessAnalysis {
    pub node: NodeId,
    pub upstream: NodeId,
    pub own: i64,
    /// Viable candidates (tightness >= 0), including this node when viable.
    pub viable: Vec<(NodeId, i64)>,
    pub mean: Option<f64>,
    pub max: Option<i64>,
    /// Relative tightness, set only when `own > 0`.
    pub relative: Option<f64>,
    /// Curve steepness, set only when `own > 0`.
    pub steepness: Option<f64>,
    /// This node is the only one able to bid.
    pub no_competition: bool,
}

/// Tightness of `node` against the other candidates for `rfb`.
///
/// `candidates` is the auction's eligible set and must contain `node`.
pub fn analyze(
    hops: &HopCountTable,
    rfb: &Rfb,
    candidates: &BTreeSet<NodeId>,
    node: NodeId,
    params: &StrategyParams,
) -> TightnessAnalysis {
    debug_assert!(candidates.contains(&node));
    let own = tightness_of(rfb, hops, node);
    let viable: Vec<(NodeId, i64)> = candidates
        .iter()
        .map(|&i| (i, tightness_of(rfb, hops, i)))
        .filter(|&(_, d)| d >= 0)
        .collect();
    let mean = (!viable.is_empty())
        .then(|| viable.iter().map(|&(_, d)| d as f64).sum::<f64>() / viable.len() as f64);
    let max = viable.iter().map(|&(_, d)| d).max();
    let (relative, steepness) = if own > 0 {
        let guard = |den: f64| if den > 0.0 { own as f64 / den } else { params.c_cap };
        (
            Some(guard(mean.unwrap_or(0.0)).min(params.c_cap)),
            Some(guard(max.unwrap_or(0) as f64).min(params.c_cap)),
        )
    } else {
        (None, None)
    };
    TightnessAnalysis {
        node,
        upstream: rfb.auctioneer,
        own,
        viable,
        mean,
        max,
        relative,
        steepness,
        no_competition: candidates.len() == 1,
    }
}

/// Logistic offer `(B - F) * [1 - 1/(1 + e^(-a(c-1)))] + F`, rounded to
/// money and kept inside `[F, B]`.
pub fn logistic_offer(budget: Money, fine: Money, steepness: f64, relative: f64) -> Money {
    // 1 - 1/(1 + e^-x) == 1/(1 + e^x)
    let weight = 1.0 / (1.0 + (steepness * (relative - 1.0)).exp());
    let spread = (budget - fine).to_f64();
    let raw = spread * weight + fine.to_f64();
    Money::from_f64(raw).unwrap_or(budget).clamp_to(fine, budget)
}

pub fn compute_bid(analysis: &TightnessAnalysis, rfb: &Rfb) -> Money {
    match (analysis.relative, analysis.steepness) {
        (Some(c), Some(a)) if analysis.own > 0 && !analysis.no_competition => {
            logistic_offer(rfb.budget, rfb.fine, a, c)
        }
        _ => rfb.budget,
    }
}

/// Bid instant, uniform in `[lo * window, hi * window]`.
pub fn bid_time<R: Rng + ?Sized>(window: f64, params: &StrategyParams, rng: &mut R) -> f64 {
    let [lo, hi] = params.bid_window;
    let (lo, hi) = (lo * window, hi * window);
    if lo >= hi {
        return lo;
    }
    rng.random_range(lo..=hi)
}

/// Budget and fine announced after winning at price `won`.
pub fn setup_auction(won: Money, params: &StrategyParams) -> (Money, Money) {
    let budget = won.scale(params.budget_fraction);
    (budget, budget.scale(params.fine_fraction))
}

/// Preference plane through `(op=Bn, c=0) -> 0`, `(0, 0) -> k1` and
/// `(Bn, c_max) -> k2`. A zero budget or zero `c_max` drops that term.
pub fn preference(offer: Money, relative: f64, budget: Money, c_max: f64, params: &StrategyParams) -> f64 {
    let price_term = if budget.millis() > 0 {
        params.k1 / budget.to_f64() * offer.to_f64()
    } else {
        0.0
    };
    let tightness_term = if c_max > 0.0 { params.k2 / c_max * relative } else { 0.0 };
    params.k1 - price_term + tightness_term
}

/// Relative tightness of every candidate from the auctioneer's side.
/// Candidates that cannot make the deadline, or are exactly tight, get 0.
pub fn relative_tightness_all(
    hops: &HopCountTable,
    rfb: &Rfb,
    candidates: &BTreeSet<NodeId>,
) -> Vec<(NodeId, f64)> {
    let deltas: Vec<(NodeId, i64)> = candidates
        .iter()
        .map(|&i| (i, tightness_of(rfb, hops, i)))
        .collect();
    let viable: Vec<i64> = deltas.iter().map(|&(_, d)| d).filter(|&d| d >= 0).collect();
    let mean = if viable.is_empty() {
        0.0
    } else {
        viable.iter().sum::<i64>() as f64 / viable.len() as f64
    };
    deltas
        .into_iter()
        .map(|(i, d)| (i, if d > 0 && mean > 0.0 { d as f64 / mean } else { 0.0 }))
        .collect()
}

/// Winner by maximum preference; ties go to higher relative tightness,
/// then to the lower node id.
pub fn choose_winner(
    auction: &Auction,
    hops: &HopCountTable,
    params: &StrategyParams,
) -> Result<NodeId, ProtocolError> {
    if auction.eligible().is_empty() {
        return Err(ProtocolError::NoEligibleBidders);
    }
    let missing = auction.missing_bidders();
    if !missing.is_empty() {
        return Err(ProtocolError::MissingBids(missing));
    }
    let rfb = auction.rfb();
    let rel = relative_tightness_all(hops, rfb, auction.eligible());
    let c_max = rel.iter().map(|&(_, c)| c).fold(0.0, f64::max);
    let scored = rel.into_iter().map(|(node, c)| {
        let offer = auction.bid_of(node).expect("all bids present").amount;
        (node, c, preference(offer, c, rfb.budget, c_max, params))
    });
    let best = scored
        .max_by(|a, b| {
            a.2.total_cmp(&b.2)
                .then(a.1.total_cmp(&b.1))
                .then(b.0.cmp(&a.0))
        })
        .expect("non-empty");
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinAction {
    Forward,
    Drop,
}

/// A packet won in a zero-budget auction is dropped on arrival.
pub fn on_win(rfb: &Rfb) -> WinAction {
    if rfb.budget.is_zero() {
        WinAction::Drop
    } else {
        WinAction::Forward
    }
}

/// Whether a holder that cannot forward ad hoc should pay for the backbone.
pub fn stranded_bypass(original_budget: Money, own_fine: Money, params: &StrategyParams) -> bool {
    original_budget.to_f64() >= params.stranded_exposure_factor * own_fine.to_f64()
}
