//! Control and adversarial strategies.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{Auction, ProtocolError, Rfb};
use crate::money::{Fraction, Money};
use crate::topology::NodeId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Tightness,
    /// Bids low, then resells the packet in zero-budget auctions.
    GreedyZeroBudget,
    /// Tightness bidding, but always hands the packet to the cheapest bidder.
    LowestBidChooser,
    RandomBidder,
    AlwaysBypass,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Tightness,
        StrategyKind::GreedyZeroBudget,
        StrategyKind::LowestBidChooser,
        StrategyKind::RandomBidder,
        StrategyKind::AlwaysBypass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Tightness => "tightness",
            StrategyKind::GreedyZeroBudget => "greedy_zero_budget",
            StrategyKind::LowestBidChooser => "lowest_bid_chooser",
            StrategyKind::RandomBidder => "random_bidder",
            StrategyKind::AlwaysBypass => "always_bypass",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyFloor {
    /// Bid the announced fine.
    #[default]
    Fine,
    /// Bid nothing at all.
    Zero,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub greedy_floor: GreedyFloor,
}

pub fn greedy_bid(rfb: &Rfb, params: &BaselineParams) -> Money {
    match params.greedy_floor {
        GreedyFloor::Fine => rfb.fine,
        GreedyFloor::Zero => Money::ZERO,
    }
}

/// What a greedy winner announces downstream.
pub fn greedy_setup() -> (Money, Money) {
    (Money::ZERO, Money::ZERO)
}

/// Uniform over `[fine, budget]` at money resolution.
pub fn random_bid<R: Rng + ?Sized>(rfb: &Rfb, rng: &mut R) -> Money {
    let (lo, hi) = (rfb.fine.millis(), rfb.budget.millis());
    if lo >= hi {
        return rfb.budget;
    }
    Money::from_millis(rng.random_range(lo..=hi))
}

/// Mid rule used by the random bidder: half the price, half of that as fine.
pub fn random_setup(won: Money) -> (Money, Money) {
    let half = Fraction::from_ppm(500_000);
    let budget = won.scale(half);
    (budget, budget.scale(half))
}

/// Lowest bid wins, ties to the lowest node id; any auctioneer may use it.
pub fn lowest_bid_choose(auction: &Auction) -> Result<NodeId, ProtocolError> {
    auction.lowest_bid_winner()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderAction {
    /// Pay the backbone and deliver.
    Bypass,
    /// Keep going over the ad hoc network (or drop, per strategy).
    Continue,
}

pub fn bypass_decision(kind: StrategyKind) -> HolderAction {
    match kind {
        StrategyKind::AlwaysBypass => HolderAction::Bypass,
        _ => HolderAction::Continue,
    }
}
