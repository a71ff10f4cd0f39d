//! Forwarding auction rules: request for bids, mandatory open bids inside
//! a timed window, winner hand-off and the resulting hop contract.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::money::Money;
use crate::topology::{NodeId, Topology, TopologyError};

/// Default auction window in seconds.
pub const DEFAULT_WINDOW: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketId(pub u64);

impl std::fmt::Display for PacketId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Request for bids announced by the current holder of a packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rfb {
    pub packet: PacketId,
    pub auctioneer: NodeId,
    pub destination: NodeId,
    pub budget: Money,
    pub fine: Money,
    /// Hop limit set at injection; copied unchanged into every request.
    pub timeout: u32,
    /// Hops the packet has already traversed to reach the auctioneer.
    pub hops_traversed: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub bidder: NodeId,
    pub amount: Money,
    /// Seconds since the request was announced.
    pub submit_time: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopContract {
    pub packet: PacketId,
    pub upstream: NodeId,
    pub downstream: NodeId,
    pub price: Money,
    pub fine: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Open,
    Closed,
}

/// What the protocol knows about the packet beyond the request itself.
#[derive(Debug, Clone, Copy)]
pub struct PacketContext<'a> {
    pub original_timeout: u32,
    /// Nodes that have received (and so forwarded or will forward) the packet.
    pub forwarders: &'a [NodeId],
    /// Fine of the contract under which the auctioneer holds the packet.
    pub previous_fine: Option<Money>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("fine exceeds budget ({fine} > {budget})")]
    FineExceedsBudget { fine: Money, budget: Money },
    #[error("fine monotonicity: fine {fine} exceeds previous hop fine {previous}")]
    FineIncreased { fine: Money, previous: Money },
    #[error("timeout {got} differs from the source timeout {expected}")]
    TimeoutChanged { got: u32, expected: u32 },
    #[error("negative amount {0}")]
    NegativeAmount(Money),
    #[error("auction window must be positive, got {0}")]
    BadWindow(f64),
    #[error("auction is closed")]
    AuctionClosed,
    #[error("node {0} is not eligible to bid")]
    IneligibleBidder(NodeId),
    #[error("node {0} already bid")]
    DuplicateBid(NodeId),
    #[error("must bid lower or equal than the announced budget ({amount} > {budget})")]
    BidOverBudget { amount: Money, budget: Money },
    #[error("bid time {time} outside the window [0, {window}]")]
    BidOutsideWindow { time: f64, window: f64 },
    #[error("mandatory bids missing from {0:?}")]
    MissingBids(Vec<NodeId>),
    #[error("winner {0} did not bid")]
    WinnerNotBidder(NodeId),
    #[error("access point must select the lowest bid ({expected}), not {got}")]
    NotLowestBid { expected: NodeId, got: NodeId },
    #[error("auctioneer {0} is not an access point")]
    NotAccessPoint(NodeId),
    #[error("no eligible bidders")]
    NoEligibleBidders,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl Rfb {
    /// Checks the request against the packet it belongs to.
    pub fn validate(&self, ctx: &PacketContext<'_>) -> Result<(), ProtocolError> {
        if self.budget.is_negative() {
            return Err(ProtocolError::NegativeAmount(self.budget));
        }
        if self.fine.is_negative() {
            return Err(ProtocolError::NegativeAmount(self.fine));
        }
        if self.fine > self.budget {
            return Err(ProtocolError::FineExceedsBudget { fine: self.fine, budget: self.budget });
        }
        if let Some(previous) = ctx.previous_fine {
            if self.fine > previous {
                return Err(ProtocolError::FineIncreased { fine: self.fine, previous });
            }
        }
        if self.timeout != ctx.original_timeout {
            return Err(ProtocolError::TimeoutChanged {
                got: self.timeout,
                expected: ctx.original_timeout,
            });
        }
        Ok(())
    }
}

/// Handheld neighbors of `auctioneer` that have not yet carried the packet.
pub fn eligible_bidders(
    topo: &Topology,
    auctioneer: NodeId,
    forwarders: &[NodeId],
) -> Result<BTreeSet<NodeId>, TopologyError> {
    Ok(topo
        .neighbors(auctioneer)?
        .iter()
        .copied()
        .filter(|&n| topo.is_handheld(n) && !forwarders.contains(&n))
        .collect())
}

/// Lowest amount wins; equal amounts go to the lowest node id.
pub fn lowest_bidder<'a>(bids: impl IntoIterator<Item = &'a Bid>) -> Option<NodeId> {
    bids.into_iter()
        .min_by_key(|b| (b.amount, b.bidder))
        .map(|b| b.bidder)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Auction {
    rfb: Rfb,
    window: f64,
    auctioneer_is_ap: bool,
    eligible: BTreeSet<NodeId>,
    bids: Vec<Bid>,
    phase: Phase,
    winner: Option<NodeId>,
}

impl Auction {
    pub fn open(
        rfb: Rfb,
        window: f64,
        topo: &Topology,
        ctx: &PacketContext<'_>,
    ) -> Result<Self, ProtocolError> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(ProtocolError::BadWindow(window));
        }
        rfb.validate(ctx)?;
        let auctioneer_is_ap = topo.is_access_point(rfb.auctioneer);
        let eligible = eligible_bidders(topo, rfb.auctioneer, ctx.forwarders)?;
        Ok(Auction {
            rfb,
            window,
            auctioneer_is_ap,
            eligible,
            bids: Vec::new(),
            phase: Phase::Open,
            winner: None,
        })
    }

    pub fn rfb(&self) -> &Rfb {
        &self.rfb
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn eligible(&self) -> &BTreeSet<NodeId> {
        &self.eligible
    }

    /// Bids ordered by submit time (then bidder id).
    pub fn bids(&self) -> &[Bid] {
        &self.bids
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn winner(&self) -> Option<NodeId> {
        self.winner
    }

    pub fn auctioneer_is_ap(&self) -> bool {
        self.auctioneer_is_ap
    }

    /// Open bids already on the air strictly before `time`.
    pub fn visible_at(&self, time: f64) -> impl Iterator<Item = &Bid> {
        self.bids.iter().filter(move |b| b.submit_time < time)
    }

    pub fn bid_of(&self, node: NodeId) -> Option<&Bid> {
        self.bids.iter().find(|b| b.bidder == node)
    }

    pub fn missing_bidders(&self) -> Vec<NodeId> {
        self.eligible
            .iter()
            .copied()
            .filter(|&n| self.bid_of(n).is_none())
            .collect()
    }

    pub fn submit(&mut self, bid: Bid) -> Result<(), ProtocolError> {
        if self.phase != Phase::Open {
            return Err(ProtocolError::AuctionClosed);
        }
        if !self.eligible.contains(&bid.bidder) {
            return Err(ProtocolError::IneligibleBidder(bid.bidder));
        }
        if self.bid_of(bid.bidder).is_some() {
            return Err(ProtocolError::DuplicateBid(bid.bidder));
        }
        if bid.amount.is_negative() {
            return Err(ProtocolError::NegativeAmount(bid.amount));
        }
        if bid.amount > self.rfb.budget {
            return Err(ProtocolError::BidOverBudget { amount: bid.amount, budget: self.rfb.budget });
        }
        if !(0.0..=self.window).contains(&bid.submit_time) {
            return Err(ProtocolError::BidOutsideWindow { time: bid.submit_time, window: self.window });
        }
        let pos = self
            .bids
            .partition_point(|b| (b.submit_time, b.bidder) <= (bid.submit_time, bid.bidder));
        self.bids.insert(pos, bid);
        Ok(())
    }

    fn require_all_bids(&self) -> Result<(), ProtocolError> {
        let missing = self.missing_bidders();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ProtocolError::MissingBids(missing))
        }
    }

    /// The winner an access point must pick.
    pub fn ap_select_winner(&self) -> Result<NodeId, ProtocolError> {
        if !self.auctioneer_is_ap {
            return Err(ProtocolError::NotAccessPoint(self.rfb.auctioneer));
        }
        self.lowest_bid_winner()
    }

    /// Lowest-bid choice usable by any auctioneer.
    pub fn lowest_bid_winner(&self) -> Result<NodeId, ProtocolError> {
        if self.eligible.is_empty() {
            return Err(ProtocolError::NoEligibleBidders);
        }
        self.require_all_bids()?;
        Ok(lowest_bidder(&self.bids).expect("eligible set is non-empty"))
    }

    /// Closes the auction after the window and forms the hop contract.
    pub fn close(&mut self, winner: NodeId) -> Result<HopContract, ProtocolError> {
        if self.phase != Phase::Open {
            return Err(ProtocolError::AuctionClosed);
        }
        self.require_all_bids()?;
        let Some(bid) = self.bid_of(winner) else {
            return Err(ProtocolError::WinnerNotBidder(winner));
        };
        if self.auctioneer_is_ap {
            let expected = lowest_bidder(&self.bids).expect("winner bid exists");
            if expected != winner {
                return Err(ProtocolError::NotLowestBid { expected, got: winner });
            }
        }
        let contract = HopContract {
            packet: self.rfb.packet,
            upstream: self.rfb.auctioneer,
            downstream: winner,
            price: bid.amount,
            fine: self.rfb.fine,
        };
        self.phase = Phase::Closed;
        self.winner = Some(winner);
        Ok(contract)
    }
}
