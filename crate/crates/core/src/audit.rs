//! Re-checks recorded games against the forwarding and payment rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::accounting::{Account, Ledger};
use crate::auction::{eligible_bidders, lowest_bidder};
use crate::engine::{settle, GameTrace, Outcome, PacketStatus};
use crate::money::Money;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    HopAccounting,
    LoopPrevention,
    Timeout,
    FineMonotonicity,
    FineWithinBudget,
    Eligibility,
    MandatoryBids,
    BidWithinBudget,
    BidWindow,
    WinnerIsBidder,
    LowestBidAtAccessPoint,
    ContractTerms,
    HopDeadline,
    Outcome,
    Conservation,
    Settlement,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::HopAccounting => "hop accounting",
            Rule::LoopPrevention => "loop prevention",
            Rule::Timeout => "timeout immutability",
            Rule::FineMonotonicity => "fine monotonicity",
            Rule::FineWithinBudget => "fine within budget",
            Rule::Eligibility => "eligibility",
            Rule::MandatoryBids => "mandatory bids",
            Rule::BidWithinBudget => "bid within budget",
            Rule::BidWindow => "bid window",
            Rule::WinnerIsBidder => "winner is a bidder",
            Rule::LowestBidAtAccessPoint => "lowest bid at access point",
            Rule::ContractTerms => "contract terms",
            Rule::HopDeadline => "hop deadline",
            Rule::Outcome => "outcome consistency",
            Rule::Conservation => "conservation",
            Rule::Settlement => "settlement",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("round {round} game {game}: {rule}: {detail}")]
pub struct Violation {
    pub round: u32,
    pub game: u32,
    pub rule: Rule,
    pub detail: String,
}

/// First rule `trace` breaks, if any.
pub fn audit_game(topo: &Topology, window: f64, trace: &GameTrace) -> Result<(), Violation> {
    let fail = |rule: Rule, detail: String| {
        Err(Violation { round: trace.round, game: trace.game, rule, detail })
    };
    let p = &trace.packet;

    if p.hops as usize != p.history.len() {
        return fail(Rule::HopAccounting, format!("hops {} but history has {}", p.hops, p.history.len()));
    }
    let mut seen = BTreeSet::from([p.source]);
    for n in &p.history {
        if !seen.insert(*n) {
            return fail(Rule::LoopPrevention, format!("node {n} carried the packet twice"));
        }
    }
    if p.fine > p.budget {
        return fail(Rule::FineWithinBudget, format!("packet fine {} > budget {}", p.fine, p.budget));
    }
    if trace.auctions.len() != trace.chain.len() {
        return fail(Rule::ContractTerms, "one contract per auction expected".into());
    }

    for (k, (rec, contract)) in trace.auctions.iter().zip(&trace.chain).enumerate() {
        let rfb = &rec.rfb;
        let here = |rule, detail: String| fail(rule, format!("auction {k}: {detail}"));
        if rfb.packet != p.id || contract.packet != p.id {
            return here(Rule::ContractTerms, "packet id mismatch".into());
        }
        if rfb.hops_traversed as usize != k {
            return here(Rule::HopAccounting, format!("announced {} hops", rfb.hops_traversed));
        }
        let expected_auctioneer = if k == 0 { p.source } else { p.history[k - 1] };
        if rfb.auctioneer != expected_auctioneer {
            return here(Rule::ContractTerms, format!("auctioneer {} does not hold the packet", rfb.auctioneer));
        }
        if rfb.timeout != p.timeout {
            return here(Rule::Timeout, format!("timeout {} differs from {}", rfb.timeout, p.timeout));
        }
        if rfb.hops_traversed >= p.timeout {
            return here(Rule::HopDeadline, "auction opened with no hops left".into());
        }
        let previous_fine = if k == 0 { p.fine } else { trace.chain[k - 1].fine };
        if rfb.fine > previous_fine {
            return here(Rule::FineMonotonicity, format!("fine {} after {}", rfb.fine, previous_fine));
        }
        if k == 0 && rfb.budget != p.budget {
            return here(Rule::ContractTerms, "source must announce the packet budget".into());
        }
        if rfb.fine > rfb.budget || rfb.fine.is_negative() {
            return here(Rule::FineWithinBudget, format!("fine {} vs budget {}", rfb.fine, rfb.budget));
        }
        let eligible: BTreeSet<_> = match eligible_bidders(topo, rfb.auctioneer, &p.history[..k]) {
            Ok(e) => e,
            Err(e) => return here(Rule::Eligibility, e.to_string()),
        };
        let recorded: BTreeSet<_> = rec.eligible.iter().copied().collect();
        if recorded != eligible || recorded.len() != rec.eligible.len() {
            return here(Rule::Eligibility, format!("recorded {:?}, expected {:?}", rec.eligible, eligible));
        }
        let bidders: Vec<_> = rec.bids.iter().map(|b| b.bidder).collect();
        let bidder_set: BTreeSet<_> = bidders.iter().copied().collect();
        if bidder_set.len() != bidders.len() || bidder_set != eligible {
            return here(Rule::MandatoryBids, format!("bidders {bidders:?}, eligible {eligible:?}"));
        }
        for b in &rec.bids {
            if b.amount > rfb.budget || b.amount.is_negative() {
                return here(Rule::BidWithinBudget, format!("{} bid {} over {}", b.bidder, b.amount, rfb.budget));
            }
            if !(0.0..=window).contains(&b.submit_time) {
                return here(Rule::BidWindow, format!("{} bid at {}", b.bidder, b.submit_time));
            }
        }
        let Some(win_bid) = rec.bids.iter().find(|b| b.bidder == rec.winner) else {
            return here(Rule::WinnerIsBidder, format!("winner {}", rec.winner));
        };
        if topo.is_access_point(rfb.auctioneer) {
            let lowest = lowest_bidder(&rec.bids).expect("bids present");
            if lowest != rec.winner {
                return here(Rule::LowestBidAtAccessPoint, format!("picked {}, lowest {lowest}", rec.winner));
            }
        }
        if contract.upstream != rfb.auctioneer
            || contract.downstream != rec.winner
            || contract.price != win_bid.amount
            || contract.fine != rfb.fine
            || p.history[k] != rec.winner
        {
            return here(Rule::ContractTerms, format!("{contract:?}"));
        }
    }

    // outcome against the packet's final state
    let k = trace.chain.len();
    if k == 0 {
        return fail(Rule::Outcome, "no hop was ever contracted".into());
    }
    let last = trace.chain[k - 1].downstream;
    let delivered = trace.outcome.is_delivered();
    if (p.status == PacketStatus::Delivered) != delivered || p.status == PacketStatus::InFlight {
        return fail(Rule::Outcome, format!("status {:?} vs outcome {}", p.status, trace.outcome.label()));
    }
    let adhoc = matches!(trace.outcome, Outcome::DeliveredAdHoc { .. });
    let expected_len = if adhoc { k + 1 } else { k };
    if p.history.len() != expected_len || trace.outcome.node() != last {
        return fail(Rule::Outcome, format!("{} does not match the contract chain", trace.outcome.label()));
    }
    if adhoc && (p.history[k] != p.destination || !topo.are_adjacent(last, p.destination)) {
        return fail(Rule::Outcome, "ad hoc delivery must end at the destination".into());
    }
    if delivered && p.hops > p.timeout {
        return fail(Rule::HopDeadline, format!("delivered after {} hops, limit {}", p.hops, p.timeout));
    }
    if matches!(trace.outcome, Outcome::Timeout { .. }) && p.hops < p.timeout {
        return fail(Rule::Outcome, "timeout declared with hops left".into());
    }

    // money: recorded deltas must be the fold of the recorded transfers
    let mut fold: BTreeMap<Account, Money> = BTreeMap::new();
    for t in &trace.transfers {
        if t.amount.is_negative() || t.packet_id != p.id {
            return fail(Rule::Conservation, format!("bad transfer {t:?}"));
        }
        *fold.entry(t.payer).or_default() -= t.amount;
        *fold.entry(t.payee).or_default() += t.amount;
    }
    let total: Money = trace.deltas.values().sum();
    if !total.is_zero() {
        return fail(Rule::Conservation, format!("deltas sum to {total}"));
    }
    let nonzero = |m: &BTreeMap<Account, Money>| -> BTreeMap<Account, Money> {
        m.iter().filter(|(_, v)| !v.is_zero()).map(|(a, v)| (*a, *v)).collect()
    };
    if nonzero(&fold) != nonzero(&trace.deltas) {
        return fail(Rule::Conservation, "deltas disagree with transfers".into());
    }

    // and the transfers must be exactly what the payment rules demand
    let mut ledger = Ledger::new(topo.nodes().map(|(id, _)| id));
    if let Err(e) = settle(&mut ledger, p, &trace.chain, trace.outcome) {
        return fail(Rule::Settlement, e.to_string());
    }
    if ledger.transfers() != trace.transfers.as_slice() {
        return fail(Rule::Settlement, "transfers differ from the payment rules".into());
    }
    Ok(())
}

/// Audits every game, stopping at the first violation.
pub fn audit_all<'a>(
    topo: &Topology,
    window: f64,
    traces: impl IntoIterator<Item = &'a GameTrace>,
) -> Result<usize, Violation> {
    let mut n = 0;
    for t in traces {
        audit_game(topo, window, t)?;
        n += 1;
    }
    Ok(n)
}
