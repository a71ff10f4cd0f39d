//! Game orchestration: one packet per game, hop-by-hop auctions until the
//! packet is delivered (ad hoc or via the backbone) or fails, followed by
//! settlement.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{Account, Ledger, LedgerError, Transfer};
use crate::auction::{
    eligible_bidders, Auction, Bid, HopContract, PacketContext, PacketId, ProtocolError, Rfb,
};
use crate::baselines::{self, HolderAction, StrategyKind};
use crate::config::{ConfigError, GameConfig};
use crate::money::Money;
use crate::tightness::{self, WinAction};
use crate::topology::{HopCountTable, NodeId, Topology, TopologyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketStatus {
    InFlight,
    Delivered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub id: PacketId,
    pub source: NodeId,
    pub destination: NodeId,
    pub budget: Money,
    pub fine: Money,
    pub timeout: u32,
    pub hops: u32,
    /// Every node the packet reached after the source, in order.
    pub history: Vec<NodeId>,
    pub status: PacketStatus,
}

/// True while another hop is still within the hop limit.
pub fn hop_deadline_check(packet: &Packet) -> bool {
    packet.hops < packet.timeout
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// `node` handed the packet to the destination access point.
    DeliveredAdHoc { node: NodeId },
    /// `node` paid for backbone delivery.
    DeliveredBackbone { node: NodeId },
    Dropped { node: NodeId },
    /// Hop limit reached at `node` without delivery.
    Timeout { node: NodeId },
    /// `node` had nobody to forward to and did not bypass.
    Stranded { node: NodeId },
}

impl Outcome {
    pub fn is_delivered(self) -> bool {
        matches!(self, Outcome::DeliveredAdHoc { .. } | Outcome::DeliveredBackbone { .. })
    }

    pub fn node(self) -> NodeId {
        match self {
            Outcome::DeliveredAdHoc { node }
            | Outcome::DeliveredBackbone { node }
            | Outcome::Dropped { node }
            | Outcome::Timeout { node }
            | Outcome::Stranded { node } => node,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::DeliveredAdHoc { .. } => "delivered_ad_hoc",
            Outcome::DeliveredBackbone { .. } => "delivered_backbone",
            Outcome::Dropped { .. } => "dropped",
            Outcome::Timeout { .. } => "timeout",
            Outcome::Stranded { .. } => "stranded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub rfb: Rfb,
    pub eligible: Vec<NodeId>,
    pub bids: Vec<Bid>,
    pub winner: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub round: u32,
    pub game: u32,
    pub seed: u64,
    pub packet: Packet,
    pub auctions: Vec<AuctionRecord>,
    pub chain: Vec<HopContract>,
    pub outcome: Outcome,
    pub transfers: Vec<Transfer>,
    /// Net balance change per touched account.
    pub deltas: BTreeMap<Account, Money>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    // The variants below indicate an engine bug, never a game outcome.
    #[error("protocol violation by the engine: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("settlement failed: {0}")]
    Ledger(#[from] LedgerError),
}

/// Seed of game `(round, game)`: SplitMix64 of the master seed, xored with
/// `round << 32 | game`, mixed again.
pub fn derive_game_seed(master: u64, round: u32, game: u32) -> u64 {
    fn splitmix64(x: u64) -> u64 {
        let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix64(splitmix64(master) ^ ((round as u64) << 32 | game as u64))
}

/// What the current holder does next.
enum Step {
    Deliver,
    Bypass,
    Drop,
    Fail(Outcome),
    Auction { budget: Money, fine: Money },
}

struct Game<'a> {
    config: &'a GameConfig,
    topo: &'a Topology,
    hops: HopCountTable,
    rng: ChaCha8Rng,
    packet: Packet,
    auctions: Vec<AuctionRecord>,
    chain: Vec<HopContract>,
}

impl Game<'_> {
    fn kind(&self, node: NodeId) -> StrategyKind {
        self.config.strategy_of(node)
    }

    fn bid_amount(&mut self, auction: &Auction, bidder: NodeId) -> Money {
        let rfb = auction.rfb();
        match self.kind(bidder) {
            StrategyKind::Tightness | StrategyKind::LowestBidChooser => {
                let a = tightness::analyze(&self.hops, rfb, auction.eligible(), bidder, &self.config.params);
                tightness::compute_bid(&a, rfb)
            }
            StrategyKind::GreedyZeroBudget => baselines::greedy_bid(rfb, &self.config.baselines),
            StrategyKind::RandomBidder => baselines::random_bid(rfb, &mut self.rng),
            // bypassing costs B0, so ask for as much as allowed
            StrategyKind::AlwaysBypass => rfb.budget,
        }
    }

    fn run_auction(&mut self, budget: Money, fine: Money) -> Result<HopContract, EngineError> {
        let auctioneer = self.packet.history.last().copied().unwrap_or(self.packet.source);
        let rfb = Rfb {
            packet: self.packet.id,
            auctioneer,
            destination: self.packet.destination,
            budget,
            fine,
            timeout: self.packet.timeout,
            hops_traversed: self.packet.hops,
        };
        let ctx = PacketContext {
            original_timeout: self.packet.timeout,
            forwarders: &self.packet.history,
            previous_fine: self.chain.last().map(|c| c.fine),
        };
        let window = self.config.auction_window;
        let mut auction = Auction::open(rfb, window, self.topo, &ctx)?;

        let mut schedule: Vec<(f64, NodeId)> = auction
            .eligible()
            .iter()
            .map(|&n| (tightness::bid_time(window, &self.config.params, &mut self.rng), n))
            .collect();
        schedule.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (submit_time, bidder) in schedule {
            let amount = self.bid_amount(&auction, bidder);
            auction.submit(Bid { bidder, amount, submit_time })?;
        }

        let winner = if auction.auctioneer_is_ap() {
            auction.ap_select_winner()?
        } else {
            match self.kind(auctioneer) {
                StrategyKind::Tightness => {
                    tightness::choose_winner(&auction, &self.hops, &self.config.params)?
                }
                _ => baselines::lowest_bid_choose(&auction)?,
            }
        };
        let contract = auction.close(winner)?;
        self.auctions.push(AuctionRecord {
            rfb: auction.rfb().clone(),
            eligible: auction.eligible().iter().copied().collect(),
            bids: auction.bids().to_vec(),
            winner,
        });
        self.chain.push(contract.clone());
        self.packet.hops += 1;
        self.packet.history.push(winner);
        Ok(contract)
    }

    /// Decision of `holder`, which just won `contract` in the last auction.
    fn next_step(&self, holder: NodeId, contract: &HopContract) -> Result<Step, EngineError> {
        let kind = self.kind(holder);
        if baselines::bypass_decision(kind) == HolderAction::Bypass {
            return Ok(Step::Bypass);
        }
        let won = &self.auctions.last().expect("holder won an auction").rfb;
        let drops = matches!(kind, StrategyKind::Tightness | StrategyKind::LowestBidChooser)
            && tightness::on_win(won) == WinAction::Drop;
        if drops {
            return Ok(Step::Drop);
        }
        let can_hop = hop_deadline_check(&self.packet);
        if can_hop && self.topo.are_adjacent(holder, self.packet.destination) {
            return Ok(Step::Deliver);
        }
        let has_bidders = !eligible_bidders(self.topo, holder, &self.packet.history)?.is_empty();
        if can_hop && has_bidders {
            let (budget, fine) = match kind {
                StrategyKind::Tightness | StrategyKind::LowestBidChooser => {
                    tightness::setup_auction(contract.price, &self.config.params)
                }
                StrategyKind::GreedyZeroBudget => baselines::greedy_setup(),
                StrategyKind::RandomBidder => baselines::random_setup(contract.price),
                StrategyKind::AlwaysBypass => unreachable!("handled above"),
            };
            // the announced fine may never exceed the fine we agreed to
            let fine = fine.min(contract.fine).min(budget);
            return Ok(Step::Auction { budget, fine });
        }
        let failure = if can_hop {
            Outcome::Stranded { node: holder }
        } else {
            Outcome::Timeout { node: holder }
        };
        let bypass = matches!(kind, StrategyKind::Tightness | StrategyKind::LowestBidChooser)
            && tightness::stranded_bypass(self.packet.budget, contract.fine, &self.config.params);
        Ok(if bypass { Step::Bypass } else { Step::Fail(failure) })
    }

    fn play(&mut self) -> Result<Outcome, EngineError> {
        let (mut budget, mut fine) = (self.packet.budget, self.packet.fine);
        loop {
            let contract = self.run_auction(budget, fine)?;
            let holder = contract.downstream;
            match self.next_step(holder, &contract)? {
                Step::Deliver => {
                    self.packet.hops += 1;
                    self.packet.history.push(self.packet.destination);
                    return Ok(Outcome::DeliveredAdHoc { node: holder });
                }
                Step::Bypass => return Ok(Outcome::DeliveredBackbone { node: holder }),
                Step::Drop => return Ok(Outcome::Dropped { node: holder }),
                Step::Fail(outcome) => return Ok(outcome),
                Step::Auction { budget: b, fine: f } => {
                    budget = b;
                    fine = f;
                }
            }
        }
    }
}

/// Plays one game. Game outcomes are data; errors mean bad configuration.
pub fn run_game(
    config: &GameConfig,
    topo: &Topology,
    round: u32,
    game: u32,
    game_seed: u64,
) -> Result<GameTrace, EngineError> {
    config.validate()?;
    config.check_against(topo)?;
    let mut rng = ChaCha8Rng::seed_from_u64(game_seed);
    let aps: Vec<NodeId> = topo.access_points().collect();
    let source = match config.packet.source {
        Some(s) => s,
        None => {
            let free: Vec<NodeId> = aps.iter().copied().filter(|&a| Some(a) != config.packet.destination).collect();
            free[rng.random_range(0..free.len())]
        }
    };
    let destination = match config.packet.destination {
        Some(d) => d,
        None => {
            let others: Vec<NodeId> = aps.iter().copied().filter(|&a| a != source).collect();
            others[rng.random_range(0..others.len())]
        }
    };

    let hops = HopCountTable::toward(topo, destination)?;
    let shortest = hops
        .get(source)
        .ok_or(TopologyError::Unreachable { from: source, dest: destination })?;
    let budget = config.packet.sample_budget(&mut rng);
    let fine = config.packet.fine_for(budget);
    let timeout = config.packet.timeout_for(shortest);
    if timeout == 0 {
        return Err(ConfigError::Invalid {
            field: "packet.timeout".into(),
            reason: "hop limit must be at least 1".into(),
        }
        .into());
    }
    let packet = Packet {
        id: PacketId(round as u64 * config.games_per_round as u64 + game as u64),
        source,
        destination,
        budget,
        fine,
        timeout,
        hops: 0,
        history: Vec::new(),
        status: PacketStatus::InFlight,
    };

    let mut g = Game { config, topo, hops, rng, packet, auctions: Vec::new(), chain: Vec::new() };
    let outcome = g.play()?;
    g.packet.status = if outcome.is_delivered() {
        PacketStatus::Delivered
    } else {
        PacketStatus::Failed
    };

    let mut ledger = Ledger::new(topo.nodes().map(|(id, _)| id));
    settle(&mut ledger, &g.packet, &g.chain, outcome)?;
    let transfers = ledger.transfers().to_vec();
    let deltas = touched_deltas(&ledger);
    Ok(GameTrace {
        round,
        game,
        seed: game_seed,
        packet: g.packet,
        auctions: g.auctions,
        chain: g.chain,
        outcome,
        transfers,
        deltas,
    })
}

/// Applies the payment rules for a finished game.
pub fn settle(
    ledger: &mut Ledger,
    packet: &Packet,
    chain: &[HopContract],
    outcome: Outcome,
) -> Result<(), LedgerError> {
    match outcome {
        Outcome::DeliveredAdHoc { .. } => ledger.settle_success(chain),
        Outcome::DeliveredBackbone { node } => {
            ledger.settle_success(chain)?;
            ledger.settle_bypass(node, packet.id, packet.budget)
        }
        _ => ledger.settle_failure(chain),
    }
}

fn touched_deltas(ledger: &Ledger) -> BTreeMap<Account, Money> {
    let mut deltas = BTreeMap::new();
    for t in ledger.transfers() {
        for acct in [t.payer, t.payee] {
            deltas.insert(acct, ledger.balance(acct).expect("recorded account"));
        }
    }
    deltas
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub strategy: Option<StrategyKind>,
    pub balance: Money,
    pub packets_won: u64,
    pub packets_dropped: u64,
    pub bypasses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub games: u64,
    pub delivered: u64,
    pub delivered_backbone: u64,
    pub delivery_ratio: f64,
    pub operator_balance: Money,
    pub nodes: BTreeMap<NodeId, NodeMetrics>,
    /// Games per final hop count.
    pub hop_histogram: BTreeMap<u32, u64>,
}

impl Metrics {
    pub fn from_traces(config: &GameConfig, topo: &Topology, traces: &[GameTrace]) -> Self {
        let mut nodes: BTreeMap<NodeId, NodeMetrics> = topo
            .nodes()
            .map(|(id, _)| {
                let strategy = topo.is_handheld(id).then(|| config.strategy_of(id));
                (id, NodeMetrics { strategy, ..Default::default() })
            })
            .collect();
        let mut operator_balance = Money::ZERO;
        let (mut delivered, mut delivered_backbone) = (0, 0);
        for t in traces {
            for c in &t.chain {
                nodes.entry(c.downstream).or_default().packets_won += 1;
            }
            match t.outcome {
                Outcome::DeliveredAdHoc { .. } => delivered += 1,
                Outcome::DeliveredBackbone { node } => {
                    delivered += 1;
                    delivered_backbone += 1;
                    nodes.entry(node).or_default().bypasses += 1;
                }
                Outcome::Dropped { node } => nodes.entry(node).or_default().packets_dropped += 1,
                _ => {}
            }
            for (acct, delta) in &t.deltas {
                match acct {
                    Account::Node(n) => nodes.entry(*n).or_default().balance += *delta,
                    Account::Operator => operator_balance += *delta,
                }
            }
        }
        let games = traces.len() as u64;
        Metrics {
            games,
            delivered,
            delivered_backbone,
            delivery_ratio: if games == 0 { 0.0 } else { delivered as f64 / games as f64 },
            operator_balance,
            nodes,
            hop_histogram: traces.iter().fold(BTreeMap::new(), |mut h, t| {
                *h.entry(t.packet.hops).or_default() += 1;
                h
            }),
        }
    }

    /// Handhelds ordered by balance, richest first (ties by id).
    pub fn top_balances(&self, n: usize) -> Vec<(NodeId, Money)> {
        let mut v: Vec<(NodeId, Money)> = self
            .nodes
            .iter()
            .filter(|(_, m)| m.strategy.is_some())
            .map(|(&id, m)| (id, m.balance))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(n);
        v
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub metrics: Metrics,
    pub traces: Vec<GameTrace>,
}

impl Experiment {
    /// All transfers in (round, game) order.
    pub fn transfers(&self) -> impl Iterator<Item = &Transfer> {
        self.traces.iter().flat_map(|t| t.transfers.iter())
    }
}

/// Runs `rounds × games_per_round` games. With `parallel`, games run on
/// the rayon pool; results are still reduced in (round, game) order.
pub fn run_experiment(
    config: &GameConfig,
    topo: &Topology,
    parallel: bool,
) -> Result<Experiment, EngineError> {
    config.validate()?;
    config.check_against(topo)?;
    let index: Vec<(u32, u32)> = (0..config.rounds)
        .flat_map(|r| (0..config.games_per_round).map(move |g| (r, g)))
        .collect();
    let play = |&(r, g): &(u32, u32)| run_game(config, topo, r, g, derive_game_seed(config.seed, r, g));
    let traces: Vec<GameTrace> = if parallel {
        index.par_iter().map(play).collect::<Result<_, _>>()?
    } else {
        index.iter().map(play).collect::<Result<_, _>>()?
    };
    let metrics = Metrics::from_traces(config, topo, &traces);
    Ok(Experiment { metrics, traces })
}
