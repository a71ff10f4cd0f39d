#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use offload_sim::accounting::{Account, Transfer, TransferReason};
use offload_sim::audit::Rule;
use offload_sim::baselines::{GreedyFloor, StrategyKind};
use offload_sim::config::{BudgetDist, FineDist, GameConfig, TimeoutDist};
use offload_sim::engine::{run_experiment, GameTrace};
use offload_sim::money::{Fraction, Money};
use offload_sim::topology::{generate_geometric, GeometricParams, NodeId, Role, Topology};

pub fn base_config() -> GameConfig {
    GameConfig::parse_str("version = 1\n[topology]\nfile = \"external.toml\"\n").unwrap()
}

/// AP0 - 2 - 3 - ... - AP1
pub fn line(handhelds: u32) -> Topology {
    let nodes = [(NodeId(0), Role::AccessPoint), (NodeId(1), Role::AccessPoint)]
        .into_iter()
        .chain((0..handhelds).map(|i| (NodeId(2 + i), Role::Handheld)));
    let mut path = vec![NodeId(0)];
    path.extend((0..handhelds).map(|i| NodeId(2 + i)));
    path.push(NodeId(1));
    Topology::new(nodes, path.windows(2).map(|w| (w[0], w[1]))).unwrap()
}

/// Any graph on `n` nodes that passes topology validation.
pub fn random_topology(rng: &mut ChaCha8Rng, max_nodes: u32) -> Topology {
    loop {
        let n = rng.random_range(2..=max_nodes);
        let p = rng.random_range(0.2..0.9);
        let roles: Vec<Role> = (0..n)
            .map(|_| if rng.random_bool(0.35) { Role::AccessPoint } else { Role::Handheld })
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(p) {
                    edges.push((NodeId(i), NodeId(j)));
                }
            }
        }
        let nodes = (0..n).map(|i| (NodeId(i), roles[i as usize]));
        if let Ok(t) = Topology::new(nodes, edges) {
            return t;
        }
    }
}

/// Exhaustive simple-path search: interior nodes must be handhelds and
/// edges between two access points never count.
pub fn oracle_hop_count(topo: &Topology, from: NodeId, dest: NodeId) -> Option<u32> {
    fn walk(topo: &Topology, u: NodeId, dest: NodeId, seen: &mut BTreeSet<NodeId>, len: u32, best: &mut Option<u32>) {
        if u == dest {
            *best = Some(best.map_or(len, |b| b.min(len)));
            return;
        }
        for &v in topo.neighbors(u).unwrap() {
            if seen.contains(&v) {
                continue;
            }
            if topo.is_access_point(u) && topo.is_access_point(v) {
                continue;
            }
            if v != dest && !topo.is_handheld(v) {
                continue;
            }
            seen.insert(v);
            walk(topo, v, dest, seen, len + 1, best);
            seen.remove(&v);
        }
    }
    let mut best = None;
    let mut seen = BTreeSet::from([from]);
    walk(topo, from, dest, &mut seen, 0, &mut best);
    best
}

fn random_kind(rng: &mut ChaCha8Rng) -> StrategyKind {
    let i = rng.random_range(0..StrategyKind::ALL.len() + 3);
    *StrategyKind::ALL.get(i).unwrap_or(&StrategyKind::Tightness)
}

/// Random scenario: topology, strategy mix, packet terms and parameters.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> (GameConfig, Topology) {
    let topo = generate_geometric(&GeometricParams {
        handhelds: rng.random_range(2..=10),
        access_points: rng.random_range(2..=4),
        radius: rng.random_range(0.3..0.8),
        seed: rng.random(),
        max_attempts: 10_000,
    })
    .unwrap();
    let mut c = base_config();
    c.seed = rng.random();
    c.auction_window = rng.random_range(0.5..5.0);
    c.strategies.default = random_kind(rng);
    for h in topo.handhelds() {
        if rng.random_bool(0.3) {
            c.strategies.nodes.insert(h.0.to_string(), random_kind(rng));
        }
    }
    let lo = rng.random_range(0..150_000);
    c.packet.budget = if rng.random_bool(0.5) {
        BudgetDist::Constant(Money::from_millis(lo))
    } else {
        BudgetDist::Uniform([Money::from_millis(lo), Money::from_millis(lo + rng.random_range(0..100_000))])
    };
    c.packet.fine = FineDist::Fraction(Fraction::from_ppm(rng.random_range(0..=1_000_000)));
    c.packet.timeout = if rng.random_bool(0.3) {
        TimeoutDist::Constant(rng.random_range(1..=8))
    } else {
        TimeoutDist::ShortestPlus(rng.random_range(0..=3))
    };
    c.params.budget_fraction = Fraction::from_ppm(rng.random_range(1..=1_000_000));
    c.params.fine_fraction = Fraction::from_ppm(rng.random_range(1..=1_000_000));
    c.params.k1 = rng.random_range(0.5..3.0);
    c.params.k2 = c.params.k1 + rng.random_range(0.1..3.0);
    c.params.stranded_exposure_factor = rng.random_range(0.0..2.0);
    if rng.random_bool(0.5) {
        c.baselines.greedy_floor = GreedyFloor::Zero;
    }
    (c, topo)
}

pub struct Fuzzed {
    pub topo: Topology,
    pub window: f64,
    pub trace: GameTrace,
}

/// `scenarios * games` traces from random scenarios.
pub fn fuzz_traces(seed: u64, scenarios: usize, games: u32) -> Vec<Fuzzed> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..scenarios {
        let (mut c, topo) = random_scenario(&mut rng);
        c.games_per_round = games;
        let exp = run_experiment(&c, &topo, false).unwrap();
        for trace in exp.traces {
            out.push(Fuzzed { topo: topo.clone(), window: c.auction_window, trace });
        }
    }
    out
}

pub type Mutator = fn(&Topology, &GameTrace) -> Option<GameTrace>;

/// Injected rule breaks and the rule each one must trip. A mutator
/// returns `None` when the trace has no room for that break.
pub fn mutations() -> Vec<(&'static str, Rule, Mutator)> {
    vec![
        ("raise a downstream fine", Rule::FineMonotonicity, |_, t| {
            (t.chain.len() >= 2).then(|| {
                let mut t = t.clone();
                let f = t.chain[0].fine + Money::from_millis(1);
                t.auctions[1].rfb.fine = f;
                t.chain[1].fine = f;
                t
            })
        }),
        ("double-pay a contract", Rule::Conservation, |_, t| {
            let i = t.transfers.iter().position(|x| x.reason == TransferReason::SuccessPayment && !x.amount.is_zero())?;
            let mut t = t.clone();
            let dup = t.transfers[i].clone();
            t.transfers.insert(i, dup);
            Some(t)
        }),
        ("skip a mandatory bid", Rule::MandatoryBids, |_, t| {
            let k = t.auctions.iter().position(|a| a.bids.len() > 1)?;
            let mut t = t.clone();
            let a = &mut t.auctions[k];
            let loser = a.bids.iter().position(|b| b.bidder != a.winner)?;
            a.bids.remove(loser);
            Some(t)
        }),
        ("revisit a node", Rule::LoopPrevention, |_, t| {
            (t.packet.history.len() >= 2).then(|| {
                let mut t = t.clone();
                t.packet.history[1] = t.packet.history[0];
                t
            })
        }),
        ("deliver after the deadline", Rule::HopDeadline, |_, t| {
            (t.outcome.is_delivered() && t.packet.hops >= 2).then(|| {
                let mut t = t.clone();
                let limit = t.packet.hops - 1;
                t.packet.timeout = limit;
                for a in &mut t.auctions {
                    a.rfb.timeout = limit;
                }
                t
            })
        }),
        ("bid above the budget", Rule::BidWithinBudget, |_, t| {
            let mut t = t.clone();
            let a = &mut t.auctions[0];
            a.bids[0].amount = a.rfb.budget + Money::from_millis(1);
            Some(t)
        }),
        ("extend the timeout mid-route", Rule::Timeout, |_, t| {
            let mut t = t.clone();
            let last = t.auctions.len() - 1;
            t.auctions[last].rfb.timeout += 1;
            Some(t)
        }),
        ("bid after the window closed", Rule::BidWindow, |_, t| {
            let mut t = t.clone();
            let a = &mut t.auctions[0];
            a.bids[0].submit_time += 10.0 * 3600.0;
            Some(t)
        }),
        ("access point skips the lowest bid", Rule::LowestBidAtAccessPoint, |_, t| {
            let a = &t.auctions[0];
            let lowest = a.bids.iter().map(|b| b.amount).min()?;
            let other = a.bids.iter().find(|b| b.amount > lowest)?.bidder;
            let mut t = t.clone();
            t.auctions[0].winner = other;
            Some(t)
        }),
        ("pay a different amount", Rule::Settlement, |_, t| {
            let mut t = t.clone();
            let extra = Transfer {
                packet_id: t.packet.id,
                reason: TransferReason::Fine,
                payer: Account::Node(t.chain[0].downstream),
                payee: Account::Node(t.chain[0].upstream),
                amount: Money::from_millis(1),
            };
            *t.deltas.entry(extra.payer).or_default() -= extra.amount;
            *t.deltas.entry(extra.payee).or_default() += extra.amount;
            t.transfers.push(extra);
            Some(t)
        }),
        ("invent an eligible neighbor", Rule::Eligibility, |topo, t| {
            let a = &t.auctions[0];
            let outsider = topo.handhelds().find(|h| !topo.are_adjacent(*h, a.rfb.auctioneer))?;
            let mut t = t.clone();
            t.auctions[0].eligible.push(outsider);
            Some(t)
        }),
    ]
}
