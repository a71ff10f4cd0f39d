//! Simulator for auction-based packet forwarding among handhelds that
//! offload traffic from a WiFi backbone.
//!
//! Packets enter at a source access point and hop across handhelds toward
//! a destination access point. Every hop is bought in an open auction;
//! each contract carries a price paid on delivery and a fine paid upstream
//! if the packet fails. A holder may always bypass the ad hoc network and
//! pay the operator the original budget.

pub mod accounting;
pub mod auction;
pub mod audit;
pub mod baselines;
pub mod config;
pub mod engine;
pub mod money;
pub mod report;
pub mod tightness;
pub mod topology;

pub use accounting::{Account, Ledger, Transfer, TransferReason};
pub use auction::{Auction, Bid, HopContract, PacketId, Rfb};
pub use baselines::StrategyKind;
pub use config::{load_scenario, GameConfig};
pub use engine::{run_experiment, run_game, Experiment, GameTrace, Metrics, Outcome};
pub use money::{Fraction, Money};
pub use tightness::StrategyParams;
pub use topology::{NodeId, Role, Topology};
