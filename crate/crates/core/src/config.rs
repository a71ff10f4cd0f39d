//! Scenario configuration file (TOML, versioned).
//!
//! ```toml
//! version = 1
//! rounds = 2
//! games_per_round = 50
//! seed = 42
//! auction_window = 3.0
//!
//! [topology.generate]
//! handhelds = 8
//! access_points = 2
//! radius = 0.5
//!
//! [packet]
//! budget = { uniform = [50, 200] }
//! fine = { fraction = 0.4 }
//! timeout = { shortest_plus = 2 }
//!
//! [strategies]
//! default = "tightness"
//! nodes = { "3" = "greedy_zero_budget" }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::DEFAULT_WINDOW;
use crate::baselines::{BaselineParams, StrategyKind};
use crate::money::{Fraction, Money};
use crate::tightness::{ParamsError, StrategyParams};
use crate::topology::{
    generate_geometric, GeometricParams, NodeId, Topology, TopologyError, DEFAULT_MAX_ATTEMPTS,
};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub version: u32,
    pub topology: TopologySource,
    #[serde(default)]
    pub packet: PacketConfig,
    #[serde(default)]
    pub strategies: StrategyAssignment,
    #[serde(default)]
    pub params: StrategyParams,
    #[serde(default)]
    pub baselines: BaselineParams,
    #[serde(default = "default_window")]
    pub auction_window: f64,
    #[serde(default = "one")]
    pub rounds: u32,
    #[serde(default = "one")]
    pub games_per_round: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySource {
    /// Topology file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub handhelds: u32,
    pub access_points: u32,
    pub radius: f64,
    /// Defaults to the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetDist {
    Constant(Money),
    Uniform([Money; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineDist {
    /// Fixed share of the drawn budget.
    Fraction(Fraction),
    Constant(Money),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutDist {
    Constant(u32),
    /// Source-to-destination shortest hop count plus slack.
    ShortestPlus(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketConfig {
    pub budget: BudgetDist,
    pub fine: FineDist,
    pub timeout: TimeoutDist,
    /// Fixed source access point; drawn per game when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub destination: Option<NodeId>,
}

impl Default for PacketConfig {
    fn default() -> Self {
        PacketConfig {
            budget: BudgetDist::Uniform([Money::from_units(50), Money::from_units(200)]),
            fine: FineDist::Fraction(Fraction::from_ppm(400_000)),
            timeout: TimeoutDist::ShortestPlus(2),
            source: None,
            destination: None,
        }
    }
}

impl PacketConfig {
    pub fn sample_budget<R: Rng + ?Sized>(&self, rng: &mut R) -> Money {
        match &self.budget {
            BudgetDist::Constant(b) => *b,
            BudgetDist::Uniform([lo, hi]) => {
                Money::from_millis(rng.random_range(lo.millis()..=hi.millis()))
            }
        }
    }

    pub fn fine_for(&self, budget: Money) -> Money {
        match &self.fine {
            FineDist::Fraction(f) => budget.scale(*f),
            FineDist::Constant(f) => *f,
        }
    }

    pub fn timeout_for(&self, shortest: u32) -> u32 {
        match self.timeout {
            TimeoutDist::Constant(h) => h,
            TimeoutDist::ShortestPlus(slack) => shortest + slack,
        }
    }

    fn min_budget(&self) -> Money {
        match &self.budget {
            BudgetDist::Constant(b) => *b,
            BudgetDist::Uniform([lo, _]) => *lo,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyAssignment {
    pub default: StrategyKind,
    /// Per-node overrides keyed by node id.
    pub nodes: BTreeMap<String, StrategyKind>,
}

impl GameConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Checks everything that does not need the topology.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_FORMAT_VERSION {
            return Err(invalid("version", format!("unsupported version {}", self.version)));
        }
        match (&self.topology.file, &self.topology.generate) {
            (Some(_), Some(_)) => return Err(invalid("topology", "give either file or generate, not both")),
            (None, None) => return Err(invalid("topology", "missing file or generate")),
            (None, Some(g)) => {
                if g.handhelds < 1 {
                    return Err(invalid("topology.generate.handhelds", "must be at least 1"));
                }
                if g.access_points < 2 {
                    return Err(invalid("topology.generate.access_points", "must be at least 2"));
                }
                if !(g.radius > 0.0 && g.radius.is_finite()) {
                    return Err(invalid("topology.generate.radius", "must be positive"));
                }
            }
            (Some(_), None) => {}
        }
        if !(self.auction_window > 0.0 && self.auction_window.is_finite()) {
            return Err(invalid("auction_window", "must be positive"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if self.games_per_round == 0 {
            return Err(invalid("games_per_round", "must be at least 1"));
        }
        match &self.packet.budget {
            BudgetDist::Constant(b) if b.is_negative() => {
                return Err(invalid("packet.budget", "must be non-negative"))
            }
            BudgetDist::Uniform([lo, hi]) if lo.is_negative() || lo > hi => {
                return Err(invalid("packet.budget", "uniform range must satisfy 0 <= lo <= hi"))
            }
            _ => {}
        }
        match &self.packet.fine {
            FineDist::Fraction(f) if f.ppm() < 0 || *f > Fraction::ONE => {
                return Err(invalid(
                    "packet.fine",
                    "fine must be smaller or equal to the budget (fraction in [0, 1])",
                ))
            }
            FineDist::Constant(f) if f.is_negative() => {
                return Err(invalid("packet.fine", "must be non-negative"))
            }
            FineDist::Constant(f) if *f > self.packet.min_budget() => {
                return Err(invalid(
                    "packet.fine",
                    format!(
                        "fine must be smaller or equal to the budget ({f} > {})",
                        self.packet.min_budget()
                    ),
                ))
            }
            _ => {}
        }
        if self.packet.source.is_some() && self.packet.source == self.packet.destination {
            return Err(invalid("packet.destination", "must differ from packet.source"));
        }
        if self.packet.timeout == TimeoutDist::Constant(0) {
            return Err(invalid("packet.timeout", "hop limit must be at least 1"));
        }
        self.params
            .validate()
            .map_err(|ParamsError::Invalid { field, reason }| invalid(format!("params.{field}"), reason))?;
        for key in self.strategies.nodes.keys() {
            key.parse::<u32>()
                .map_err(|_| invalid(format!("strategies.nodes.{key}"), "node id must be an integer"))?;
        }
        Ok(())
    }

    pub fn strategy_of(&self, node: NodeId) -> StrategyKind {
        self.strategies
            .nodes
            .get(&node.0.to_string())
            .copied()
            .unwrap_or(self.strategies.default)
    }

    /// Builds (or loads) the topology and checks node-level settings.
    /// Relative topology paths resolve against `base_dir`.
    pub fn resolve_topology(&self, base_dir: &Path) -> Result<Topology, ConfigError> {
        self.validate()?;
        let topo = match (&self.topology.file, &self.topology.generate) {
            (Some(file), _) => Topology::load(&base_dir.join(file))?,
            (None, Some(g)) => generate_geometric(&GeometricParams {
                handhelds: g.handhelds,
                access_points: g.access_points,
                radius: g.radius,
                seed: g.seed.unwrap_or(self.seed),
                max_attempts: g.max_attempts,
            })?,
            (None, None) => unreachable!("validated"),
        };
        self.check_against(&topo)?;
        Ok(topo)
    }

    pub fn check_against(&self, topo: &Topology) -> Result<(), ConfigError> {
        if topo.access_points().count() < 2 {
            return Err(invalid("topology", "needs at least two access points"));
        }
        for (field, node) in [("packet.source", self.packet.source), ("packet.destination", self.packet.destination)] {
            if let Some(n) = node {
                if !topo.is_access_point(n) {
                    return Err(invalid(field, format!("{n} is not an access point")));
                }
            }
        }
        for key in self.strategies.nodes.keys() {
            let id = NodeId(key.parse().map_err(|_| invalid(format!("strategies.nodes.{key}"), "bad id"))?);
            if !topo.is_handheld(id) {
                return Err(invalid(format!("strategies.nodes.{key}"), "not a handheld in the topology"));
            }
        }
        Ok(())
    }
}

/// Loads a config and its topology from disk.
pub fn load_scenario(path: &Path) -> Result<(GameConfig, Topology), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let config = GameConfig::parse_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let topo = config.resolve_topology(base)?;
    Ok((config, topo))
}
