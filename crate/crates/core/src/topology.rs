//! Backbone-plus-ad-hoc network graph.
//!
//! Nodes are either handhelds or backbone access points. Ad hoc paths may
//! only pass *through* handhelds, and never use an edge joining two access
//! points; the backbone is reached through the accounting bypass instead.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const TOPOLOGY_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Handheld,
    AccessPoint,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {from} cannot reach {dest} over the ad hoc network")]
    Unreachable { from: NodeId, dest: NodeId },
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("topology has no handhelds")]
    NoHandhelds,
    #[error("handheld subgraph not connected")]
    HandheldsDisconnected,
    #[error("access point {0} has no handheld neighbor")]
    NoHandheldNeighbor(NodeId),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported topology format version {0} (expected {TOPOLOGY_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no valid topology after {attempts} attempts; try a larger radius")]
    GenerationFailed { attempts: u32 },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Immutable network graph. Node and neighbor iteration order is by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    roles: BTreeMap<NodeId, Role>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Topology {
    /// Builds and validates a topology.
    pub fn new(
        nodes: impl IntoIterator<Item = (NodeId, Role)>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, TopologyError> {
        let mut roles = BTreeMap::new();
        let mut adjacency = BTreeMap::new();
        for (id, role) in nodes {
            if roles.insert(id, role).is_some() {
                return Err(TopologyError::DuplicateNode(id));
            }
            adjacency.insert(id, BTreeSet::new());
        }
        for (a, b) in edges {
            if !roles.contains_key(&a) {
                return Err(TopologyError::UnknownNode(a));
            }
            if !roles.contains_key(&b) {
                return Err(TopologyError::UnknownNode(b));
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            let fresh = adjacency.get_mut(&a).unwrap().insert(b);
            adjacency.get_mut(&b).unwrap().insert(a);
            if !fresh {
                return Err(TopologyError::DuplicateEdge(a.min(b), a.max(b)));
            }
        }
        let topo = Topology { roles, adjacency };
        topo.validate()?;
        Ok(topo)
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let handhelds: Vec<NodeId> = self.handhelds().collect();
        let Some(&first) = handhelds.first() else {
            return Err(TopologyError::NoHandhelds);
        };
        // BFS restricted to handhelds
        let mut seen = BTreeSet::from([first]);
        let mut queue = VecDeque::from([first]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[&u] {
                if self.roles[&v] == Role::Handheld && seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        if seen.len() != handhelds.len() {
            return Err(TopologyError::HandheldsDisconnected);
        }
        for ap in self.access_points() {
            if !self.adjacency[&ap].iter().any(|v| self.roles[v] == Role::Handheld) {
                return Err(TopologyError::NoHandheldNeighbor(ap));
            }
        }
        Ok(())
    }

    pub fn role(&self, id: NodeId) -> Result<Role, TopologyError> {
        self.roles.get(&id).copied().ok_or(TopologyError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.roles.contains_key(&id)
    }

    pub fn is_access_point(&self, id: NodeId) -> bool {
        self.roles.get(&id) == Some(&Role::AccessPoint)
    }

    pub fn is_handheld(&self, id: NodeId) -> bool {
        self.roles.get(&id) == Some(&Role::Handheld)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, Role)> + '_ {
        self.roles.iter().map(|(&id, &role)| (id, role))
    }

    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn handhelds(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|&(_, r)| r == Role::Handheld).map(|(id, _)| id)
    }

    pub fn access_points(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|&(_, r)| r == Role::AccessPoint).map(|(id, _)| id)
    }

    /// Exactly the adjacency set of `u`.
    pub fn neighbors(&self, u: NodeId) -> Result<&BTreeSet<NodeId>, TopologyError> {
        self.adjacency.get(&u).ok_or(TopologyError::UnknownNode(u))
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    /// Undirected edges as `(low, high)` pairs in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    /// Shortest ad hoc hop count from `from` to `dest`.
    pub fn hop_count(&self, from: NodeId, dest: NodeId) -> Result<u32, TopologyError> {
        self.role(from)?;
        let table = HopCountTable::toward(self, dest)?;
        table
            .get(from)
            .ok_or(TopologyError::Unreachable { from, dest })
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            version: TOPOLOGY_FORMAT_VERSION,
            nodes: self.nodes().map(|(id, role)| NodeEntry { id, role }).collect(),
            edges: self.edges().map(|(a, b)| [a, b]).collect(),
        }
    }

    pub fn from_file(file: TopologyFile) -> Result<Self, TopologyError> {
        if file.version != TOPOLOGY_FORMAT_VERSION {
            return Err(TopologyError::UnsupportedVersion(file.version));
        }
        Topology::new(
            file.nodes.into_iter().map(|n| (n.id, n.role)),
            file.edges.into_iter().map(|[a, b]| (a, b)),
        )
    }

    pub fn parse_str(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile = toml::from_str(text).map_err(|e| TopologyError::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        Topology::from_file(file)
    }

    pub fn to_toml_string(&self) -> String {
        render_topology_file(&self.to_file())
    }

    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| TopologyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Topology::parse_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), TopologyError> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| TopologyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// 1-based line number of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].matches('\n').count() + 1
}

/// On-disk topology document.
///
/// ```toml
/// version = 1
/// nodes = [
///   { id = 0, role = "access_point" },
///   { id = 2, role = "handheld" },
/// ]
/// edges = [[0, 2]]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub version: u32,
    pub nodes: Vec<NodeEntry>,
    #[serde(default)]
    pub edges: Vec<[NodeId; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: NodeId,
    pub role: Role,
}

// Hand-rendered so the file stays one node/edge per line.
fn render_topology_file(file: &TopologyFile) -> String {
    let mut out = format!("version = {}\nnodes = [\n", file.version);
    for n in &file.nodes {
        let role = match n.role {
            Role::Handheld => "handheld",
            Role::AccessPoint => "access_point",
        };
        out.push_str(&format!("  {{ id = {}, role = \"{role}\" }},\n", n.id));
    }
    out.push_str("]\nedges = [\n");
    for [a, b] in &file.edges {
        out.push_str(&format!("  [{a}, {b}],\n"));
    }
    out.push_str("]\n");
    out
}

/// Shortest ad hoc hop counts from every node to one destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopCountTable {
    dest: NodeId,
    hops: BTreeMap<NodeId, u32>,
}

impl HopCountTable {
    /// Breadth-first search outward from `dest`. Access points other than
    /// `dest` are recorded as path endpoints but never expanded.
    pub fn toward(topo: &Topology, dest: NodeId) -> Result<Self, TopologyError> {
        let dest_role = topo.role(dest)?;
        let mut hops = BTreeMap::from([(dest, 0u32)]);
        let mut queue = VecDeque::from([dest]);
        while let Some(u) = queue.pop_front() {
            let d = hops[&u];
            let u_role = if u == dest { dest_role } else { Role::Handheld };
            for &v in &topo.adjacency[&u] {
                let v_role = topo.roles[&v];
                if u_role == Role::AccessPoint && v_role == Role::AccessPoint {
                    continue;
                }
                if hops.contains_key(&v) {
                    continue;
                }
                hops.insert(v, d + 1);
                if v_role == Role::Handheld {
                    queue.push_back(v);
                }
            }
        }
        Ok(HopCountTable { dest, hops })
    }

    pub fn destination(&self) -> NodeId {
        self.dest
    }

    pub fn get(&self, node: NodeId) -> Option<u32> {
        self.hops.get(&node).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricParams {
    pub handhelds: u32,
    pub access_points: u32,
    pub radius: f64,
    pub seed: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
}

fn default_max_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

/// Random geometric graph in the unit square. Access points get ids
/// `0..access_points`, handhelds follow. Resamples positions until the
/// topology invariants hold.
pub fn generate_geometric(params: &GeometricParams) -> Result<Topology, TopologyError> {
    if params.handhelds < 1 {
        return Err(TopologyError::InvalidParams("need at least one handheld".into()));
    }
    if params.access_points < 2 {
        return Err(TopologyError::InvalidParams("need at least two access points".into()));
    }
    if !(params.radius > 0.0 && params.radius.is_finite()) {
        return Err(TopologyError::InvalidParams("radius must be positive".into()));
    }
    if params.max_attempts == 0 {
        return Err(TopologyError::InvalidParams("max_attempts must be positive".into()));
    }
    let n = params.access_points + params.handhelds;
    let role_of = |i: u32| {
        if i < params.access_points {
            Role::AccessPoint
        } else {
            Role::Handheld
        }
    };
    let r2 = params.radius * params.radius;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..params.max_attempts {
        let pos: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (dx, dy) = (pos[i as usize].0 - pos[j as usize].0, pos[i as usize].1 - pos[j as usize].1);
                if dx * dx + dy * dy <= r2 {
                    edges.push((NodeId(i), NodeId(j)));
                }
            }
        }
        match Topology::new((0..n).map(|i| (NodeId(i), role_of(i))), edges) {
            Ok(topo) => return Ok(topo),
            Err(TopologyError::HandheldsDisconnected | TopologyError::NoHandheldNeighbor(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Err(TopologyError::GenerationFailed { attempts: params.max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ap(i: u32) -> (NodeId, Role) {
        (NodeId(i), Role::AccessPoint)
    }
    fn hh(i: u32) -> (NodeId, Role) {
        (NodeId(i), Role::Handheld)
    }
    fn e(a: u32, b: u32) -> (NodeId, NodeId) {
        (NodeId(a), NodeId(b))
    }

    /// AP0 - 2 - 3 - 4 - AP1
    fn line() -> Topology {
        Topology::new(
            [ap(0), ap(1), hh(2), hh(3), hh(4)],
            [e(0, 2), e(2, 3), e(3, 4), e(4, 1)],
        )
        .unwrap()
    }

    #[test]
    fn hop_count_identity_is_zero() {
        let t = line();
        assert_eq!(t.hop_count(NodeId(3), NodeId(3)).unwrap(), 0);
        assert_eq!(t.hop_count(NodeId(1), NodeId(1)).unwrap(), 0);
    }

    #[test]
    fn hop_count_on_line() {
        let t = line();
        assert_eq!(t.hop_count(NodeId(2), NodeId(1)).unwrap(), 3);
        assert_eq!(t.hop_count(NodeId(0), NodeId(1)).unwrap(), 4);
    }

    #[test]
    fn non_destination_aps_are_not_transit() {
        // 2 - AP0 - 3 would be a shortcut; handheld path 2-4-3 must be used.
        let t = Topology::new(
            [ap(0), ap(1), hh(2), hh(3), hh(4)],
            [e(0, 2), e(0, 3), e(2, 4), e(4, 3), e(3, 1)],
        )
        .unwrap();
        assert_eq!(t.hop_count(NodeId(2), NodeId(1)).unwrap(), 3);
    }

    #[test]
    fn ap_to_ap_edge_is_never_used() {
        let t = Topology::new(
            [ap(0), ap(1), hh(2)],
            [e(0, 1), e(0, 2), e(1, 2)],
        )
        .unwrap();
        assert_eq!(t.hop_count(NodeId(0), NodeId(1)).unwrap(), 2);
    }

    #[test]
    fn unknown_node_is_an_error() {
        let t = line();
        assert_eq!(t.hop_count(NodeId(9), NodeId(1)), Err(TopologyError::UnknownNode(NodeId(9))));
        assert_eq!(t.hop_count(NodeId(2), NodeId(9)), Err(TopologyError::UnknownNode(NodeId(9))));
        assert!(t.neighbors(NodeId(9)).is_err());
    }

    #[test]
    fn single_ap_neighbor_is_singleton() {
        let t = line();
        assert_eq!(t.neighbors(NodeId(0)).unwrap(), &BTreeSet::from([NodeId(2)]));
    }

    #[test]
    fn complete_graph_neighbors() {
        let t = Topology::new(
            [hh(0), hh(1), hh(2), hh(3)],
            [e(0, 1), e(0, 2), e(0, 3), e(1, 2), e(1, 3), e(2, 3)],
        )
        .unwrap();
        for u in 0..4 {
            let ns = t.neighbors(NodeId(u)).unwrap();
            assert_eq!(ns.len(), 3);
            assert!(!ns.contains(&NodeId(u)));
        }
    }

    #[test]
    fn construction_rejects_bad_graphs() {
        assert_eq!(
            Topology::new([hh(0), hh(0)], []),
            Err(TopologyError::DuplicateNode(NodeId(0)))
        );
        assert_eq!(Topology::new([hh(0)], [e(0, 0)]), Err(TopologyError::SelfLoop(NodeId(0))));
        assert_eq!(
            Topology::new([hh(0), hh(1)], [e(0, 1), e(1, 0)]),
            Err(TopologyError::DuplicateEdge(NodeId(0), NodeId(1)))
        );
        assert_eq!(
            Topology::new([ap(0), hh(1), hh(2)], [e(0, 1)]),
            Err(TopologyError::HandheldsDisconnected)
        );
        assert_eq!(
            Topology::new([ap(0), ap(1), hh(2)], [e(0, 2)]),
            Err(TopologyError::NoHandheldNeighbor(NodeId(1)))
        );
        assert_eq!(Topology::new([ap(0)], []), Err(TopologyError::NoHandhelds));
    }

    #[test]
    fn minimal_file_loads() {
        let text = r#"
version = 1
nodes = [
  { id = 0, role = "access_point" },
  { id = 1, role = "access_point" },
  { id = 2, role = "handheld" },
]
edges = [[0, 2], [2, 1]]
"#;
        let t = Topology::parse_str(text).unwrap();
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.edges().count(), 2);
    }

    #[test]
    fn file_errors_carry_line_or_invariant() {
        let partitioned = r#"
version = 1
nodes = [
  { id = 0, role = "access_point" },
  { id = 1, role = "access_point" },
  { id = 2, role = "handheld" },
  { id = 3, role = "handheld" },
]
edges = [[0, 2], [3, 1]]
"#;
        let err = Topology::parse_str(partitioned).unwrap_err();
        assert_eq!(err.to_string(), "handheld subgraph not connected");

        let lonely_ap = r#"
version = 1
nodes = [
  { id = 0, role = "access_point" },
  { id = 7, role = "access_point" },
  { id = 2, role = "handheld" },
]
edges = [[0, 2]]
"#;
        let err = Topology::parse_str(lonely_ap).unwrap_err();
        assert_eq!(err, TopologyError::NoHandheldNeighbor(NodeId(7)));
        assert!(err.to_string().contains('7'));

        let broken = "version = 1\nnodes = [\n  { id = 0, role = \"router\" },\n]\n";
        match Topology::parse_str(broken).unwrap_err() {
            TopologyError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let future = "version = 2\nnodes = []\n";
        assert_eq!(Topology::parse_str(future), Err(TopologyError::UnsupportedVersion(2)));
    }

    #[test]
    fn file_roundtrip_is_lossless() {
        let t = line();
        let text = t.to_toml_string();
        let back = Topology::parse_str(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn generator_small_radius_covers_square() {
        let t = generate_geometric(&GeometricParams {
            handhelds: 1,
            access_points: 2,
            radius: 2.0,
            seed: 3,
            max_attempts: 1,
        })
        .unwrap();
        let h = t.handhelds().next().unwrap();
        for a in t.access_points() {
            assert!(t.are_adjacent(a, h));
        }
    }

    #[test]
    fn generator_rejects_bad_params_and_gives_up() {
        let base = GeometricParams { handhelds: 5, access_points: 2, radius: 0.3, seed: 1, max_attempts: 10 };
        assert!(matches!(
            generate_geometric(&GeometricParams { access_points: 1, ..base }),
            Err(TopologyError::InvalidParams(_))
        ));
        assert!(matches!(
            generate_geometric(&GeometricParams { radius: 0.0, ..base }),
            Err(TopologyError::InvalidParams(_))
        ));
        let err = generate_geometric(&GeometricParams { handhelds: 30, radius: 0.001, ..base }).unwrap_err();
        assert_eq!(err, TopologyError::GenerationFailed { attempts: 10 });
        assert!(err.to_string().contains("larger radius"));
    }
}
