//! Environment graphs: the physical world the team moves through.
//!
//! An [`EnvGraph`] is a connected, undirected, edge-weighted graph plus the
//! support structure that makes some edges *risky*: an edge with at least one
//! support record can be traversed at its reduced cost whenever a teammate is
//! simultaneously taking the support action on one of its support nodes.
//!
//! Graphs arrive from three places: hand construction ([`EnvGraph::new`]),
//! seeded random generation by density class ([`generate`]), and JSON files
//! ([`load`]/[`save`]). All three enforce the same invariants; an `EnvGraph`
//! value is always valid.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Index of a node in an [`EnvGraph`]; valid ids are `0..num_nodes`.
pub type NodeId = usize;

/// Default extra cost of taking the support action for one step.
pub const DEFAULT_SUPPORT_ACTION_COST: f64 = 0.2;

/// An undirected edge with its unsupported traversal cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    #[serde(rename = "cost")]
    pub nominal_cost: f64,
}

/// A support record: standing at `supporter` and taking the support action
/// lets a teammate cross edge `(u, v)` at `reduced_cost` instead of the
/// edge's nominal cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Support {
    pub supporter: NodeId,
    pub u: NodeId,
    pub v: NodeId,
    pub reduced_cost: f64,
}

/// Qualitative connectivity classes used by the random generator.
///
/// With `M = n(n-1)/2` possible edges, the target edge counts are:
/// sparse `⌈1.2(n-1)⌉` (capped at `M`), moderate `⌈0.4M⌉` (at least a
/// spanning tree), dense `⌈0.7M⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityClass {
    Sparse,
    Moderate,
    Dense,
}

impl DensityClass {
    pub const ALL: [DensityClass; 3] = [
        DensityClass::Sparse,
        DensityClass::Moderate,
        DensityClass::Dense,
    ];

    /// Number of edges a generated `num_nodes`-node graph of this class has.
    pub fn target_edges(self, num_nodes: usize) -> usize {
        let n = num_nodes;
        let max_edges = n * (n - 1) / 2;
        match self {
            DensityClass::Sparse => ((12 * (n - 1)).div_ceil(10)).min(max_edges),
            DensityClass::Moderate => ((4 * max_edges).div_ceil(10)).max(n - 1),
            DensityClass::Dense => (7 * max_edges).div_ceil(10),
        }
    }

    /// A dense graph must hold more edges than a spanning tree; for
    /// `num_nodes = 2` that is impossible (one placeable edge).
    pub fn feasible_for(self, num_nodes: usize) -> bool {
        if num_nodes < 2 {
            return false;
        }
        match self {
            DensityClass::Sparse | DensityClass::Moderate => true,
            DensityClass::Dense => self.target_edges(num_nodes) > num_nodes - 1,
        }
    }
}

impl fmt::Display for DensityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DensityClass::Sparse => "sparse",
            DensityClass::Moderate => "moderate",
            DensityClass::Dense => "dense",
        };
        f.write_str(name)
    }
}

impl FromStr for DensityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sparse" => Ok(DensityClass::Sparse),
            "moderate" => Ok(DensityClass::Moderate),
            "dense" => Ok(DensityClass::Dense),
            other => Err(format!("unknown density class `{other}`")),
        }
    }
}

/// One broken invariant found by [`RawGraph::validate`].
///
/// Violations are data, not faults: validation reports all of them at once.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveNodeCount,
    EdgeEndpointOutOfRange { u: NodeId, v: NodeId },
    SelfLoop { node: NodeId },
    DuplicateEdge { u: NodeId, v: NodeId },
    NegativeEdgeCost { u: NodeId, v: NodeId, cost: f64 },
    Disconnected { unreachable: NodeId },
    SupportReferencesMissingEdge { supporter: NodeId, u: NodeId, v: NodeId },
    SupporterOutOfRange { supporter: NodeId },
    NegativeReducedCost { supporter: NodeId, u: NodeId, v: NodeId },
    ReducedCostNotBelowNominal { u: NodeId, v: NodeId, reduced: f64, nominal: f64 },
    NegativeSupportActionCost { cost: f64 },
    StartOutOfRange { node: NodeId },
    GoalOutOfRange { node: NodeId },
    EmptyStarts,
    EmptyGoals,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveNodeCount => write!(f, "num_nodes must be positive"),
            Violation::EdgeEndpointOutOfRange { u, v } => {
                write!(f, "edge ({u},{v}) references a node id out of range")
            }
            Violation::SelfLoop { node } => write!(f, "self-loop edge at node {node}"),
            Violation::DuplicateEdge { u, v } => write!(f, "duplicate edge ({u},{v})"),
            Violation::NegativeEdgeCost { u, v, cost } => {
                write!(f, "edge ({u},{v}) has negative cost {cost}")
            }
            Violation::Disconnected { unreachable } => {
                write!(f, "graph is not connected: node {unreachable} unreachable from node 0")
            }
            Violation::SupportReferencesMissingEdge { supporter, u, v } => {
                write!(f, "support from {supporter} references missing edge ({u},{v})")
            }
            Violation::SupporterOutOfRange { supporter } => {
                write!(f, "supporter id {supporter} out of range")
            }
            Violation::NegativeReducedCost { supporter, u, v } => {
                write!(f, "support from {supporter} on ({u},{v}) has negative reduced cost")
            }
            Violation::ReducedCostNotBelowNominal { u, v, reduced, nominal } => {
                write!(
                    f,
                    "reduced_cost {reduced} ≥ nominal cost {nominal} on edge ({u},{v})"
                )
            }
            Violation::NegativeSupportActionCost { cost } => {
                write!(f, "support_action_cost {cost} is negative")
            }
            Violation::StartOutOfRange { node } => write!(f, "start node {node} out of range"),
            Violation::GoalOutOfRange { node } => write!(f, "goal node {node} out of range"),
            Violation::EmptyStarts => write!(f, "starts must name at least one agent"),
            Violation::EmptyGoals => write!(f, "goals must name at least one node"),
        }
    }
}

/// The on-disk / pre-validation form of a graph. Field names and nesting
/// match the JSON file format exactly; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGraph {
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
    pub supports: Vec<Support>,
    pub support_action_cost: f64,
    pub starts: Vec<NodeId>,
    pub goals: Vec<NodeId>,
}

impl RawGraph {
    /// Check every invariant and return all violations found (empty = ok).
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.num_nodes;
        if n == 0 {
            out.push(Violation::NonPositiveNodeCount);
            return out;
        }

        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for e in &self.edges {
            if e.u >= n || e.v >= n {
                out.push(Violation::EdgeEndpointOutOfRange { u: e.u, v: e.v });
                continue;
            }
            if e.u == e.v {
                out.push(Violation::SelfLoop { node: e.u });
                continue;
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            if !seen.insert(key) {
                out.push(Violation::DuplicateEdge { u: e.u, v: e.v });
                continue;
            }
            if e.nominal_cost < 0.0 || !e.nominal_cost.is_finite() {
                out.push(Violation::NegativeEdgeCost { u: e.u, v: e.v, cost: e.nominal_cost });
            }
            adjacency[e.u].push(e.v);
            adjacency[e.v].push(e.u);
        }

        // Connectivity over the well-formed edges only.
        let mut reached = vec![false; n];
        let mut stack = vec![0];
        reached[0] = true;
        while let Some(node) = stack.pop() {
            for &next in &adjacency[node] {
                if !reached[next] {
                    reached[next] = true;
                    stack.push(next);
                }
            }
        }
        if let Some(unreachable) = reached.iter().position(|&r| !r) {
            out.push(Violation::Disconnected { unreachable });
        }

        let nominal_of: HashMap<(NodeId, NodeId), f64> = self
            .edges
            .iter()
            .filter(|e| e.u < n && e.v < n && e.u != e.v)
            .map(|e| ((e.u.min(e.v), e.u.max(e.v)), e.nominal_cost))
            .collect();
        for s in &self.supports {
            if s.supporter >= n {
                out.push(Violation::SupporterOutOfRange { supporter: s.supporter });
            }
            let key = (s.u.min(s.v), s.u.max(s.v));
            match nominal_of.get(&key) {
                None => out.push(Violation::SupportReferencesMissingEdge {
                    supporter: s.supporter,
                    u: s.u,
                    v: s.v,
                }),
                Some(&nominal) => {
                    if s.reduced_cost < 0.0 || !s.reduced_cost.is_finite() {
                        out.push(Violation::NegativeReducedCost {
                            supporter: s.supporter,
                            u: s.u,
                            v: s.v,
                        });
                    } else if s.reduced_cost >= nominal {
                        out.push(Violation::ReducedCostNotBelowNominal {
                            u: s.u,
                            v: s.v,
                            reduced: s.reduced_cost,
                            nominal,
                        });
                    }
                }
            }
        }

        if self.support_action_cost < 0.0 || !self.support_action_cost.is_finite() {
            out.push(Violation::NegativeSupportActionCost { cost: self.support_action_cost });
        }
        if self.starts.is_empty() {
            out.push(Violation::EmptyStarts);
        }
        if self.goals.is_empty() {
            out.push(Violation::EmptyGoals);
        }
        for &s in &self.starts {
            if s >= n {
                out.push(Violation::StartOutOfRange { node: s });
            }
        }
        for &g in &self.goals {
            if g >= n {
                out.push(Violation::GoalOutOfRange { node: g });
            }
        }
        out
    }

    /// Validate and promote into an [`EnvGraph`].
    pub fn build(self) -> Result<EnvGraph, Vec<Violation>> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(violations);
        }
        Ok(EnvGraph::from_valid_raw(self))
    }
}

/// A validated environment graph with derived adjacency indexes.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvGraph {
    num_nodes: usize,
    edges: Vec<Edge>,
    supports: Vec<Support>,
    support_action_cost: f64,
    starts: Vec<NodeId>,
    goals: BTreeSet<NodeId>,
    // Derived, kept in sync by construction.
    neighbors: Vec<Vec<(NodeId, f64)>>,
    edge_index: HashMap<(NodeId, NodeId), usize>,
    edge_supports: Vec<Vec<(NodeId, f64)>>,
    is_supporter: Vec<bool>,
}

impl EnvGraph {
    /// Validate the pieces and assemble a graph.
    pub fn new(
        num_nodes: usize,
        edges: Vec<Edge>,
        supports: Vec<Support>,
        support_action_cost: f64,
        starts: Vec<NodeId>,
        goals: Vec<NodeId>,
    ) -> Result<Self, Vec<Violation>> {
        RawGraph { num_nodes, edges, supports, support_action_cost, starts, goals }.build()
    }

    fn from_valid_raw(raw: RawGraph) -> Self {
        let n = raw.num_nodes;
        let mut neighbors = vec![Vec::new(); n];
        let mut edge_index = HashMap::new();
        for (i, e) in raw.edges.iter().enumerate() {
            neighbors[e.u].push((e.v, e.nominal_cost));
            neighbors[e.v].push((e.u, e.nominal_cost));
            edge_index.insert((e.u.min(e.v), e.u.max(e.v)), i);
        }
        for adj in &mut neighbors {
            adj.sort_by_key(|&(node, _)| node);
        }
        let mut edge_supports = vec![Vec::new(); raw.edges.len()];
        let mut is_supporter = vec![false; n];
        for s in &raw.supports {
            let idx = edge_index[&(s.u.min(s.v), s.u.max(s.v))];
            edge_supports[idx].push((s.supporter, s.reduced_cost));
            is_supporter[s.supporter] = true;
        }
        EnvGraph {
            num_nodes: n,
            edges: raw.edges,
            supports: raw.supports,
            support_action_cost: raw.support_action_cost,
            starts: raw.starts,
            goals: raw.goals.into_iter().collect(),
            neighbors,
            edge_index,
            edge_supports,
            is_supporter,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn supports(&self) -> &[Support] {
        &self.supports
    }

    /// Extra cost an agent pays for one step of the support action (κ).
    pub fn support_action_cost(&self) -> f64 {
        self.support_action_cost
    }

    pub fn starts(&self) -> &[NodeId] {
        &self.starts
    }

    /// Team size implied by the start list: one entry per agent.
    pub fn num_agents(&self) -> usize {
        self.starts.len()
    }

    pub fn goals(&self) -> &BTreeSet<NodeId> {
        &self.goals
    }

    pub fn is_goal(&self, node: NodeId) -> bool {
        self.goals.contains(&node)
    }

    /// Neighbors of `node` with nominal edge costs, sorted by node id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.neighbors[node]
    }

    /// Nominal cost of the edge between `u` and `v`, if it exists.
    pub fn edge_cost(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.edge_index
            .get(&(u.min(v), u.max(v)))
            .map(|&i| self.edges[i].nominal_cost)
    }

    /// Support records `(supporter, reduced_cost)` attached to edge `(u,v)`.
    /// Empty for absent or non-risky edges.
    pub fn edge_supports(&self, u: NodeId, v: NodeId) -> &[(NodeId, f64)] {
        match self.edge_index.get(&(u.min(v), u.max(v))) {
            Some(&i) => &self.edge_supports[i],
            None => &[],
        }
    }

    /// An edge is risky when it carries at least one support record.
    pub fn is_risky(&self, u: NodeId, v: NodeId) -> bool {
        !self.edge_supports(u, v).is_empty()
    }

    /// True when `node` appears as the supporter of at least one edge.
    pub fn is_supporter_node(&self, node: NodeId) -> bool {
        self.is_supporter[node]
    }

    /// Recheck all invariants; empty by construction.
    pub fn validate(&self) -> Vec<Violation> {
        self.to_raw().validate()
    }

    /// The serializable form, field-for-field.
    pub fn to_raw(&self) -> RawGraph {
        RawGraph {
            num_nodes: self.num_nodes,
            edges: self.edges.clone(),
            supports: self.supports.clone(),
            support_action_cost: self.support_action_cost,
            starts: self.starts.clone(),
            goals: self.goals.iter().copied().collect(),
        }
    }

    /// Replace the start list (keeps everything else), e.g. to change team
    /// size on a generated graph.
    pub fn with_starts(&self, starts: Vec<NodeId>) -> Result<Self, Vec<Violation>> {
        let mut raw = self.to_raw();
        raw.starts = starts;
        raw.build()
    }

    /// Drop every support record, leaving all traversals at nominal cost.
    pub fn without_supports(&self) -> Self {
        let mut raw = self.to_raw();
        raw.supports.clear();
        raw.build().expect("removing supports preserves validity")
    }

    /// The small worked example used throughout the guide: a 3-node chain
    /// `0—1—2` with a cheap first edge (1.0), a risky second edge (2.0,
    /// reducible to 0.5 with support from node 0), κ = 0.2, two agents
    /// starting at node 0, goal node 2.
    pub fn demo() -> Self {
        EnvGraph::new(
            3,
            vec![
                Edge { u: 0, v: 1, nominal_cost: 1.0 },
                Edge { u: 1, v: 2, nominal_cost: 2.0 },
            ],
            vec![Support { supporter: 0, u: 1, v: 2, reduced_cost: 0.5 }],
            DEFAULT_SUPPORT_ACTION_COST,
            vec![0, 0],
            vec![2],
        )
        .expect("demo graph is valid")
    }
}

/// Errors from [`generate`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("need at least 1 agent")]
    NoAgents,
    #[error("risky_fraction must lie in [0,1], got {0}")]
    InvalidRiskyFraction(f64),
    #[error("{density} band infeasible for {num_nodes} nodes")]
    InfeasibleDensity { density: DensityClass, num_nodes: usize },
}

/// Generate a random valid environment graph.
///
/// Deterministic in all arguments: the stream comes from `ChaCha8Rng`
/// seeded with `seed`, and every draw happens in a fixed order (spanning
/// tree, extra edges, risky-edge choice, costs in edge order, supporters in
/// risky-edge order, start, goal).
///
/// Roughly `risky_fraction` of the edges become risky with nominal cost in
/// `[1.8, 2.2]` and one supported cost in `[0.4, 0.6]`; the rest draw their
/// cost from `[0.8, 1.2]`. Each risky edge gets one support node picked from
/// the neighbors of its endpoints (any other node as fallback). All agents
/// start co-located; the goal is a single distinct node.
pub fn generate(
    num_nodes: usize,
    density: DensityClass,
    risky_fraction: f64,
    num_agents: usize,
    seed: u64,
) -> Result<EnvGraph, GenerateError> {
    if num_nodes < 2 {
        return Err(GenerateError::TooFewNodes(num_nodes));
    }
    if num_agents == 0 {
        return Err(GenerateError::NoAgents);
    }
    if !(0.0..=1.0).contains(&risky_fraction) {
        return Err(GenerateError::InvalidRiskyFraction(risky_fraction));
    }
    if !density.feasible_for(num_nodes) {
        return Err(GenerateError::InfeasibleDensity { density, num_nodes });
    }

    let n = num_nodes;
    let target = density.target_edges(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Random spanning tree over a shuffled node order.
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut pairs: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let (a, b) = (order[i].min(order[j]), order[i].max(order[j]));
        pairs.insert((a, b));
    }

    // Top up to the target edge count from the shuffled complement.
    let mut candidates: Vec<(NodeId, NodeId)> = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .filter(|p| !pairs.contains(p))
        .collect();
    candidates.shuffle(&mut rng);
    for pair in candidates {
        if pairs.len() >= target {
            break;
        }
        pairs.insert(pair);
    }
    let edge_pairs: Vec<(NodeId, NodeId)> = pairs.into_iter().collect();

    // Pick which edges are risky. A risky edge needs a supporter distinct
    // from both endpoints, so with 2 nodes every edge stays normal.
    let risky_count = if n >= 3 {
        (risky_fraction * edge_pairs.len() as f64).round() as usize
    } else {
        0
    };
    let mut risky = vec![false; edge_pairs.len()];
    let mut edge_ids: Vec<usize> = (0..edge_pairs.len()).collect();
    edge_ids.shuffle(&mut rng);
    for &i in edge_ids.iter().take(risky_count) {
        risky[i] = true;
    }

    let mut edges = Vec::with_capacity(edge_pairs.len());
    for (i, &(u, v)) in edge_pairs.iter().enumerate() {
        let nominal_cost = if risky[i] {
            rng.gen_range(1.8..2.2)
        } else {
            rng.gen_range(0.8..1.2)
        };
        edges.push(Edge { u, v, nominal_cost });
    }

    let mut adjacency = vec![BTreeSet::new(); n];
    for e in &edges {
        adjacency[e.u].insert(e.v);
        adjacency[e.v].insert(e.u);
    }
    let mut supports = Vec::new();
    for (i, &(u, v)) in edge_pairs.iter().enumerate() {
        if !risky[i] {
            continue;
        }
        let mut near: Vec<NodeId> = adjacency[u]
            .union(&adjacency[v])
            .copied()
            .filter(|&w| w != u && w != v)
            .collect();
        if near.is_empty() {
            near = (0..n).filter(|&w| w != u && w != v).collect();
        }
        let supporter = near[rng.gen_range(0..near.len())];
        let reduced_cost = rng.gen_range(0.4..0.6);
        supports.push(Support { supporter, u, v, reduced_cost });
    }

    let start = rng.gen_range(0..n);
    let mut goal = rng.gen_range(0..n - 1);
    if goal >= start {
        goal += 1;
    }

    let graph = EnvGraph::new(
        n,
        edges,
        supports,
        DEFAULT_SUPPORT_ACTION_COST,
        vec![start; num_agents],
        vec![goal],
    );
    Ok(graph.expect("generated graph must satisfy all invariants"))
}

/// Errors from graph file I/O.
#[derive(Debug, thiserror::Error)]
pub enum GraphFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid graph: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(Violation::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Serialize a graph to the JSON file format.
pub fn save(graph: &EnvGraph, path: impl AsRef<Path>) -> Result<(), GraphFileError> {
    std::fs::write(path, to_json(graph))?;
    Ok(())
}

/// The JSON file format as a string (full round-trip float precision).
pub fn to_json(graph: &EnvGraph) -> String {
    let mut text = serde_json::to_string_pretty(&graph.to_raw())
        .expect("graph serialization cannot fail");
    text.push('\n');
    text
}

/// Parse and validate a graph from its JSON file format.
pub fn from_json(text: &str) -> Result<EnvGraph, GraphFileError> {
    let raw: RawGraph = serde_json::from_str(text)?;
    raw.build().map_err(GraphFileError::Invalid)
}

/// Load and validate a graph file.
pub fn load(path: impl AsRef<Path>) -> Result<EnvGraph, GraphFileError> {
    from_json(&std::fs::read_to_string(path)?)
}

/// Single-agent Dijkstra over nominal costs (supports ignored).
///
/// Returns the minimal-cost path from `src` to `dst` as `(cost, nodes)`.
/// Both endpoints must be valid node ids; connectivity guarantees a path.
pub fn shortest_path(graph: &EnvGraph, src: NodeId, dst: NodeId) -> (f64, Vec<NodeId>) {
    assert!(src < graph.num_nodes() && dst < graph.num_nodes(), "node id out of range");
    let n = graph.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<NodeId>> = vec![None; n];
    let mut heap = std::collections::BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(std::cmp::Reverse(HeapEntry { cost: 0.0, node: src }));

    while let Some(std::cmp::Reverse(HeapEntry { cost, node })) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        if node == dst {
            break;
        }
        for &(next, weight) in graph.neighbors(node) {
            let cand = cost + weight;
            if cand < dist[next] {
                dist[next] = cand;
                prev[next] = Some(node);
                heap.push(std::cmp::Reverse(HeapEntry { cost: cand, node: next }));
            }
        }
    }

    let mut path = vec![dst];
    let mut cursor = dst;
    while let Some(p) = prev[cursor] {
        path.push(p);
        cursor = p;
    }
    path.reverse();
    debug_assert_eq!(path[0], src);
    (dist[dst], path)
}

#[derive(PartialEq)]
struct HeapEntry {
    cost: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.node.cmp(&other.node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> RawGraph {
        RawGraph {
            num_nodes: 3,
            edges: vec![
                Edge { u: 0, v: 1, nominal_cost: 1.0 },
                Edge { u: 1, v: 2, nominal_cost: 1.0 },
            ],
            supports: vec![],
            support_action_cost: 0.2,
            starts: vec![0],
            goals: vec![2],
        }
    }

    #[test]
    fn minimal_valid_graph_passes() {
        assert!(path_graph().validate().is_empty());
    }

    #[test]
    fn support_on_missing_edge_is_flagged() {
        let mut raw = path_graph();
        raw.supports.push(Support { supporter: 1, u: 0, v: 2, reduced_cost: 0.5 });
        let violations = raw.validate();
        assert_eq!(
            violations,
            vec![Violation::SupportReferencesMissingEdge { supporter: 1, u: 0, v: 2 }]
        );
    }

    #[test]
    fn reduced_cost_must_beat_nominal() {
        let mut raw = path_graph();
        raw.supports.push(Support { supporter: 0, u: 1, v: 2, reduced_cost: 1.5 });
        let violations = raw.validate();
        assert_eq!(
            violations,
            vec![Violation::ReducedCostNotBelowNominal { u: 1, v: 2, reduced: 1.5, nominal: 1.0 }]
        );
    }

    #[test]
    fn negative_cost_duplicate_edge_and_disconnection_are_flagged() {
        let raw = RawGraph {
            num_nodes: 4,
            edges: vec![
                Edge { u: 0, v: 1, nominal_cost: -1.0 },
                Edge { u: 1, v: 0, nominal_cost: 1.0 },
            ],
            supports: vec![],
            support_action_cost: 0.2,
            starts: vec![0],
            goals: vec![3],
        };
        let violations = raw.validate();
        assert!(violations.contains(&Violation::NegativeEdgeCost { u: 0, v: 1, cost: -1.0 }));
        assert!(violations.contains(&Violation::DuplicateEdge { u: 1, v: 0 }));
        assert!(violations.iter().any(|v| matches!(v, Violation::Disconnected { .. })));
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate(5, DensityClass::Sparse, 0.3, 2, 7).unwrap();
        let b = generate(5, DensityClass::Sparse, 0.3, 2, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_empty());
    }

    #[test]
    fn generate_matches_density_bands() {
        // 10 nodes: M = 45, dense target = ceil(31.5) = 32.
        let dense = generate(10, DensityClass::Dense, 0.3, 2, 1).unwrap();
        assert_eq!(dense.edges().len(), 32);
        // 5 nodes: sparse target = min(ceil(4.8), 10) = 5.
        let sparse = generate(5, DensityClass::Sparse, 0.3, 2, 7).unwrap();
        assert_eq!(sparse.edges().len(), 5);
        // 10 nodes: moderate target = ceil(18) = 18.
        let moderate = generate(10, DensityClass::Moderate, 0.3, 2, 3).unwrap();
        assert_eq!(moderate.edges().len(), 18);
    }

    #[test]
    fn two_node_dense_is_infeasible() {
        let err = generate(2, DensityClass::Dense, 0.0, 1, 0).unwrap_err();
        assert_eq!(
            err,
            GenerateError::InfeasibleDensity { density: DensityClass::Dense, num_nodes: 2 }
        );
    }

    #[test]
    fn generated_graphs_validate_and_risky_edges_have_supporters() {
        for seed in 0..20 {
            let g = generate(6, DensityClass::Moderate, 0.4, 2, seed).unwrap();
            assert!(g.validate().is_empty(), "seed {seed}");
            let risky = g
                .edges()
                .iter()
                .filter(|e| g.is_risky(e.u, e.v))
                .count();
            let expected = (0.4 * g.edges().len() as f64).round() as usize;
            assert_eq!(risky, expected, "seed {seed}");
            assert_ne!(g.starts()[0], *g.goals().iter().next().unwrap());
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let g = EnvGraph::demo();
        let text = to_json(&g);
        let back = from_json(&text).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn json_rejects_unknown_keys_and_bad_costs() {
        let unknown = r#"{"num_nodes":2,"edges":[{"u":0,"v":1,"cost":1.0}],
            "supports":[],"support_action_cost":0.2,"starts":[0],"goals":[1],"extra":1}"#;
        assert!(matches!(from_json(unknown), Err(GraphFileError::Parse(_))));

        let negative = r#"{"num_nodes":2,"edges":[{"u":0,"v":1,"cost":-3.0}],
            "supports":[],"support_action_cost":0.2,"starts":[0],"goals":[1]}"#;
        match from_json(negative) {
            Err(GraphFileError::Invalid(violations)) => {
                assert!(violations
                    .iter()
                    .any(|v| matches!(v, Violation::NegativeEdgeCost { .. })));
            }
            other => panic!("expected validation error, got {other:?}"),
        }

        let duplicate = r#"{"num_nodes":2,
            "edges":[{"u":0,"v":1,"cost":1.0},{"u":1,"v":0,"cost":1.0}],
            "supports":[],"support_action_cost":0.2,"starts":[0],"goals":[1]}"#;
        match from_json(duplicate) {
            Err(GraphFileError::Invalid(violations)) => {
                assert!(violations.contains(&Violation::DuplicateEdge { u: 1, v: 0 }));
            }
            other => panic!("expected duplicate edge error, got {other:?}"),
        }
    }

    #[test]
    fn shortest_path_on_path_graph() {
        let g = path_graph().build().unwrap();
        let (cost, path) = shortest_path(&g, 0, 2);
        assert_eq!(cost, 2.0);
        assert_eq!(path, vec![0, 1, 2]);
        let (cost0, path0) = shortest_path(&g, 0, 0);
        assert_eq!(cost0, 0.0);
        assert_eq!(path0, vec![0]);
    }

    #[test]
    fn shortest_path_prefers_cheap_detour() {
        let g = EnvGraph::new(
            3,
            vec![
                Edge { u: 0, v: 1, nominal_cost: 1.0 },
                Edge { u: 1, v: 2, nominal_cost: 1.0 },
                Edge { u: 0, v: 2, nominal_cost: 3.0 },
            ],
            vec![],
            0.2,
            vec![0],
            vec![2],
        )
        .unwrap();
        let (cost, path) = shortest_path(&g, 0, 2);
        assert_eq!(cost, 2.0);
        assert_eq!(path, vec![0, 1, 2]);
    }
}
