//! Exact planning on the joint state graph.
//!
//! The joint state graph (JSG) has one vertex per team configuration
//! (`|V|^N` of them) and one directed arc per valid joint action, labeled
//! with that action and weighted with its true team step cost; among joint
//! actions connecting the same ordered configuration pair only the cheapest
//! arc survives. Support is folded into arc costs — an arc whose label
//! contains support components already pays the support action cost and the
//! reduced traversal cost — so a shortest path from the start configuration
//! to any all-on-goals configuration is an optimal team plan and its length
//! the optimal team cost.
//!
//! [`brute_force_optimal`] is an independent depth-bounded enumerator over
//! raw joint-action sequences, used to cross-check the solver on small
//! instances.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::envgraph::EnvGraph;
use crate::mdp::{self, JointAction, JointState};

/// Default cap on the estimated vertex+arc storage of a JSG build: 2 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 * 1024 * 1024 * 1024;

/// Resource limits for [`build`].
#[derive(Debug, Clone, Copy)]
pub struct BuildLimits {
    /// Estimated bytes of vertex and arc storage allowed.
    pub memory_bytes: u64,
    /// Optional wall-clock cutoff.
    pub deadline: Option<Instant>,
}

impl Default for BuildLimits {
    fn default() -> Self {
        BuildLimits { memory_bytes: DEFAULT_MEMORY_BUDGET, deadline: None }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JsgError {
    #[error(
        "JSG construction infeasible: estimated {estimated_bytes} bytes exceeds budget {budget_bytes}"
    )]
    Infeasible { estimated_bytes: u64, budget_bytes: u64 },
    #[error("JSG construction timed out")]
    Timeout,
    #[error("no goal configuration reachable")]
    Unsolvable,
}

/// A labeled directed arc between two team configurations.
#[derive(Debug, Clone)]
pub struct Arc {
    pub to: usize,
    pub cost: f64,
    pub label: JointAction,
}

/// The explicit product graph over team configurations.
#[derive(Debug, Clone)]
pub struct JointStateGraph {
    num_nodes: usize,
    num_agents: usize,
    arcs: Vec<Vec<Arc>>,
    source: usize,
    sinks: Vec<bool>,
    build_time: Duration,
}

impl JointStateGraph {
    pub fn num_vertices(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn is_sink(&self, vertex: usize) -> bool {
        self.sinks[vertex]
    }

    pub fn arcs_from(&self, vertex: usize) -> &[Arc] {
        &self.arcs[vertex]
    }

    pub fn configuration(&self, vertex: usize) -> JointState {
        JointState::from_index(vertex, self.num_nodes, self.num_agents)
    }

    /// Wall time spent constructing the graph.
    pub fn build_time(&self) -> Duration {
        self.build_time
    }
}

/// Estimated storage of the full JSG for `graph` with `num_agents` agents.
///
/// Vertices: `|V|^N` adjacency slots. Arcs: at most one per distinct
/// (source, target) pair, bounded by `(Σ_v (deg(v)+1))^N = (2|E|+|V|)^N`
/// targets overall, each storing a cost, a target index and an N-component
/// label.
pub fn estimate_bytes(graph: &EnvGraph, num_agents: usize) -> u64 {
    let n = graph.num_nodes() as u128;
    let mut vertices: u128 = 1;
    let mut arcs: u128 = 1;
    let arc_base = (2 * graph.edges().len() + graph.num_nodes()) as u128;
    for _ in 0..num_agents {
        vertices = vertices.saturating_mul(n);
        arcs = arcs.saturating_mul(arc_base);
    }
    let arc_bytes = (40 + 16 * num_agents) as u128;
    let total = vertices.saturating_mul(32).saturating_add(arcs.saturating_mul(arc_bytes));
    u64::try_from(total).unwrap_or(u64::MAX)
}

/// Construct the joint state graph for `num_agents` agents on `graph`.
///
/// Fails before allocating anything when the estimated storage exceeds the
/// memory budget, mirroring how the exact approach runs out of memory on
/// large teams.
pub fn build(
    graph: &EnvGraph,
    num_agents: usize,
    limits: &BuildLimits,
) -> Result<JointStateGraph, JsgError> {
    assert!(num_agents >= 1, "need at least one agent");
    let started = Instant::now();
    let estimated_bytes = estimate_bytes(graph, num_agents);
    if estimated_bytes > limits.memory_bytes {
        return Err(JsgError::Infeasible { estimated_bytes, budget_bytes: limits.memory_bytes });
    }

    let n = graph.num_nodes();
    let num_vertices = n.pow(num_agents as u32);
    let mut arcs: Vec<Vec<Arc>> = Vec::with_capacity(num_vertices);
    let mut sinks = vec![false; num_vertices];

    // Reused per-vertex scratch: cheapest arc per target configuration.
    let mut best: Vec<(f64, usize)> = Vec::new();
    for vertex in 0..num_vertices {
        if let Some(deadline) = limits.deadline {
            if vertex % 256 == 0 && Instant::now() >= deadline {
                return Err(JsgError::Timeout);
            }
        }
        let state = JointState::from_index(vertex, n, num_agents);
        sinks[vertex] = mdp::is_terminal(graph, &state);

        let m = mdp::mask(graph, &state);
        let mut labels: Vec<JointAction> = Vec::with_capacity(m.num_valid_joint());
        best.clear();
        let mut target_slot: std::collections::HashMap<usize, usize> = Default::default();
        for action in m.iter_valid_joint() {
            let next = mdp::transition(graph, &state, &action)
                .expect("enumerated joint actions are valid");
            let cost = mdp::step_cost(graph, &state, &action)
                .expect("enumerated joint actions are valid")
                .total();
            let target = next.to_index(n);
            match target_slot.get(&target) {
                // Enumeration order is ascending canonical index, so strict
                // improvement keeps the lowest-index label on cost ties.
                Some(&slot) => {
                    if cost < best[slot].0 {
                        best[slot].0 = cost;
                        labels[slot] = action;
                    }
                }
                None => {
                    target_slot.insert(target, best.len());
                    best.push((cost, target));
                    labels.push(action);
                }
            }
        }
        let mut vertex_arcs: Vec<Arc> = best
            .iter()
            .zip(labels)
            .map(|(&(cost, to), label)| Arc { to, cost, label })
            .collect();
        vertex_arcs.sort_by_key(|a| a.to);
        arcs.push(vertex_arcs);
    }

    let source = JointState::start_of(graph).to_index(n);
    Ok(JointStateGraph {
        num_nodes: n,
        num_agents,
        arcs,
        source,
        sinks,
        build_time: started.elapsed(),
    })
}

/// One step of a solved plan.
#[derive(Debug, Clone)]
pub struct PlanStep {
    pub from: JointState,
    pub action: JointAction,
    pub to: JointState,
    pub cost: f64,
}

/// An optimal team plan: total cost and the labeled arc path.
#[derive(Debug, Clone)]
pub struct Solution {
    pub cost: f64,
    pub steps: Vec<PlanStep>,
    pub search_time: Duration,
}

#[derive(Clone, Copy)]
struct Label {
    cost: f64,
    hops: u32,
    parent: Option<(usize, u32)>, // predecessor vertex and arc index
}

/// Uniform-cost search from the start configuration to the nearest goal
/// configuration.
///
/// Ties on cost break toward fewer arcs, then toward the lexicographically
/// smallest configuration sequence, so the returned plan is deterministic.
pub fn solve(jsg: &JointStateGraph) -> Result<Solution, JsgError> {
    let started = Instant::now();
    let num_vertices = jsg.num_vertices();
    let mut labels: Vec<Option<Label>> = vec![None; num_vertices];
    labels[jsg.source] = Some(Label { cost: 0.0, hops: 0, parent: None });

    let mut heap: BinaryHeap<Reverse<QueueEntry>> = BinaryHeap::new();
    heap.push(Reverse(QueueEntry { cost: 0.0, hops: 0, vertex: jsg.source }));

    while let Some(Reverse(entry)) = heap.pop() {
        let current = match labels[entry.vertex] {
            Some(l) if l.cost == entry.cost && l.hops == entry.hops => l,
            _ => continue, // stale entry
        };
        for (arc_idx, arc) in jsg.arcs[entry.vertex].iter().enumerate() {
            if arc.to == entry.vertex {
                continue; // self-arcs never improve cost or hops
            }
            let cand = Label {
                cost: current.cost + arc.cost,
                hops: current.hops + 1,
                parent: Some((entry.vertex, arc_idx as u32)),
            };
            let improved = match labels[arc.to] {
                None => true,
                Some(old) => match cand.cost.total_cmp(&old.cost) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => match cand.hops.cmp(&old.hops) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Greater => false,
                        std::cmp::Ordering::Equal => {
                            lex_path(&labels, cand, arc.to) < lex_path(&labels, old, arc.to)
                        }
                    },
                },
            };
            if improved {
                labels[arc.to] = Some(cand);
                heap.push(Reverse(QueueEntry {
                    cost: cand.cost,
                    hops: cand.hops,
                    vertex: arc.to,
                }));
            }
        }
    }

    let best_sink = (0..num_vertices)
        .filter(|&v| jsg.sinks[v])
        .filter_map(|v| labels[v].map(|l| (v, l)))
        .min_by(|(va, la), (vb, lb)| {
            la.cost
                .total_cmp(&lb.cost)
                .then(la.hops.cmp(&lb.hops))
                .then_with(|| lex_path(&labels, *la, *va).cmp(&lex_path(&labels, *lb, *vb)))
        });
    let (_, sink_label) = best_sink.ok_or(JsgError::Unsolvable)?;

    let mut steps = Vec::with_capacity(sink_label.hops as usize);
    let mut label = sink_label;
    while let Some((prev, arc_idx)) = label.parent {
        let arc = &jsg.arcs[prev][arc_idx as usize];
        steps.push(PlanStep {
            from: jsg.configuration(prev),
            action: arc.label.clone(),
            to: jsg.configuration(arc.to),
            cost: arc.cost,
        });
        label = labels[prev].expect("parent chain is settled");
    }
    steps.reverse();
    Ok(Solution { cost: sink_label.cost, steps, search_time: started.elapsed() })
}

/// Convenience: build then solve, returning the solution together with the
/// constructed graph (whose `build_time` the harness reports).
pub fn build_and_solve(
    graph: &EnvGraph,
    num_agents: usize,
    limits: &BuildLimits,
) -> Result<(JointStateGraph, Solution), JsgError> {
    let jsg = build(graph, num_agents, limits)?;
    let solution = solve(&jsg)?;
    Ok((jsg, solution))
}

/// The vertex sequence of the path stored in `labels` ending at `vertex`
/// with label `label`, for lexicographic tie-breaking. Only invoked on
/// exact (cost, hops) ties, which are rare.
fn lex_path(labels: &[Option<Label>], label: Label, vertex: usize) -> Vec<usize> {
    let mut path = vec![vertex];
    let mut cursor = label;
    while let Some((prev, _)) = cursor.parent {
        path.push(prev);
        cursor = labels[prev].expect("parent chain is settled");
    }
    path.reverse();
    path
}

#[derive(PartialEq)]
struct QueueEntry {
    cost: f64,
    hops: u32,
    vertex: usize,
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.hops.cmp(&other.hops))
            .then_with(|| self.vertex.cmp(&other.vertex))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("brute-force search exceeded its expansion budget of {0}")]
    BudgetExceeded(u64),
}

/// Default expansion budget of the brute-force oracle.
pub const DEFAULT_ORACLE_BUDGET: u64 = 50_000_000;

/// Exhaustive minimal team cost by depth-first enumeration of all valid
/// joint-action sequences up to `horizon` steps, with branch-and-bound cost
/// pruning and dominance pruning on (configuration, elapsed steps).
///
/// Intended as an independent test oracle for tiny instances (5 or fewer
/// nodes, at most 2-3 agents); refuses with [`OracleError::BudgetExceeded`]
/// rather than running unbounded.
pub fn brute_force_optimal(
    graph: &EnvGraph,
    num_agents: usize,
    horizon: usize,
) -> Result<f64, OracleError> {
    brute_force_optimal_with_budget(graph, num_agents, horizon, DEFAULT_ORACLE_BUDGET)
}

pub fn brute_force_optimal_with_budget(
    graph: &EnvGraph,
    num_agents: usize,
    horizon: usize,
    budget: u64,
) -> Result<f64, OracleError> {
    let start = JointState::new(graph.starts()[..num_agents.min(graph.starts().len())].to_vec());
    assert_eq!(start.num_agents(), num_agents, "graph start list too short for team size");

    struct Search<'a> {
        graph: &'a EnvGraph,
        horizon: usize,
        budget: u64,
        expansions: u64,
        best: f64,
        // Cheapest cost at which (configuration, elapsed steps) was entered.
        seen: std::collections::HashMap<(JointState, usize), f64>,
    }

    impl Search<'_> {
        fn dfs(&mut self, state: &JointState, step: usize, acc: f64) -> Result<(), OracleError> {
            if acc >= self.best {
                return Ok(());
            }
            if mdp::is_terminal(self.graph, state) {
                self.best = acc;
                return Ok(());
            }
            if step == self.horizon {
                return Ok(());
            }
            match self.seen.get(&(state.clone(), step)) {
                Some(&cheapest) if cheapest <= acc => return Ok(()),
                _ => {
                    self.seen.insert((state.clone(), step), acc);
                }
            }
            self.expansions += 1;
            if self.expansions > self.budget {
                return Err(OracleError::BudgetExceeded(self.budget));
            }
            let m = mdp::mask(self.graph, state);
            for action in m.iter_valid_joint() {
                let cost = mdp::step_cost(self.graph, state, &action)
                    .expect("enumerated joint actions are valid")
                    .total();
                let next = mdp::transition(self.graph, state, &action)
                    .expect("enumerated joint actions are valid");
                self.dfs(&next, step + 1, acc + cost)?;
            }
            Ok(())
        }
    }

    let mut search = Search {
        graph,
        horizon,
        budget,
        expansions: 0,
        best: f64::INFINITY,
        seen: Default::default(),
    };
    search.dfs(&start, 0, 0.0)?;
    Ok(search.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::{generate, DensityClass, Edge, EnvGraph, Support};
    use crate::mdp::AgentAction;

    #[test]
    fn demo_jsg_has_nine_vertices_and_the_cheap_support_arc() {
        let g = EnvGraph::demo();
        let jsg = build(&g, 2, &BuildLimits::default()).unwrap();
        assert_eq!(jsg.num_vertices(), 9);

        // Configuration [0,1] -> [0,2]: the supported crossing (0.7) must
        // beat the unsupported one (2.0).
        let from = JointState::new(vec![0, 1]).to_index(3);
        let to = JointState::new(vec![0, 2]).to_index(3);
        let arc = jsg.arcs_from(from).iter().find(|a| a.to == to).unwrap();
        assert!((arc.cost - 0.7).abs() < 1e-12);
        assert_eq!(
            arc.label,
            JointAction(vec![AgentAction::Support, AgentAction::MoveTo(2)])
        );
    }

    #[test]
    fn single_agent_jsg_mirrors_the_environment_graph() {
        let g = EnvGraph::demo();
        let single = g.with_starts(vec![0]).unwrap();
        let jsg = build(&single, 1, &BuildLimits::default()).unwrap();
        assert_eq!(jsg.num_vertices(), 3);
        for e in single.edges() {
            let arc = jsg.arcs_from(e.u).iter().find(|a| a.to == e.v).unwrap();
            assert_eq!(arc.cost, e.nominal_cost, "no teammate can support");
        }
        let solution = solve(&jsg).unwrap();
        assert!((solution.cost - 3.0).abs() < 1e-12);
    }

    #[test]
    fn demo_optimum_is_4_7() {
        let g = EnvGraph::demo();
        let (_, solution) = build_and_solve(&g, 2, &BuildLimits::default()).unwrap();
        assert!((solution.cost - 4.7).abs() < 1e-12, "got {}", solution.cost);
        // Replay the plan through the MDP: costs must agree step by step.
        let mut state = JointState::start_of(&g);
        let mut total = 0.0;
        for step in &solution.steps {
            assert_eq!(step.from, state);
            let c = mdp::step_cost(&g, &state, &step.action).unwrap().total();
            assert!((c - step.cost).abs() < 1e-12);
            state = mdp::transition(&g, &state, &step.action).unwrap();
            total += c;
        }
        assert_eq!(state, step_goal(&g));
        assert!((total - solution.cost).abs() < 1e-12);
    }

    fn step_goal(g: &EnvGraph) -> JointState {
        let goal = *g.goals().iter().next().unwrap();
        JointState::new(vec![goal; g.num_agents()])
    }

    #[test]
    fn brute_force_agrees_on_the_demo_graph() {
        let g = EnvGraph::demo();
        assert!((brute_force_optimal(&g, 2, 12).unwrap() - 4.7).abs() < 1e-12);
        let single = g.with_starts(vec![0]).unwrap();
        assert!((brute_force_optimal(&single, 1, 12).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn start_on_goal_costs_nothing() {
        let g = EnvGraph::new(
            2,
            vec![Edge { u: 0, v: 1, nominal_cost: 1.0 }],
            vec![],
            0.2,
            vec![1, 1],
            vec![1],
        )
        .unwrap();
        assert_eq!(brute_force_optimal(&g, 2, 8).unwrap(), 0.0);
        let (_, solution) = build_and_solve(&g, 2, &BuildLimits::default()).unwrap();
        assert_eq!(solution.cost, 0.0);
        assert!(solution.steps.is_empty());
    }

    #[test]
    fn memory_budget_refuses_oversized_builds() {
        let g = generate(10, DensityClass::Dense, 0.3, 4, 5).unwrap();
        let err = build(&g, 4, &BuildLimits { memory_bytes: 1024, deadline: None }).unwrap_err();
        assert!(matches!(err, JsgError::Infeasible { .. }));
    }

    #[test]
    fn solver_matches_oracle_on_small_generated_instances() {
        for seed in 0..12 {
            for &density in &DensityClass::ALL {
                let g = generate(4, density, 0.5, 2, 100 + seed).unwrap();
                let horizon = mdp::horizon(&g);
                let oracle = brute_force_optimal(&g, 2, horizon).unwrap();
                let (_, solution) = build_and_solve(&g, 2, &BuildLimits::default()).unwrap();
                assert!(
                    (solution.cost - oracle).abs() < 1e-9,
                    "seed {seed} {density}: solver {} oracle {oracle}",
                    solution.cost
                );
            }
        }
    }

    #[test]
    fn removing_supports_never_helps() {
        for seed in 0..8 {
            let g = generate(5, DensityClass::Moderate, 0.5, 2, 200 + seed).unwrap();
            let with = build_and_solve(&g, 2, &BuildLimits::default()).unwrap().1.cost;
            let without =
                build_and_solve(&g.without_supports(), 2, &BuildLimits::default()).unwrap().1.cost;
            assert!(without >= with - 1e-9, "seed {seed}: {without} < {with}");
        }
    }

    #[test]
    fn arc_out_degree_is_bounded_by_action_products() {
        let g = EnvGraph::new(
            4,
            vec![
                Edge { u: 0, v: 1, nominal_cost: 1.0 },
                Edge { u: 1, v: 2, nominal_cost: 2.0 },
                Edge { u: 2, v: 3, nominal_cost: 1.0 },
            ],
            vec![Support { supporter: 1, u: 2, v: 3, reduced_cost: 0.5 }],
            0.2,
            vec![0, 0],
            vec![3],
        )
        .unwrap();
        let jsg = build(&g, 2, &BuildLimits::default()).unwrap();
        for vertex in 0..jsg.num_vertices() {
            let state = jsg.configuration(vertex);
            let bound: usize = state
                .positions()
                .iter()
                .map(|&p| g.neighbors(p).len() + 2)
                .product();
            assert!(jsg.arcs_from(vertex).len() <= bound);
        }
    }
}
