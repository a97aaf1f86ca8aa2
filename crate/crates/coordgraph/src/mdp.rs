//! The centralized team MDP over an environment graph.
//!
//! A *joint state* is the tuple of all agent positions. Each agent picks one
//! of `|V| + 1` actions per step: move to a node (moving to the current node
//! is the free stay action) or support. All agents act simultaneously and
//! transitions are deterministic.
//!
//! The true objective is the accumulated team cost: per step, staying is
//! free, supporting costs the graph's support action cost, and a traversal
//! pays the edge's reduced cost when a teammate is simultaneously supporting
//! that edge from one of its support nodes, the nominal cost otherwise.
//! [`shaped_reward`] adds the goal bonus, step penalty and coordination
//! terms that the learning solvers train on; evaluation always uses the true
//! cost from [`step_cost`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::envgraph::{EnvGraph, NodeId};

/// Finite stand-in for "no edge" in [`EncodedState`]; large enough to
/// dominate every real cost but still usable as a network input.
pub const ABSENT_EDGE_SENTINEL: f64 = 1000.0;

/// Positions of all agents, one node id per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointState(pub Vec<NodeId>);

impl JointState {
    pub fn new(positions: Vec<NodeId>) -> Self {
        JointState(positions)
    }

    pub fn positions(&self) -> &[NodeId] {
        &self.0
    }

    pub fn num_agents(&self) -> usize {
        self.0.len()
    }

    /// The start configuration of `graph`.
    pub fn start_of(graph: &EnvGraph) -> Self {
        JointState(graph.starts().to_vec())
    }

    /// Mixed-radix rank of this configuration in `0..num_nodes^N`, agent 0
    /// most significant.
    pub fn to_index(&self, num_nodes: usize) -> usize {
        self.0.iter().fold(0, |acc, &p| acc * num_nodes + p)
    }

    /// Inverse of [`JointState::to_index`].
    pub fn from_index(mut index: usize, num_nodes: usize, num_agents: usize) -> Self {
        let mut positions = vec![0; num_agents];
        for slot in positions.iter_mut().rev() {
            *slot = index % num_nodes;
            index /= num_nodes;
        }
        JointState(positions)
    }
}

impl From<Vec<NodeId>> for JointState {
    fn from(positions: Vec<NodeId>) -> Self {
        JointState(positions)
    }
}

/// One agent's choice for a step.
///
/// `MoveTo(current)` and `Stay` are the same action and share one slot in
/// the canonical index space: per agent the order is `MoveTo(0)`,
/// `MoveTo(1)`, …, `MoveTo(|V|-1)`, `Support`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentAction {
    MoveTo(NodeId),
    Stay,
    Support,
}

impl AgentAction {
    /// Canonical per-agent index of this action for an agent at `current`.
    pub fn to_index(self, current: NodeId, num_nodes: usize) -> usize {
        match self {
            AgentAction::MoveTo(j) => j,
            AgentAction::Stay => current,
            AgentAction::Support => num_nodes,
        }
    }

    /// Action for canonical index `idx` for an agent at `current`.
    pub fn from_index(idx: usize, current: NodeId, num_nodes: usize) -> Self {
        if idx == num_nodes {
            AgentAction::Support
        } else if idx == current {
            AgentAction::Stay
        } else {
            AgentAction::MoveTo(idx)
        }
    }
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentAction::MoveTo(j) => write!(f, "move({j})"),
            AgentAction::Stay => write!(f, "stay"),
            AgentAction::Support => write!(f, "support"),
        }
    }
}

/// Simultaneous choices of the whole team, one entry per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction(pub Vec<AgentAction>);

impl JointAction {
    pub fn actions(&self) -> &[AgentAction] {
        &self.0
    }

    /// Canonical rank in `0..(|V|+1)^N`: lexicographic over agents, agent 0
    /// most significant.
    pub fn to_index(&self, state: &JointState, num_nodes: usize) -> usize {
        self.0
            .iter()
            .zip(state.positions())
            .fold(0, |acc, (a, &pos)| acc * (num_nodes + 1) + a.to_index(pos, num_nodes))
    }

    /// Inverse of [`JointAction::to_index`].
    pub fn from_index(mut index: usize, state: &JointState, num_nodes: usize) -> Self {
        let base = num_nodes + 1;
        let mut actions = vec![AgentAction::Stay; state.num_agents()];
        for (slot, &pos) in actions.iter_mut().zip(state.positions()).rev() {
            *slot = AgentAction::from_index(index % base, pos, num_nodes);
            index /= base;
        }
        JointAction(actions)
    }
}

/// `(|V|+1)^N`, the size of the canonical joint-action index space.
/// `None` when it does not fit in `usize`.
pub fn joint_action_count(num_nodes: usize, num_agents: usize) -> Option<usize> {
    let mut count: usize = 1;
    for _ in 0..num_agents {
        count = count.checked_mul(num_nodes + 1)?;
    }
    Some(count)
}

/// Raised when an action violates the validity mask.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("agent {agent} cannot take {action} at node {at}")]
pub struct InvalidAction {
    pub agent: usize,
    pub action: AgentAction,
    pub at: NodeId,
}

/// Per-agent validity sets for one joint state.
///
/// A joint action is valid only when every per-agent component is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    num_nodes: usize,
    positions: Vec<NodeId>,
    valid: Vec<Vec<bool>>,
    valid_indices: Vec<Vec<usize>>,
}

impl ValidityMask {
    pub fn num_agents(&self) -> usize {
        self.positions.len()
    }

    /// The mask row for one agent: `|V| + 1` booleans in canonical order.
    pub fn agent_mask(&self, agent: usize) -> &[bool] {
        &self.valid[agent]
    }

    /// Ascending canonical indices of the agent's valid actions.
    pub fn agent_valid_indices(&self, agent: usize) -> &[usize] {
        &self.valid_indices[agent]
    }

    pub fn is_valid_agent(&self, agent: usize, action: AgentAction) -> bool {
        let idx = action.to_index(self.positions[agent], self.num_nodes);
        self.valid[agent][idx]
    }

    /// Index of the first agent whose component is invalid, if any.
    pub fn first_invalid(&self, action: &JointAction) -> Option<usize> {
        action
            .actions()
            .iter()
            .enumerate()
            .find(|&(agent, &a)| !self.is_valid_agent(agent, a))
            .map(|(agent, _)| agent)
    }

    pub fn is_valid_joint(&self, action: &JointAction) -> bool {
        self.first_invalid(action).is_none()
    }

    /// Number of valid joint actions (product of per-agent counts). At
    /// least 1: staying is always valid for every agent.
    pub fn num_valid_joint(&self) -> usize {
        self.valid_indices.iter().map(Vec::len).product()
    }

    /// The `k`-th valid joint action in ascending canonical order.
    pub fn nth_valid_joint(&self, mut k: usize) -> JointAction {
        let mut digits = vec![0; self.num_agents()];
        for (digit, choices) in digits.iter_mut().zip(&self.valid_indices).rev() {
            *digit = choices[k % choices.len()];
            k /= choices.len();
        }
        JointAction(
            digits
                .iter()
                .zip(&self.positions)
                .map(|(&idx, &pos)| AgentAction::from_index(idx, pos, self.num_nodes))
                .collect(),
        )
    }

    /// All valid joint actions in ascending canonical index order.
    pub fn iter_valid_joint(&self) -> impl Iterator<Item = JointAction> + '_ {
        (0..self.num_valid_joint()).map(|k| self.nth_valid_joint(k))
    }
}

/// Compute the per-agent validity sets for `state`.
///
/// For an agent at node `i`: moving to a neighbor is valid, staying is
/// always valid, and support is valid exactly when `i` is the support node
/// of at least one edge.
pub fn mask(graph: &EnvGraph, state: &JointState) -> ValidityMask {
    let n = graph.num_nodes();
    let mut valid = Vec::with_capacity(state.num_agents());
    let mut valid_indices = Vec::with_capacity(state.num_agents());
    for &pos in state.positions() {
        let mut row = vec![false; n + 1];
        row[pos] = true;
        for &(next, _) in graph.neighbors(pos) {
            row[next] = true;
        }
        row[n] = graph.is_supporter_node(pos);
        let indices: Vec<usize> =
            row.iter().enumerate().filter(|(_, &ok)| ok).map(|(i, _)| i).collect();
        valid.push(row);
        valid_indices.push(indices);
    }
    ValidityMask { num_nodes: n, positions: state.positions().to_vec(), valid, valid_indices }
}

/// Apply a valid joint action: moves change positions, stay and support do
/// not. Deterministic.
pub fn transition(
    graph: &EnvGraph,
    state: &JointState,
    action: &JointAction,
) -> Result<JointState, InvalidAction> {
    let m = mask(graph, state);
    if let Some(agent) = m.first_invalid(action) {
        return Err(InvalidAction {
            agent,
            action: action.actions()[agent],
            at: state.positions()[agent],
        });
    }
    let positions = state
        .positions()
        .iter()
        .zip(action.actions())
        .map(|(&pos, a)| match a {
            AgentAction::MoveTo(j) => *j,
            AgentAction::Stay | AgentAction::Support => pos,
        })
        .collect();
    Ok(JointState(positions))
}

/// True per-agent costs of one simultaneous step plus the coordination
/// counters: `supported_traversals` (CC) counts (supporter, traverser) pairs
/// where support lowered a traversal this step, `unsupported_risky` (RC)
/// counts risky edges crossed without support.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCost {
    pub per_agent: Vec<f64>,
    pub supported_traversals: usize,
    pub unsupported_risky: usize,
}

impl StepCost {
    /// Team cost of the step: the sum over agents.
    pub fn total(&self) -> f64 {
        self.per_agent.iter().sum()
    }
}

/// Evaluate the true cost of a joint action at `state`.
pub fn step_cost(
    graph: &EnvGraph,
    state: &JointState,
    action: &JointAction,
) -> Result<StepCost, InvalidAction> {
    let m = mask(graph, state);
    if let Some(agent) = m.first_invalid(action) {
        return Err(InvalidAction {
            agent,
            action: action.actions()[agent],
            at: state.positions()[agent],
        });
    }

    // Nodes from which somebody is actively supporting this step, with
    // multiplicity (several agents may support from one node).
    let supporting: Vec<NodeId> = state
        .positions()
        .iter()
        .zip(action.actions())
        .filter(|(_, a)| matches!(a, AgentAction::Support))
        .map(|(&pos, _)| pos)
        .collect();

    let mut per_agent = Vec::with_capacity(state.num_agents());
    let mut supported_traversals = 0;
    let mut unsupported_risky = 0;
    for (&pos, a) in state.positions().iter().zip(action.actions()) {
        let cost = match a {
            AgentAction::Stay => 0.0,
            AgentAction::Support => graph.support_action_cost(),
            AgentAction::MoveTo(j) if *j == pos => 0.0,
            AgentAction::MoveTo(j) => {
                let nominal = graph
                    .edge_cost(pos, *j)
                    .expect("masked move must follow an existing edge");
                let records = graph.edge_supports(pos, *j);
                let mut best: Option<f64> = None;
                let mut covering_agents = 0;
                for &supporter_pos in &supporting {
                    if let Some(reduced) = records
                        .iter()
                        .filter(|&&(w, _)| w == supporter_pos)
                        .map(|&(_, r)| r)
                        .reduce(f64::min)
                    {
                        covering_agents += 1;
                        best = Some(best.map_or(reduced, |b: f64| b.min(reduced)));
                    }
                }
                match best {
                    Some(reduced) => {
                        supported_traversals += covering_agents;
                        reduced
                    }
                    None => {
                        if !records.is_empty() {
                            unsupported_risky += 1;
                        }
                        nominal
                    }
                }
            }
        };
        per_agent.push(cost);
    }
    Ok(StepCost { per_agent, supported_traversals, unsupported_risky })
}

/// Weights and constants of the shaped reward and the discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Reward when the whole team stands on goal nodes after the step.
    pub goal_bonus: f64,
    /// Reward on every other step.
    pub step_penalty: f64,
    /// Weight of each supported traversal (coordination bonus).
    pub alpha: f64,
    /// Weight of each unsupported risky traversal (coordination penalty).
    pub beta: f64,
    /// Weight of the goal term.
    pub w1: f64,
    /// Weight of the movement term (negated team cost).
    pub w2: f64,
    /// Weight of the coordination term.
    pub w3: f64,
    /// Discount factor.
    pub gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            goal_bonus: 10.0,
            step_penalty: -0.01,
            alpha: 2.0,
            beta: 5.0,
            w1: 1.0,
            w2: 1.0,
            w3: 0.2,
            gamma: 0.95,
        }
    }
}

/// The shaped reward of one step:
/// `w1*r_g + w2*r_m + w3*r_c` with `r_g` the goal bonus or step penalty,
/// `r_m` the negated team step cost, and `r_c = alpha*CC - beta*RC`.
pub fn shaped_reward(
    graph: &EnvGraph,
    state: &JointState,
    action: &JointAction,
    next_state: &JointState,
    config: &RewardConfig,
) -> Result<f64, InvalidAction> {
    let cost = step_cost(graph, state, action)?;
    let r_g = if is_terminal(graph, next_state) { config.goal_bonus } else { config.step_penalty };
    let r_m = -cost.total();
    let r_c = config.alpha * cost.supported_traversals as f64
        - config.beta * cost.unsupported_risky as f64;
    Ok(config.w1 * r_g + config.w2 * r_m + config.w3 * r_c)
}

/// True when every agent stands on some goal node.
pub fn is_terminal(graph: &EnvGraph, state: &JointState) -> bool {
    state.positions().iter().all(|&p| graph.is_goal(p))
}

/// Episode horizon used by the learners and the brute-force oracle:
/// `4 * |V| * N` steps, generous against any optimal plan length.
pub fn horizon(graph: &EnvGraph) -> usize {
    4 * graph.num_nodes() * graph.num_agents()
}

/// A policy rollout scored on the true team cost (no shaping).
#[derive(Debug, Clone)]
pub struct Rollout {
    pub true_cost: f64,
    pub trajectory: Vec<(JointState, JointAction)>,
    pub final_state: JointState,
    pub reached_goal: bool,
}

/// Execute `choose` from the start configuration for at most one horizon,
/// accumulating true step costs. `choose` must return mask-valid actions.
pub fn rollout_policy(
    graph: &EnvGraph,
    mut choose: impl FnMut(&JointState, &ValidityMask) -> JointAction,
) -> Rollout {
    let steps = horizon(graph);
    let mut state = JointState::start_of(graph);
    let mut trajectory = Vec::new();
    let mut true_cost = 0.0;
    for _ in 0..steps {
        if is_terminal(graph, &state) {
            break;
        }
        let m = mask(graph, &state);
        let action = choose(&state, &m);
        let cost = step_cost(graph, &state, &action).expect("policy must return valid actions");
        true_cost += cost.total();
        let next = transition(graph, &state, &action).expect("policy must return valid actions");
        trajectory.push((state, action));
        state = next;
    }
    let reached_goal = is_terminal(graph, &state);
    Rollout { true_cost, trajectory, final_state: state, reached_goal }
}

/// The flat numeric observation of a joint state.
///
/// Three blocks: agent positions one-hot (`|V|*N`), the adjacency costs
/// (`|V|^2`, [`ABSENT_EDGE_SENTINEL`] where no edge exists), and the support
/// tensor (`|V|^3`) whose entry `(i, j, k)` is the cost of crossing `(j, k)`
/// given a supporter standing at `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState {
    pub num_nodes: usize,
    pub num_agents: usize,
    pub position_block: Vec<f64>,
    pub adjacency_block: Vec<f64>,
    pub support_block: Vec<f64>,
}

impl EncodedState {
    /// Total flat length: `|V|*N + |V|^2 + |V|^3`.
    pub fn len(&self) -> usize {
        self.position_block.len() + self.adjacency_block.len() + self.support_block.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenate the three blocks in order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.position_block);
        out.extend_from_slice(&self.adjacency_block);
        out.extend_from_slice(&self.support_block);
        out
    }

    pub fn adjacency(&self, i: NodeId, j: NodeId) -> f64 {
        self.adjacency_block[i * self.num_nodes + j]
    }

    pub fn support(&self, supporter: NodeId, j: NodeId, k: NodeId) -> f64 {
        self.support_block[(supporter * self.num_nodes + j) * self.num_nodes + k]
    }
}

/// Encode a joint state for the neural solver.
pub fn encode(graph: &EnvGraph, state: &JointState) -> EncodedState {
    let n = graph.num_nodes();
    let mut position_block = vec![0.0; n * state.num_agents()];
    for (agent, &pos) in state.positions().iter().enumerate() {
        position_block[agent * n + pos] = 1.0;
    }

    let mut adjacency_block = vec![ABSENT_EDGE_SENTINEL; n * n];
    for e in graph.edges() {
        adjacency_block[e.u * n + e.v] = e.nominal_cost;
        adjacency_block[e.v * n + e.u] = e.nominal_cost;
    }

    // Baseline: supporter position changes nothing, so every slice starts
    // as the adjacency block.
    let mut support_block = Vec::with_capacity(n * n * n);
    for _ in 0..n {
        support_block.extend_from_slice(&adjacency_block);
    }
    for s in graph.supports() {
        for (j, k) in [(s.u, s.v), (s.v, s.u)] {
            let slot = &mut support_block[(s.supporter * n + j) * n + k];
            *slot = slot.min(s.reduced_cost);
        }
    }

    EncodedState {
        num_nodes: n,
        num_agents: state.num_agents(),
        position_block,
        adjacency_block,
        support_block,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::{Edge, Support};

    fn demo() -> EnvGraph {
        EnvGraph::demo()
    }

    #[test]
    fn mask_on_demo_graph() {
        let g = demo();
        // Agent at node 1: moves to 0 or 2, stay; node 1 supports nothing.
        let m = mask(&g, &JointState(vec![1]));
        assert_eq!(m.agent_valid_indices(0), &[0, 1, 2]);
        assert!(!m.is_valid_agent(0, AgentAction::Support));
        assert!(m.is_valid_agent(0, AgentAction::Stay));
        // Agent at node 0 (the supporter of (1,2)): move to 1, stay, support.
        let m = mask(&g, &JointState(vec![0]));
        assert_eq!(m.agent_valid_indices(0), &[0, 1, 3]);
        assert!(m.is_valid_agent(0, AgentAction::Support));
        assert!(!m.is_valid_agent(0, AgentAction::MoveTo(2)));
    }

    #[test]
    fn one_invalid_component_invalidates_the_joint_action() {
        let g = demo();
        let m = mask(&g, &JointState(vec![1, 0]));
        // Agent 0 at node 1 cannot support; agent 1's component is fine.
        let joint = JointAction(vec![AgentAction::Support, AgentAction::Stay]);
        assert_eq!(m.first_invalid(&joint), Some(0));
        assert!(!m.is_valid_joint(&joint));
    }

    #[test]
    fn transition_moves_and_keeps_stationary_agents() {
        let g = demo();
        let s = JointState(vec![0, 0]);
        let a = JointAction(vec![AgentAction::MoveTo(1), AgentAction::Stay]);
        assert_eq!(transition(&g, &s, &a).unwrap(), JointState(vec![1, 0]));

        let s = JointState(vec![0, 1]);
        let a = JointAction(vec![AgentAction::Support, AgentAction::MoveTo(2)]);
        assert_eq!(transition(&g, &s, &a).unwrap(), JointState(vec![0, 2]));

        // Undirected moves reverse.
        let s = JointState(vec![1]);
        let there = transition(&g, &s, &JointAction(vec![AgentAction::MoveTo(0)])).unwrap();
        let back = transition(&g, &there, &JointAction(vec![AgentAction::MoveTo(1)])).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn transition_reports_the_offending_agent() {
        let g = demo();
        let s = JointState(vec![0, 0]);
        let a = JointAction(vec![AgentAction::Stay, AgentAction::MoveTo(2)]);
        let err = transition(&g, &s, &a).unwrap_err();
        assert_eq!(err.agent, 1);
        assert_eq!(err.at, 0);
    }

    #[test]
    fn step_cost_supported_and_unsupported_crossings() {
        let g = demo();
        let s = JointState(vec![0, 1]);

        let supported =
            step_cost(&g, &s, &JointAction(vec![AgentAction::Support, AgentAction::MoveTo(2)]))
                .unwrap();
        assert_eq!(supported.per_agent, vec![0.2, 0.5]);
        assert_eq!(supported.supported_traversals, 1);
        assert_eq!(supported.unsupported_risky, 0);

        let unsupported =
            step_cost(&g, &s, &JointAction(vec![AgentAction::Stay, AgentAction::MoveTo(2)]))
                .unwrap();
        assert_eq!(unsupported.per_agent, vec![0.0, 2.0]);
        assert_eq!(unsupported.supported_traversals, 0);
        assert_eq!(unsupported.unsupported_risky, 1);

        let idle =
            step_cost(&g, &s, &JointAction(vec![AgentAction::Stay, AgentAction::Stay])).unwrap();
        assert_eq!(idle.per_agent, vec![0.0, 0.0]);
        assert_eq!(idle.total(), 0.0);
        assert_eq!(idle.supported_traversals, 0);
        assert_eq!(idle.unsupported_risky, 0);
    }

    #[test]
    fn step_cost_is_symmetric_under_agent_permutation() {
        let g = demo();
        let s = JointState(vec![0, 1]);
        let a = JointAction(vec![AgentAction::Support, AgentAction::MoveTo(2)]);
        let c = step_cost(&g, &s, &a).unwrap();

        let s_rev = JointState(vec![1, 0]);
        let a_rev = JointAction(vec![AgentAction::MoveTo(2), AgentAction::Support]);
        let c_rev = step_cost(&g, &s_rev, &a_rev).unwrap();

        let mut per_agent = c.per_agent.clone();
        per_agent.reverse();
        assert_eq!(per_agent, c_rev.per_agent);
        assert_eq!(c.supported_traversals, c_rev.supported_traversals);
        assert_eq!(c.unsupported_risky, c_rev.unsupported_risky);
    }

    #[test]
    fn shaped_reward_matches_hand_computed_values() {
        let g = demo();
        let cfg = RewardConfig::default();

        // Unsupported risky crossing, non-terminal next state.
        let r = shaped_reward(
            &g,
            &JointState(vec![0, 1]),
            &JointAction(vec![AgentAction::Stay, AgentAction::MoveTo(2)]),
            &JointState(vec![0, 2]),
            &cfg,
        )
        .unwrap();
        assert!((r - (-3.01)).abs() < 1e-12, "got {r}");

        // Two unsupported crossings straight into the goal.
        let r = shaped_reward(
            &g,
            &JointState(vec![1, 1]),
            &JointAction(vec![AgentAction::MoveTo(2), AgentAction::MoveTo(2)]),
            &JointState(vec![2, 2]),
            &cfg,
        )
        .unwrap();
        assert!((r - 4.0).abs() < 1e-12, "got {r}");

        // Idle step: only the step penalty survives.
        let r = shaped_reward(
            &g,
            &JointState(vec![0, 0]),
            &JointAction(vec![AgentAction::Stay, AgentAction::Stay]),
            &JointState(vec![0, 0]),
            &cfg,
        )
        .unwrap();
        assert!((r - (-0.01)).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn unweighted_shaped_reward_equals_negated_true_cost() {
        let g = demo();
        let cfg = RewardConfig {
            goal_bonus: 0.0,
            step_penalty: 0.0,
            w3: 0.0,
            ..RewardConfig::default()
        };
        let s = JointState(vec![0, 1]);
        for a in mask(&g, &s).iter_valid_joint() {
            let next = transition(&g, &s, &a).unwrap();
            let r = shaped_reward(&g, &s, &a, &next, &cfg).unwrap();
            let c = step_cost(&g, &s, &a).unwrap();
            assert!((r + c.total()).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_demo_state() {
        let g = demo();
        let enc = encode(&g, &JointState(vec![0, 1]));
        assert_eq!(enc.position_block, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(enc.adjacency(1, 2), 2.0);
        assert_eq!(enc.adjacency(2, 1), 2.0);
        assert_eq!(enc.adjacency(0, 2), ABSENT_EDGE_SENTINEL);
        assert_eq!(enc.support(0, 1, 2), 0.5);
        assert_eq!(enc.support(0, 2, 1), 0.5);
        assert_eq!(enc.support(1, 1, 2), 2.0);
        assert_eq!(enc.len(), 6 + 9 + 27);
    }

    #[test]
    fn encodings_of_distinct_states_differ_only_in_positions() {
        let g = demo();
        let a = encode(&g, &JointState(vec![0, 1]));
        let b = encode(&g, &JointState(vec![2, 1]));
        assert_ne!(a.position_block, b.position_block);
        assert_eq!(a.adjacency_block, b.adjacency_block);
        assert_eq!(a.support_block, b.support_block);
    }

    #[test]
    fn terminal_means_every_agent_on_some_goal() {
        let g = demo();
        assert!(is_terminal(&g, &JointState(vec![2, 2])));
        assert!(!is_terminal(&g, &JointState(vec![2, 1])));

        let two_goals = EnvGraph::new(
            3,
            vec![
                Edge { u: 0, v: 1, nominal_cost: 1.0 },
                Edge { u: 1, v: 2, nominal_cost: 1.0 },
            ],
            vec![],
            0.2,
            vec![0, 0],
            vec![1, 2],
        )
        .unwrap();
        assert!(is_terminal(&two_goals, &JointState(vec![1, 2])));
        assert!(is_terminal(&two_goals, &JointState(vec![2, 1])));
        assert!(!is_terminal(&two_goals, &JointState(vec![0, 2])));
    }

    #[test]
    fn mask_soundness_on_every_demo_state() {
        // Exhaustive: transitions succeed exactly on masked-valid actions.
        let g = demo();
        let n = g.num_nodes();
        for idx in 0..n * n {
            let s = JointState::from_index(idx, n, 2);
            let m = mask(&g, &s);
            let total = joint_action_count(n, 2).unwrap();
            let mut valid_seen = 0;
            for k in 0..total {
                let a = JointAction::from_index(k, &s, n);
                let ok = m.is_valid_joint(&a);
                assert_eq!(transition(&g, &s, &a).is_ok(), ok, "state {s:?} action {a:?}");
                assert_eq!(step_cost(&g, &s, &a).is_ok(), ok);
                if ok {
                    valid_seen += 1;
                }
            }
            // Canonical index round-trip may alias Stay/MoveTo(current);
            // count distinct indices instead.
            let distinct: std::collections::BTreeSet<usize> =
                m.iter_valid_joint().map(|a| a.to_index(&s, n)).collect();
            assert_eq!(distinct.len(), m.num_valid_joint());
            assert_eq!(valid_seen, m.num_valid_joint());
        }
    }

    #[test]
    fn valid_joint_actions_come_out_in_ascending_canonical_order() {
        let g = demo();
        let s = JointState(vec![0, 1]);
        let m = mask(&g, &s);
        let indices: Vec<usize> = m.iter_valid_joint().map(|a| a.to_index(&s, 3)).collect();
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        assert_eq!(indices, sorted);
        assert_eq!(indices.len(), m.num_valid_joint());
    }

    #[test]
    fn supported_cost_never_exceeds_unsupported() {
        // Support monotonicity on a graph with a second supporter.
        let g = EnvGraph::new(
            4,
            vec![
                Edge { u: 0, v: 1, nominal_cost: 1.0 },
                Edge { u: 1, v: 2, nominal_cost: 2.0 },
                Edge { u: 2, v: 3, nominal_cost: 1.0 },
                Edge { u: 0, v: 3, nominal_cost: 1.0 },
            ],
            vec![
                Support { supporter: 0, u: 1, v: 2, reduced_cost: 0.5 },
                Support { supporter: 3, u: 1, v: 2, reduced_cost: 0.4 },
            ],
            0.2,
            vec![0, 3, 1],
            vec![2],
        )
        .unwrap();
        let s = JointState(vec![0, 3, 1]);
        let both = JointAction(vec![
            AgentAction::Support,
            AgentAction::Support,
            AgentAction::MoveTo(2),
        ]);
        let c = step_cost(&g, &s, &both).unwrap();
        // Two supporters cover one traversal: reduction applies once, at the
        // cheapest reduced cost, and both pairs count toward CC.
        assert_eq!(c.per_agent[2], 0.4);
        assert_eq!(c.supported_traversals, 2);

        let none = JointAction(vec![AgentAction::Stay, AgentAction::Stay, AgentAction::MoveTo(2)]);
        let c_none = step_cost(&g, &s, &none).unwrap();
        assert!(c.per_agent[2] <= c_none.per_agent[2]);
    }
}
