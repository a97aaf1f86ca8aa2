//! Team coordination on graphs with risky edges.
//!
//! A team of agents traverses a weighted undirected *environment graph*.
//! Some edges are risky: their nominal traversal cost is high, but an agent
//! standing on a designated support node and taking an explicit support
//! action lowers the traversal cost for a teammate crossing that edge in the
//! same step. The objective is the minimal accumulated team cost from the
//! start configuration to a state where every agent occupies a goal node.
//!
//! The crate provides:
//!
//! - [`envgraph`] — the graph data model, validation, seeded random
//!   generation by density class, JSON persistence, and single-agent
//!   Dijkstra.
//! - [`mdp`] — the centralized team MDP: joint states and actions, the
//!   deterministic transition, true step costs, shaped rewards, validity
//!   masks, and the flat state encoding used by the neural solver.
//! - [`jsg`] — the exact solver: an explicit joint state graph over all team
//!   configurations with support-aware arc costs, uniform-cost search, and a
//!   depth-bounded brute-force oracle for testing.
//! - [`qlearn`] — centralized tabular Q-learning with masked epsilon-greedy
//!   exploration.
//! - [`ppo`] — a clipped-surrogate policy-gradient solver with a small
//!   hand-differentiated actor-critic and masked categorical heads.
//! - [`baselines`] — the uncoordinated shortest-path baseline and the
//!   optimality-ratio metric.
//! - [`bench`] — the reproducible experiment harness behind the
//!   `coordgraph` CLI.
//!
//! The `book/` directory in the repository walks through the concepts with
//! runnable snippets; every snippet doubles as a doc-test of this crate.

pub mod baselines;
pub mod bench;
pub mod envgraph;
pub mod jsg;
pub mod mdp;
pub mod ppo;
pub mod qlearn;

pub use envgraph::{DensityClass, EnvGraph, NodeId};
pub use mdp::{AgentAction, JointAction, JointState, RewardConfig};

// Guide chapters double as doc-tests so the book cannot drift from the API.
#[cfg(any())]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environment-graphs.md")]
    mod environment_graphs {}
    #[doc = include_str!("../../../book/src/team-mdp.md")]
    mod team_mdp {}
    #[doc = include_str!("../../../book/src/joint-state-graph.md")]
    mod joint_state_graph {}
    #[doc = include_str!("../../../book/src/q-learning.md")]
    mod q_learning {}
    #[doc = include_str!("../../../book/src/policy-gradient.md")]
    mod policy_gradient {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
