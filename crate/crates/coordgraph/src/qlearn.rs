//! Centralized tabular Q-learning over the joint state space.
//!
//! One global table holds a value per (joint state, joint action index)
//! pair. Action selection is masked epsilon-greedy: the argmax ranges over
//! valid joint actions only, and the exploration branch draws uniformly from
//! the valid set, so an invalid pair is never selected, read, or written.
//! Targets come from the Bellman update over the shaped reward with the max
//! restricted to actions valid in the successor state (zero at terminals).
//!
//! Training follows the convergence rule of the experiments: stop once the
//! greedy policy's episode return has stayed inside a fixed band for a full
//! window of consecutive episodes. The check is armed only after the
//! exploration schedule has settled; before that, a transiently stable but
//! untrained policy could satisfy the band by accident.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envgraph::EnvGraph;
use crate::mdp::{self, JointAction, JointState, RewardConfig, ValidityMask};

/// Default cap on the estimated size of the Q-table: 1 GiB of entries.
pub const DEFAULT_TABLE_BUDGET: u64 = 1024 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QLearnError {
    #[error(
        "Q-table intractable: {allocated_bytes} bytes allocated, budget {budget_bytes} \
         ({joint_actions} joint actions per state)"
    )]
    TableIntractable { allocated_bytes: u64, budget_bytes: u64, joint_actions: usize },
    #[error("joint action space overflows the canonical index range")]
    IndexOverflow,
    #[error("training timed out")]
    Timeout,
}

/// Lazily allocated map from joint states to dense per-joint-action value
/// slabs. Unseen pairs read as 0 without allocating.
#[derive(Debug, Clone)]
pub struct QTable {
    num_nodes: usize,
    joint_actions: usize,
    values: HashMap<JointState, Box<[f64]>>,
    budget_bytes: u64,
    allocated_bytes: u64,
}

impl QTable {
    pub fn new(graph: &EnvGraph, num_agents: usize, budget_bytes: u64) -> Result<Self, QLearnError> {
        let joint_actions = mdp::joint_action_count(graph.num_nodes(), num_agents)
            .ok_or(QLearnError::IndexOverflow)?;
        Ok(QTable {
            num_nodes: graph.num_nodes(),
            joint_actions,
            values: HashMap::new(),
            budget_bytes,
            allocated_bytes: 0,
        })
    }

    /// Joint action indices per state, `(|V|+1)^N`.
    pub fn joint_actions(&self) -> usize {
        self.joint_actions
    }

    /// Number of states with an allocated slab.
    pub fn num_states(&self) -> usize {
        self.values.len()
    }

    /// Read a value; unseen pairs default to 0 and stay unallocated.
    pub fn value(&self, state: &JointState, action_index: usize) -> f64 {
        self.values.get(state).map_or(0.0, |slab| slab[action_index])
    }

    fn slab_mut(&mut self, state: &JointState) -> Result<&mut [f64], QLearnError> {
        if !self.values.contains_key(state) {
            let bytes = (self.joint_actions * std::mem::size_of::<f64>()) as u64;
            if self.allocated_bytes + bytes > self.budget_bytes {
                return Err(QLearnError::TableIntractable {
                    allocated_bytes: self.allocated_bytes + bytes,
                    budget_bytes: self.budget_bytes,
                    joint_actions: self.joint_actions,
                });
            }
            self.allocated_bytes += bytes;
            self.values.insert(state.clone(), vec![0.0; self.joint_actions].into_boxed_slice());
        }
        Ok(self.values.get_mut(state).expect("just inserted").as_mut())
    }

    /// Greedy maximum over the valid joint actions at `state` (0 when the
    /// state was never visited).
    pub fn max_valid(&self, state: &JointState, mask: &ValidityMask) -> f64 {
        let Some(slab) = self.values.get(state) else { return 0.0 };
        (0..mask.num_valid_joint())
            .map(|k| slab[mask.nth_valid_joint(k).to_index(state, self.num_nodes)])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy argmax over valid joint actions; ties break toward the
    /// smallest canonical index.
    pub fn argmax_valid(&self, state: &JointState, mask: &ValidityMask) -> JointAction {
        let mut best_k = 0;
        let mut best_value = f64::NEG_INFINITY;
        for k in 0..mask.num_valid_joint() {
            let action = mask.nth_valid_joint(k);
            let value = self.value(state, action.to_index(state, self.num_nodes));
            if value > best_value {
                best_value = value;
                best_k = k;
            }
        }
        mask.nth_valid_joint(best_k)
    }

    /// States in deterministic (sorted) order, for dumps and inspection.
    pub fn sorted_states(&self) -> Vec<&JointState> {
        let mut states: Vec<&JointState> = self.values.keys().collect();
        states.sort();
        states
    }
}

/// Linear exploration decay: `initial` at episode 0 down to `terminal` at
/// `decay_episodes`, flat afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub terminal: f64,
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.terminal;
        }
        let t = episode as f64 / self.decay_episodes as f64;
        self.initial + (self.terminal - self.initial) * t
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct QConfig {
    pub learning_rate: f64,
    pub epsilon: EpsilonSchedule,
    pub reward: RewardConfig,
    /// Consecutive greedy-probe episodes that must stay inside the band.
    pub convergence_window: usize,
    /// Width of the return band that counts as "no longer changing".
    pub convergence_band: f64,
    pub max_episodes: usize,
    pub seed: u64,
    pub table_budget_bytes: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig::for_episodes(20_000)
    }
}

impl QConfig {
    /// Defaults scaled to an episode budget: epsilon decays 1.0 → 0.05 over
    /// the first half of training.
    pub fn for_episodes(max_episodes: usize) -> Self {
        QConfig {
            learning_rate: 0.1,
            epsilon: EpsilonSchedule {
                initial: 1.0,
                terminal: 0.05,
                decay_episodes: max_episodes / 2,
            },
            reward: RewardConfig::default(),
            convergence_window: 500,
            convergence_band: 0.2,
            max_episodes,
            seed: 0,
            table_budget_bytes: DEFAULT_TABLE_BUDGET,
        }
    }
}

/// Masked epsilon-greedy selection: with probability `1 - epsilon` the
/// valid-action argmax (ties to the smallest canonical index), otherwise a
/// uniformly random valid joint action.
pub fn select_action(
    table: &QTable,
    state: &JointState,
    mask: &ValidityMask,
    epsilon: f64,
    rng: &mut impl Rng,
) -> JointAction {
    if rng.gen::<f64>() < epsilon {
        mask.nth_valid_joint(rng.gen_range(0..mask.num_valid_joint()))
    } else {
        table.argmax_valid(state, mask)
    }
}

/// One Bellman update; `next` is `None` when the successor state is
/// terminal (bootstrap 0). Returns the new value of the updated pair.
pub fn update(
    table: &mut QTable,
    state: &JointState,
    action: &JointAction,
    shaped_reward: f64,
    next: Option<(&JointState, &ValidityMask)>,
    config: &QConfig,
) -> Result<f64, QLearnError> {
    let bootstrap = match next {
        Some((next_state, next_mask)) => table.max_valid(next_state, next_mask),
        None => 0.0,
    };
    let num_nodes = table.num_nodes;
    let index = action.to_index(state, num_nodes);
    let slab = table.slab_mut(state)?;
    let old = slab[index];
    let target = shaped_reward + config.reward.gamma * bootstrap;
    slab[index] = old + config.learning_rate * (target - old);
    Ok(slab[index])
}

/// Wall-clock limits for a training run (used by the benchmark harness).
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainLimits {
    pub deadline: Option<Instant>,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub table: QTable,
    /// Shaped return of every training episode (exploration included).
    pub episode_returns: Vec<f64>,
    /// Shaped return of the greedy probe run after every episode.
    pub eval_returns: Vec<f64>,
    /// Episode at which the convergence rule fired, if it did.
    pub converged_at: Option<usize>,
}

/// Train a Q-table on one graph. Deterministic for a fixed config.
pub fn train(graph: &EnvGraph, config: &QConfig) -> Result<TrainResult, QLearnError> {
    train_with_limits(graph, config, &TrainLimits::default())
}

pub fn train_with_limits(
    graph: &EnvGraph,
    config: &QConfig,
    limits: &TrainLimits,
) -> Result<TrainResult, QLearnError> {
    let num_agents = graph.num_agents();
    let mut table = QTable::new(graph, num_agents, config.table_budget_bytes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let horizon = mdp::horizon(graph);
    let start = JointState::start_of(graph);

    let mut episode_returns = Vec::with_capacity(config.max_episodes);
    let mut eval_returns = Vec::with_capacity(config.max_episodes);
    let mut eval_reached = Vec::with_capacity(config.max_episodes);
    let mut converged_at = None;

    for episode in 0..config.max_episodes {
        if let Some(deadline) = limits.deadline {
            if Instant::now() >= deadline {
                return Err(QLearnError::Timeout);
            }
        }
        let epsilon = config.epsilon.value(episode);
        let mut state = start.clone();
        let mut episode_return = 0.0;
        for _ in 0..horizon {
            let m = mdp::mask(graph, &state);
            let action = select_action(&table, &state, &m, epsilon, &mut rng);
            let next = mdp::transition(graph, &state, &action)
                .expect("selected actions are mask-valid");
            let reward = mdp::shaped_reward(graph, &state, &action, &next, &config.reward)
                .expect("selected actions are mask-valid");
            episode_return += reward;
            let terminal = mdp::is_terminal(graph, &next);
            if terminal {
                update(&mut table, &state, &action, reward, None, config)?;
            } else {
                let next_mask = mdp::mask(graph, &next);
                update(&mut table, &state, &action, reward, Some((&next, &next_mask)), config)?;
            }
            state = next;
            if terminal {
                break;
            }
        }
        episode_returns.push(episode_return);
        let (probe_return, probe_reached) =
            greedy_shaped_return(&table, graph, &config.reward, horizon);
        eval_returns.push(probe_return);
        eval_reached.push(probe_reached);

        // Arm the band only once exploration has settled and the greedy
        // policy solves the instance throughout the window; a stable but
        // non-goal-reaching policy is not converged.
        let settled = episode + 1 >= config.epsilon.decay_episodes;
        if settled && eval_returns.len() >= config.convergence_window && config.convergence_window > 0
        {
            let from = eval_returns.len() - config.convergence_window;
            if eval_reached[from..].iter().all(|&r| r) {
                let window = &eval_returns[from..];
                let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi - lo <= config.convergence_band {
                    converged_at = Some(episode);
                    break;
                }
            }
        }
    }

    Ok(TrainResult { table, episode_returns, eval_returns, converged_at })
}

/// Shaped return and goal flag of one greedy (epsilon = 0) rollout;
/// read-only on the table.
fn greedy_shaped_return(
    table: &QTable,
    graph: &EnvGraph,
    reward: &RewardConfig,
    horizon: usize,
) -> (f64, bool) {
    let mut state = JointState::start_of(graph);
    let mut total = 0.0;
    for _ in 0..horizon {
        if mdp::is_terminal(graph, &state) {
            break;
        }
        let m = mdp::mask(graph, &state);
        let action = table.argmax_valid(&state, &m);
        let next = mdp::transition(graph, &state, &action).expect("argmax is mask-valid");
        total += mdp::shaped_reward(graph, &state, &action, &next, reward)
            .expect("argmax is mask-valid");
        state = next;
    }
    (total, mdp::is_terminal(graph, &state))
}

/// Execute the greedy policy of `table` from the start configuration for at
/// most one horizon, scoring with the true cost.
pub fn greedy_rollout(table: &QTable, graph: &EnvGraph) -> mdp::Rollout {
    mdp::rollout_policy(graph, |state, m| table.argmax_valid(state, m))
}

/// Dump a table to the `QTB1` binary format: magic, `u32` node and agent
/// counts, `u64` entry count, then per state (in sorted order) the agent
/// positions as `u32`s followed by the dense value slab as little-endian
/// `f64`s.
pub fn save_table(table: &QTable, num_agents: usize, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(b"QTB1")?;
    out.write_all(&(table.num_nodes as u32).to_le_bytes())?;
    out.write_all(&(num_agents as u32).to_le_bytes())?;
    out.write_all(&(table.values.len() as u64).to_le_bytes())?;
    for state in table.sorted_states() {
        for &p in state.positions() {
            out.write_all(&(p as u32).to_le_bytes())?;
        }
        for &v in table.values[state].iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

/// Read a `QTB1` dump back into a table.
pub fn load_table(graph: &EnvGraph, path: impl AsRef<Path>) -> std::io::Result<QTable> {
    let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != b"QTB1" {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad magic"));
    }
    let num_nodes = read_u32(&mut input)? as usize;
    let num_agents = read_u32(&mut input)? as usize;
    if num_nodes != graph.num_nodes() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("table is for {num_nodes} nodes, graph has {}", graph.num_nodes()),
        ));
    }
    let entries = read_u64(&mut input)?;
    let mut table =
        QTable::new(graph, num_agents, DEFAULT_TABLE_BUDGET).map_err(std::io::Error::other)?;
    for _ in 0..entries {
        let mut positions = Vec::with_capacity(num_agents);
        for _ in 0..num_agents {
            positions.push(read_u32(&mut input)? as usize);
        }
        let state = JointState::new(positions);
        let slab = table.slab_mut(&state).map_err(std::io::Error::other)?;
        for slot in slab.iter_mut() {
            let mut bytes = [0u8; 8];
            input.read_exact(&mut bytes)?;
            *slot = f64::from_le_bytes(bytes);
        }
    }
    Ok(table)
}

fn read_u32(input: &mut impl Read) -> std::io::Result<u32> {
    let mut bytes = [0u8; 4];
    input.read_exact(&mut bytes)?;
    Ok(u32::from_le_bytes(bytes))
}

fn read_u64(input: &mut impl Read) -> std::io::Result<u64> {
    let mut bytes = [0u8; 8];
    input.read_exact(&mut bytes)?;
    Ok(u64::from_le_bytes(bytes))
}
