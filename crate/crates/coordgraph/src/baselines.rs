//! The uncoordinated baseline and the optimality-ratio metric.

use std::time::Instant;

use crate::envgraph::{shortest_path, EnvGraph};

/// Outcome of one solver run on one instance, as the harness records it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRecord {
    pub solver: &'static str,
    /// True accumulated team cost.
    pub true_cost: f64,
    pub wall_time_seconds: f64,
    pub reached_goal: bool,
    /// Optimal cost divided by this solution's cost; only set once the
    /// exact optimum is known.
    pub optimality_ratio: Option<f64>,
}

/// Solve without coordination: every agent independently walks its
/// nominal-cost shortest path to the nearest goal node. No supports are
/// used and no support costs are paid; risky edges go at nominal cost.
pub fn naive_solve(graph: &EnvGraph) -> SolutionRecord {
    let started = Instant::now();
    let mut total = 0.0;
    for &start in graph.starts() {
        let best = graph
            .goals()
            .iter()
            .map(|&goal| shortest_path(graph, start, goal).0)
            .fold(f64::INFINITY, f64::min);
        total += best;
    }
    SolutionRecord {
        solver: "naive",
        true_cost: total,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        reached_goal: true,
        optimality_ratio: None,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RatioError {
    /// A solution costing less than the proven optimum indicates a solver
    /// bug, not a better solution.
    #[error("solution cost {cost} beats proven optimum {optimal}")]
    BeatsOptimum { cost: f64, optimal: f64 },
    #[error("optimal cost must be positive, got {0}")]
    NonPositiveOptimum(f64),
}

/// Tolerance for "equal to the optimum" when two float summation orders
/// disagree in the last bits.
const RATIO_EPSILON: f64 = 1e-9;

/// `optimal / cost`, in `(0, 1]`; `1.0` means the solution is optimal.
pub fn optimality_ratio(cost: f64, jsg_optimal: f64) -> Result<f64, RatioError> {
    if jsg_optimal <= 0.0 {
        return Err(RatioError::NonPositiveOptimum(jsg_optimal));
    }
    if cost < jsg_optimal - RATIO_EPSILON {
        return Err(RatioError::BeatsOptimum { cost, optimal: jsg_optimal });
    }
    Ok((jsg_optimal / cost).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::{generate, DensityClass, EnvGraph};
    use crate::jsg;

    #[test]
    fn naive_on_demo_pays_both_nominal_paths() {
        let g = EnvGraph::demo();
        let record = naive_solve(&g);
        assert_eq!(record.true_cost, 6.0);
        assert!(record.reached_goal);
    }

    #[test]
    fn naive_single_agent_equals_shortest_path() {
        let g = EnvGraph::demo().with_starts(vec![0]).unwrap();
        let record = naive_solve(&g);
        let (cost, _) = crate::envgraph::shortest_path(&g, 0, 2);
        assert_eq!(record.true_cost, cost);
    }

    #[test]
    fn without_risky_edges_naive_matches_the_optimum() {
        for seed in 0..6 {
            let g = generate(5, DensityClass::Moderate, 0.0, 2, 300 + seed).unwrap();
            let naive = naive_solve(&g).true_cost;
            let optimal = jsg::build_and_solve(&g, 2, &jsg::BuildLimits::default())
                .unwrap()
                .1
                .cost;
            assert!((naive - optimal).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn ratio_values_and_contract() {
        assert_eq!(optimality_ratio(4.7, 4.7).unwrap(), 1.0);
        let r = optimality_ratio(6.0, 4.7).unwrap();
        assert!((r - 4.7 / 6.0).abs() < 1e-12);
        assert!(matches!(
            optimality_ratio(4.0, 4.7),
            Err(RatioError::BeatsOptimum { .. })
        ));
        assert!(matches!(
            optimality_ratio(1.0, 0.0),
            Err(RatioError::NonPositiveOptimum(_))
        ));
    }

    #[test]
    fn ratio_is_scale_invariant() {
        for k in [0.5, 2.0, 13.0] {
            let a = optimality_ratio(6.0, 4.7).unwrap();
            let b = optimality_ratio(6.0 * k, 4.7 * k).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}
