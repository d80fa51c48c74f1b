//! Greedy placement under per-cache capacity constraints.
//!
//! [`greedy_wg`] evaluates the exact placement value `F` for every
//! candidate at every step, which gives the `1 − 1/e` guarantee of greedy
//! maximization of a monotone submodular function over a partition matroid.
//! [`greedy_fast`] uses the cheaper hit-delay gain matrix and ignores the
//! queue until the final routing step.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::model::{Delay, Placement, ProblemInstance, RoutingPolicy};
use crate::routing::{optimal_delay_from, CachedDelays};
use crate::solution::Solution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub step: usize,
    pub file: usize,
    pub cache: usize,
    /// Increase of the step's objective: `F(X ∪ s) − F(X)` for
    /// [`greedy_wg`], the gain `G_jm` for [`greedy_fast`].
    pub marginal_value: Delay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
    pub placement: Placement,
    pub routing: RoutingPolicy,
}

fn finish(instance: &ProblemInstance, placement: Placement, steps: Vec<GreedyStep>) -> (Solution, GreedyTrace) {
    let solution = Solution::for_placement(instance, placement);
    let trace = GreedyTrace {
        steps,
        placement: solution.placement.clone(),
        routing: solution.routing.clone(),
    };
    (solution, trace)
}

fn increase(new: f64, old: f64) -> f64 {
    if new == old {
        0.0
    } else {
        new - old
    }
}

pub fn greedy_wg(instance: &ProblemInstance) -> (Solution, GreedyTrace) {
    greedy_wg_with(instance, Execution::default())
}

pub fn greedy_wg_with(instance: &ProblemInstance, exec: Execution) -> (Solution, GreedyTrace) {
    let (k, m) = (instance.num_files, instance.num_caches);
    let mut placement = Placement::empty(m);
    let mut delays = CachedDelays::for_model(instance, &placement);
    let mut value = -optimal_delay_from(instance, &delays);
    let mut steps = Vec::new();
    // Candidates in (cache, file) order, which is also the tie-break order.
    let mut candidates: Vec<(usize, usize)> = (0..m)
        .filter(|&c| instance.cache_capacity[c] > 0)
        .flat_map(|c| (0..k).map(move |j| (c, j)))
        .collect();

    while !candidates.is_empty() {
        let values = exec.map_slice(&candidates, |&(c, j)| {
            let mut d = delays.clone();
            d.add(instance, c, j);
            -optimal_delay_from(instance, &d)
        });
        let mut best = 0;
        for (idx, &v) in values.iter().enumerate().skip(1) {
            if v > values[best] {
                best = idx;
            }
        }
        let (c, j) = candidates[best];
        placement.insert(c, j);
        delays.add(instance, c, j);
        steps.push(GreedyStep {
            step: steps.len(),
            file: j,
            cache: c,
            marginal_value: Delay(increase(values[best], value)),
        });
        value = values[best];
        let full = placement.stored[c].len() >= instance.cache_capacity[c];
        candidates.retain(|&(cc, jj)| !(cc == c && (full || jj == j)));
    }
    finish(instance, placement, steps)
}

/// Hit-delay gain heuristic with incremental gain updates.
pub fn greedy_fast(instance: &ProblemInstance) -> (Solution, GreedyTrace) {
    let (n, k, m) = (instance.num_users, instance.num_files, instance.num_caches);
    // d_ij starts at the best miss delay; users without caches never gain.
    let connected: Vec<bool> = (0..n).map(|i| instance.has_cache(i)).collect();
    let mut d: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![instance.min_miss_delay(i); k])
        .collect();
    let users_of: Vec<Vec<usize>> = (0..m)
        .map(|c| (0..n).filter(|&i| instance.adjacency[i][c]).collect())
        .collect();

    let gain = |d: &[Vec<f64>], c: usize, j: usize| -> f64 {
        users_of[c]
            .iter()
            .filter(|&&i| connected[i])
            .map(|&i| {
                let w = instance.class_rate(i, j);
                if w == 0.0 {
                    0.0
                } else {
                    w * (d[i][j] - d[i][j].min(instance.hit_delay[i][c]))
                }
            })
            .sum()
    };

    let mut gains: Vec<Vec<f64>> = (0..m).map(|c| (0..k).map(|j| gain(&d, c, j)).collect()).collect();
    let mut available: Vec<Vec<bool>> = (0..m)
        .map(|c| vec![instance.cache_capacity[c] > 0; k])
        .collect();
    let mut placement = Placement::empty(m);
    let mut steps = Vec::new();
    loop {
        let mut best: Option<(usize, usize)> = None;
        for c in 0..m {
            for j in 0..k {
                if available[c][j] && best.is_none_or(|(bc, bj)| gains[c][j] > gains[bc][bj]) {
                    best = Some((c, j));
                }
            }
        }
        let Some((c, j)) = best else { break };
        placement.insert(c, j);
        steps.push(GreedyStep {
            step: steps.len(),
            file: j,
            cache: c,
            marginal_value: Delay(gains[c][j]),
        });
        available[c][j] = false;
        if placement.stored[c].len() >= instance.cache_capacity[c] {
            available[c].iter_mut().for_each(|a| *a = false);
        }
        for &i in &users_of[c] {
            d[i][j] = d[i][j].min(instance.hit_delay[i][c]);
        }
        for (cc, row) in gains.iter_mut().enumerate() {
            row[j] = gain(&d, cc, j);
        }
    }
    finish(instance, placement, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::brute_force_placement;
    use crate::model::tests::tiny;
    use crate::model::UncachedModel;
    use crate::routing::submodular_value;

    fn single_cache(capacity: usize) -> ProblemInstance {
        // Three files with gains 1·(5−1)·0.2, 1·(5−1)·0.5, 1·(5−1)·0.3.
        ProblemInstance {
            num_users: 1,
            num_files: 3,
            num_caches: 1,
            request_rate: vec![1.0],
            popularity: vec![vec![0.2, 0.5, 0.3]],
            adjacency: vec![vec![true]],
            hit_delay: vec![vec![1.0]],
            miss_delay: vec![vec![26.0]],
            uncached_base_delay: vec![5.0],
            cache_capacity: vec![capacity],
            uncached_model: UncachedModel::CongestionInsensitive,
        }
    }

    #[test]
    fn one_slot_takes_the_largest_gain() {
        let inst = single_cache(1);
        let (sol, trace) = greedy_wg(&inst);
        assert_eq!(sol.placement, Placement::from_sets([[1]]));
        assert_eq!(trace.steps.len(), 1);
        assert!((trace.steps[0].marginal_value.value() - 2.0).abs() < 1e-12);
        assert_eq!(greedy_fast(&inst).0.placement, sol.placement);
    }

    #[test]
    fn enough_room_stores_everything() {
        let inst = single_cache(5);
        for (sol, trace) in [greedy_wg(&inst), greedy_fast(&inst)] {
            assert_eq!(sol.placement, Placement::from_sets([[0, 1, 2]]));
            assert_eq!(trace.steps.len(), 3);
        }
    }

    #[test]
    fn zero_gains_fill_lexicographically() {
        let mut inst = single_cache(2);
        inst.popularity = vec![vec![0.0, 1.0, 0.0]];
        let (sol, trace) = greedy_fast(&inst);
        assert_eq!(sol.placement, Placement::from_sets([[0, 1]]));
        assert_eq!(trace.steps[1].marginal_value.value(), 0.0);
    }

    #[test]
    fn greedy_matches_optimum_on_tiny_instance() {
        let inst = tiny();
        let (sol, _) = greedy_wg(&inst);
        let best = brute_force_placement(&inst).unwrap();
        assert!(sol.average_delay() <= best.average_delay() * 1.01 + 1e-12);
        assert!(
            (submodular_value(&inst, &sol.placement) + sol.average_delay()).abs() < 1e-9
        );
    }

    #[test]
    fn strategies_give_identical_traces() {
        let inst = tiny().with_model(UncachedModel::CongestionSensitive { service_rate: 3.0 });
        assert_eq!(
            greedy_wg_with(&inst, Execution::Parallel).1,
            greedy_wg_with(&inst, Execution::Sequential).1
        );
    }
}
