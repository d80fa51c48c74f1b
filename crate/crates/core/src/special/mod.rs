//! Polynomial special cases of the constant-delay problem and the tooling
//! used to study where integrality breaks.
//!
//! * one file per user: maximum-weight matching on a micro-cache graph;
//! * two caches: the LP relaxation has an integral optimum;
//! * otherwise the relaxation can be strictly better, which happens on
//!   graphs with cycles of length `4k + 2`.

pub mod cycles;
pub mod hungarian;
pub mod simplex;
pub mod tu;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{brute_force_placement_with, DEFAULT_ENUMERATION_CAP};
use crate::exec::Execution;
use crate::model::{Placement, ProblemInstance};
use crate::solution::Solution;

pub use cycles::{find_bad_cycles, Cycle, Node};
pub use tu::{tu_check, tu_check_with, ConstraintMatrix, TuReport, Variable};

/// Distance from `{0, 1}` tolerated in the relaxed placement.
pub const INTEGRALITY_TOL: f64 = 1e-7;

fn require_ci(instance: &ProblemInstance, operation: &'static str) -> Result<()> {
    if instance.uncached_model.is_congestion_sensitive() {
        Err(Error::WrongModel {
            operation,
            expected: "congestion-insensitive",
        })
    } else {
        Ok(())
    }
}

/// Bipartite graph between users (one file each) and unit micro-caches.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroCacheGraph {
    /// `file_of_user[i]`: the only file user `i` requests.
    pub file_of_user: Vec<usize>,
    /// `(cache, slot)` of each right-hand node.
    pub slots: Vec<(usize, usize)>,
    /// `weights[i][s] = λ_i (d^b_i − d^h_im)` for improving edges, else 0.
    pub weights: Vec<Vec<f64>>,
}

impl MicroCacheGraph {
    pub fn build(instance: &ProblemInstance) -> Result<Self> {
        let file_of_user = one_file_per_user(instance)?;
        let slots: Vec<(usize, usize)> = instance
            .cache_capacity
            .iter()
            .enumerate()
            .flat_map(|(m, &c)| (0..c).map(move |s| (m, s)))
            .collect();
        let weights = (0..instance.num_users)
            .map(|i| {
                slots
                    .iter()
                    .map(|&(m, _)| {
                        let gain = instance.request_rate[i]
                            * (instance.uncached_base_delay[i] - instance.hit_delay[i][m]);
                        if instance.adjacency[i][m] && gain > 0.0 {
                            gain
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(MicroCacheGraph {
            file_of_user,
            slots,
            weights,
        })
    }

    /// Maximum-weight matching as `(user, slot)` pairs of positive weight,
    /// plus its total weight.
    pub fn max_matching(&self) -> (Vec<(usize, usize)>, f64) {
        let n = self.weights.len().max(self.slots.len());
        let square: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|s| {
                        if i < self.weights.len() && s < self.slots.len() {
                            self.weights[i][s]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let (assign, total) = hungarian::max_weight_assignment(&square);
        let pairs = assign
            .into_iter()
            .enumerate()
            .filter(|&(i, s)| i < self.weights.len() && s < self.slots.len() && self.weights[i][s] > 0.0)
            .collect();
        (pairs, total)
    }
}

fn one_file_per_user(instance: &ProblemInstance) -> Result<Vec<usize>> {
    let mut seen = vec![false; instance.num_files];
    let mut files = Vec::with_capacity(instance.num_users);
    for (i, row) in instance.popularity.iter().enumerate() {
        let mut wanted = row.iter().enumerate().filter(|(_, &q)| q != 0.0);
        let file = match (wanted.next(), wanted.next()) {
            (Some((j, &q)), None) if (q - 1.0).abs() <= 1e-9 => j,
            _ => {
                return Err(Error::NotOneFilePerUser(format!(
                    "user {i} does not request exactly one file"
                )))
            }
        };
        if std::mem::replace(&mut seen[file], true) {
            return Err(Error::NotOneFilePerUser(format!(
                "file {file} is requested by more than one user"
            )));
        }
        files.push(file);
    }
    Ok(files)
}

/// Exact solver for instances where each user requests one distinct file.
pub fn solve_one_file_per_user(instance: &ProblemInstance) -> Result<Solution> {
    require_ci(instance, "solve_one_file_per_user")?;
    let graph = MicroCacheGraph::build(instance)?;
    let (pairs, _) = graph.max_matching();
    let mut placement = Placement::empty(instance.num_caches);
    for (i, s) in pairs {
        placement.insert(graph.slots[s].0, graph.file_of_user[i]);
    }
    Ok(Solution::for_placement(instance, placement))
}

/// The relaxed program `0 ≤ x ≤ 1` solved by simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Relaxation {
    pub matrix: ConstraintMatrix,
    /// `x[m][j]` of the relaxed optimum.
    pub placement: Vec<Vec<f64>>,
    pub average_delay: f64,
}

pub fn solve_relaxation(instance: &ProblemInstance) -> Result<Relaxation> {
    require_ci(instance, "solve_relaxation")?;
    let matrix = ConstraintMatrix::for_instance(instance);
    let width = matrix.columns.len();
    let gain: Vec<f64> = matrix
        .columns
        .iter()
        .map(|v| match *v {
            Variable::Placement { .. } => 0.0,
            Variable::Routing { user, file, cache } => {
                instance.class_rate(user, file)
                    * (instance.uncached_base_delay[user] - instance.hit_delay[user][cache])
            }
        })
        .collect();
    let mut a: Vec<Vec<f64>> = matrix
        .rows
        .iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let mut b: Vec<f64> = matrix.rhs.iter().map(|&v| v as f64).collect();
    for (c, v) in matrix.columns.iter().enumerate() {
        if matches!(v, Variable::Placement { .. }) {
            let mut row = vec![0.0; width];
            row[c] = 1.0;
            a.push(row);
            b.push(1.0);
        }
    }
    let lp = simplex::maximize(&gain, &a, &b)?;

    let mut placement = vec![vec![0.0; instance.num_files]; instance.num_caches];
    for (c, v) in matrix.columns.iter().enumerate() {
        if let Variable::Placement { file, cache } = *v {
            placement[cache][file] = lp.z[c];
        }
    }
    let base: f64 = (0..instance.num_users)
        .map(|i| {
            instance.request_rate[i]
                * instance.uncached_base_delay[i]
                * instance.popularity[i].iter().sum::<f64>()
        })
        .sum();
    Ok(Relaxation {
        matrix,
        placement,
        average_delay: (base - lp.objective) / instance.total_rate(),
    })
}

/// Two-cache solver: the relaxation's vertex optimum must be integral.
/// A fractional vertex is returned as an error, never rounded away.
pub fn solve_two_cache_lp(instance: &ProblemInstance) -> Result<Solution> {
    require_ci(instance, "solve_two_cache_lp")?;
    if instance.num_caches != 2 {
        return Err(Error::NotTwoCaches(instance.num_caches));
    }
    let relaxed = solve_relaxation(instance)?;
    let mut placement = Placement::empty(2);
    for (m, row) in relaxed.placement.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x.min((1.0 - x).abs()) > INTEGRALITY_TOL {
                return Err(Error::NonIntegralRelaxation {
                    file: j,
                    cache: m,
                    value: x,
                });
            }
            if x > 0.5 {
                placement.insert(m, j);
            }
        }
    }
    Ok(Solution::for_placement(instance, placement))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationGap {
    pub ilp: f64,
    pub lp: f64,
    pub gap: f64,
}

/// Integer optimum (by enumeration) against the relaxed optimum.
pub fn relaxation_gap(instance: &ProblemInstance) -> Result<RelaxationGap> {
    relaxation_gap_with(instance, DEFAULT_ENUMERATION_CAP, Execution::default())
}

pub fn relaxation_gap_with(instance: &ProblemInstance, cap: u128, exec: Execution) -> Result<RelaxationGap> {
    require_ci(instance, "relaxation_gap")?;
    let ilp = brute_force_placement_with(instance, cap, exec)?.average_delay();
    let lp = solve_relaxation(instance)?.average_delay;
    Ok(RelaxationGap { ilp, lp, gap: ilp - lp })
}

/// The three-user, three-cache ring with two equally popular files, unit
/// rates, `d^h = 1`, `d^b = 3` and one slot per cache.
pub fn odd_cycle_instance() -> ProblemInstance {
    use crate::model::UncachedModel;
    ProblemInstance {
        num_users: 3,
        num_files: 2,
        num_caches: 3,
        request_rate: vec![1.0; 3],
        popularity: vec![vec![0.5, 0.5]; 3],
        adjacency: vec![
            vec![true, true, false],
            vec![false, true, true],
            vec![true, false, true],
        ],
        hit_delay: vec![vec![1.0; 3]; 3],
        miss_delay: vec![vec![4.0; 3]; 3],
        uncached_base_delay: vec![3.0; 3],
        cache_capacity: vec![1; 3],
        uncached_model: UncachedModel::CongestionInsensitive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UncachedModel;

    fn matching_instance(rates: &[f64], hit: f64, base: f64, capacity: usize) -> ProblemInstance {
        let n = rates.len();
        ProblemInstance {
            num_users: n,
            num_files: n,
            num_caches: 1,
            request_rate: rates.to_vec(),
            popularity: (0..n)
                .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
                .collect(),
            adjacency: vec![vec![true]; n],
            hit_delay: vec![vec![hit]; n],
            miss_delay: vec![vec![hit + 25.0]; n],
            uncached_base_delay: vec![base; n],
            cache_capacity: vec![capacity],
            uncached_model: UncachedModel::CongestionInsensitive,
        }
    }

    #[test]
    fn single_edge_is_matched() {
        let inst = matching_instance(&[2.0], 1.0, 5.0, 1);
        let sol = solve_one_file_per_user(&inst).unwrap();
        assert_eq!(sol.placement, Placement::from_sets([[0]]));
        assert_eq!(sol.average_delay(), 1.0);
    }

    #[test]
    fn heaviest_edge_wins() {
        // d^b − d^h = 1, so gains equal the rates (8, 2, 5).
        let inst = matching_instance(&[8.0, 2.0, 5.0], 4.0, 5.0, 1);
        let graph = MicroCacheGraph::build(&inst).unwrap();
        assert_eq!(graph.max_matching().1, 8.0);
        let sol = solve_one_file_per_user(&inst).unwrap();
        assert_eq!(sol.placement, Placement::from_sets([[0]]));
        let base: f64 = 15.0 * 5.0;
        assert!((sol.average_delay() - (base - 8.0) / 15.0).abs() < 1e-12);
    }

    #[test]
    fn non_improving_edges_are_not_placed() {
        let inst = matching_instance(&[1.0, 1.0], 6.0, 5.0, 2);
        let sol = solve_one_file_per_user(&inst).unwrap();
        assert!(sol.placement.is_empty());
    }

    #[test]
    fn pattern_violations_are_rejected() {
        let mut inst = matching_instance(&[1.0, 1.0], 1.0, 5.0, 1);
        inst.popularity[1] = vec![1.0, 0.0];
        assert!(matches!(solve_one_file_per_user(&inst), Err(Error::NotOneFilePerUser(_))));
        inst.popularity[1] = vec![0.5, 0.5];
        assert!(matches!(solve_one_file_per_user(&inst), Err(Error::NotOneFilePerUser(_))));
    }

    #[test]
    fn odd_cycle_gap_is_one_third() {
        let g = relaxation_gap(&odd_cycle_instance()).unwrap();
        assert!((g.ilp - 4.0 / 3.0).abs() < 1e-9, "{g:?}");
        assert!((g.lp - 1.0).abs() < 1e-9, "{g:?}");
        assert!((g.gap - 1.0 / 3.0).abs() < 1e-9, "{g:?}");
    }

    #[test]
    fn two_caches_with_room_for_everything() {
        let mut inst = odd_cycle_instance();
        inst.num_caches = 2;
        for i in 0..3 {
            inst.adjacency[i] = vec![true, i != 1];
            inst.hit_delay[i] = vec![1.0, 1.0];
            inst.miss_delay[i] = vec![4.0, 4.0];
        }
        inst.cache_capacity = vec![2, 2];
        let sol = solve_two_cache_lp(&inst).unwrap();
        let best = brute_force_placement_with(&inst, DEFAULT_ENUMERATION_CAP, Execution::Sequential).unwrap();
        assert_eq!(best.placement, Placement::from_sets([vec![0, 1], vec![0, 1]]));
        assert_eq!(sol.average_delay(), 1.0);
        assert_eq!(best.average_delay(), 1.0);
    }

    #[test]
    fn two_cache_solver_checks_cache_count() {
        assert!(matches!(
            solve_two_cache_lp(&odd_cycle_instance()),
            Err(Error::NotTwoCaches(3))
        ));
    }
}
