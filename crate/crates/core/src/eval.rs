//! Average-delay objective `D(x, p)` for both uncached-path models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Delay, Placement, ProblemInstance, RoutingPolicy, UncachedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub average_delay: Delay,
    /// Request rate entering the back-end queue (0 under the constant-delay model).
    pub queue_load: f64,
    /// Mean delay per request of each user; 0 for silent users.
    pub per_user_delay: Vec<Delay>,
    /// Share of the aggregate request rate routed to caches.
    pub cached_fraction: f64,
    pub stable: bool,
}

/// M/M/1 sojourn-weighted queue term `λ_q / (μ − λ_q)`, infinite when saturated.
pub fn queue_term(service_rate: f64, load: f64) -> f64 {
    if load >= service_rate {
        f64::INFINITY
    } else {
        load / (service_rate - load)
    }
}

/// Marginal queue cost `d/dλ_q [λ_q / (μ − λ_q)] = μ / (μ − λ_q)²`.
pub fn marginal_queue_cost(service_rate: f64, load: f64) -> f64 {
    if load >= service_rate {
        f64::INFINITY
    } else {
        service_rate / ((service_rate - load) * (service_rate - load))
    }
}

/// Constant-delay objective. Rejects congestion-sensitive instances.
pub fn eval_ci(
    instance: &ProblemInstance,
    placement: &Placement,
    routing: &RoutingPolicy,
) -> Result<EvaluationReport> {
    if instance.uncached_model.is_congestion_sensitive() {
        return Err(Error::WrongModel {
            operation: "eval_ci",
            expected: "congestion-insensitive",
        });
    }
    Ok(evaluate_with(instance, placement, routing, None))
}

/// Objective with the M/M/1 back-end queue. Saturation is reported through
/// `stable = false` and an infinite average delay.
pub fn eval_cs(
    instance: &ProblemInstance,
    placement: &Placement,
    routing: &RoutingPolicy,
) -> Result<EvaluationReport> {
    match instance.uncached_model {
        UncachedModel::CongestionSensitive { service_rate } => {
            Ok(evaluate_with(instance, placement, routing, Some(service_rate)))
        }
        UncachedModel::CongestionInsensitive => Err(Error::WrongModel {
            operation: "eval_cs",
            expected: "congestion-sensitive",
        }),
    }
}

/// Dispatches on the instance's model.
pub fn evaluate(instance: &ProblemInstance, placement: &Placement, routing: &RoutingPolicy) -> EvaluationReport {
    evaluate_with(instance, placement, routing, instance.service_rate())
}

fn evaluate_with(
    instance: &ProblemInstance,
    placement: &Placement,
    routing: &RoutingPolicy,
    service_rate: Option<f64>,
) -> EvaluationReport {
    let n = instance.num_users;
    let total = instance.total_rate();
    let mut path_cost = vec![0.0; n];
    let mut uncached_rate = vec![0.0; n];
    let mut cached_rate = 0.0;

    for i in 0..n {
        let db = instance.uncached_base_delay[i];
        for j in 0..instance.num_files {
            let w = instance.class_rate(i, j);
            if w == 0.0 {
                continue;
            }
            let mut share = 0.0;
            let mut cost = 0.0;
            for (m, p) in routing.class(i, j) {
                let d = if placement.contains(m, j) {
                    instance.hit_delay[i][m]
                } else {
                    instance.miss_delay[i][m]
                };
                share += p;
                cost += p * d;
            }
            let uncached = (1.0 - share).max(0.0);
            path_cost[i] += w * (cost + uncached * db);
            uncached_rate[i] += w * uncached;
            cached_rate += w * share;
        }
    }

    let queue_load: f64 = uncached_rate.iter().sum();
    let (per_request_queue, stable) = match service_rate {
        None => (0.0, true),
        Some(mu) if queue_load < mu => (1.0 / (mu - queue_load), true),
        Some(_) => (f64::INFINITY, false),
    };

    let per_user_delay = (0..n)
        .map(|i| {
            let rate: f64 = instance.request_rate[i] * instance.popularity[i].iter().sum::<f64>();
            if rate == 0.0 {
                return Delay(0.0);
            }
            let q = if uncached_rate[i] > 0.0 {
                uncached_rate[i] * per_request_queue
            } else {
                0.0
            };
            Delay((path_cost[i] + q) / rate)
        })
        .collect();

    let paths: f64 = path_cost.iter().sum();
    let average = match service_rate {
        None => paths / total,
        Some(mu) => {
            let q = queue_term(mu, queue_load);
            if q.is_finite() {
                (paths + q) / total
            } else {
                f64::INFINITY
            }
        }
    };

    EvaluationReport {
        average_delay: Delay(average),
        queue_load: if service_rate.is_some() { queue_load } else { 0.0 },
        per_user_delay,
        cached_fraction: (cached_rate / total).clamp(0.0, 1.0),
        stable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny;

    fn cs(inst: &ProblemInstance, mu: f64) -> ProblemInstance {
        inst.with_model(UncachedModel::CongestionSensitive { service_rate: mu })
    }

    #[test]
    fn all_uncached_is_rate_weighted_base_delay() {
        let mut inst = tiny();
        inst.request_rate = vec![1.0, 3.0];
        inst.uncached_base_delay = vec![4.0, 8.0];
        let r = eval_ci(&inst, &Placement::empty(1), &RoutingPolicy::new()).unwrap();
        assert_eq!(r.average_delay, Delay((4.0 + 24.0) / 4.0));
        assert_eq!(r.cached_fraction, 0.0);
    }

    #[test]
    fn single_hit() {
        let mut inst = tiny();
        inst.num_users = 1;
        inst.num_files = 1;
        inst.request_rate = vec![1.0];
        inst.popularity = vec![vec![1.0]];
        inst.adjacency.truncate(1);
        inst.hit_delay = vec![vec![1.0]];
        inst.miss_delay = vec![vec![30.0]];
        inst.uncached_base_delay = vec![5.0];
        let mut r = RoutingPolicy::new();
        r.set(0, 0, 0, 1.0);
        let rep = eval_ci(&inst, &Placement::from_sets([[0]]), &r).unwrap();
        assert_eq!(rep.average_delay, Delay(1.0));
        assert_eq!(rep.cached_fraction, 1.0);
    }

    #[test]
    fn two_users_hand_expansion() {
        // λ = (1, 3); user 0 hits its cached file at d^h = 2, user 1 goes uncached at d^b = 10.
        let inst = ProblemInstance {
            num_users: 2,
            num_files: 1,
            num_caches: 1,
            request_rate: vec![1.0, 3.0],
            popularity: vec![vec![1.0], vec![1.0]],
            adjacency: vec![vec![true], vec![false]],
            hit_delay: vec![vec![2.0], vec![0.0]],
            miss_delay: vec![vec![30.0], vec![0.0]],
            uncached_base_delay: vec![5.0, 10.0],
            cache_capacity: vec![1],
            uncached_model: UncachedModel::CongestionInsensitive,
        };
        let mut r = RoutingPolicy::new();
        r.set(0, 0, 0, 1.0);
        let rep = eval_ci(&inst, &Placement::from_sets([[0]]), &r).unwrap();
        assert_eq!(rep.average_delay, Delay(8.0));
        assert_eq!(rep.per_user_delay, vec![Delay(2.0), Delay(10.0)]);
    }

    #[test]
    fn eval_ci_rejects_cs() {
        let inst = cs(&tiny(), 3.0);
        assert!(eval_ci(&inst, &Placement::empty(1), &RoutingPolicy::new()).is_err());
        assert!(eval_cs(&tiny(), &Placement::empty(1), &RoutingPolicy::new()).is_err());
    }

    #[test]
    fn fully_cached_has_empty_queue() {
        let inst = cs(&tiny(), 0.5);
        let mut r = RoutingPolicy::new();
        r.set(0, 0, 0, 1.0);
        r.set(0, 1, 0, 1.0);
        r.set(1, 0, 0, 1.0);
        let rep = eval_cs(&inst, &Placement::from_sets([[0]]), &r).unwrap();
        assert_eq!(rep.queue_load, 0.0);
        assert!(rep.stable);
        // user 0: half hits at 1, half misses at 30; user 1 hits at 2.
        assert!((rep.average_delay.value() - (0.5 * 1.0 + 0.5 * 30.0 + 2.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_user_queue_substitution() {
        // λ = 1, p = 0, d^b = 5, μ = 2: 5 + 1/(2 − 1) = 6.
        let inst = ProblemInstance {
            num_users: 1,
            num_files: 1,
            num_caches: 0,
            request_rate: vec![1.0],
            popularity: vec![vec![1.0]],
            adjacency: vec![vec![]],
            hit_delay: vec![vec![]],
            miss_delay: vec![vec![]],
            uncached_base_delay: vec![5.0],
            cache_capacity: vec![],
            uncached_model: UncachedModel::CongestionSensitive { service_rate: 2.0 },
        };
        let rep = eval_cs(&inst, &Placement::empty(0), &RoutingPolicy::new()).unwrap();
        assert_eq!(rep.average_delay, Delay(6.0));
        assert_eq!(rep.queue_load, 1.0);
        assert_eq!(rep.per_user_delay, vec![Delay(6.0)]);

        let saturated = inst.with_model(UncachedModel::CongestionSensitive { service_rate: 1.0 });
        let rep = eval_cs(&saturated, &Placement::empty(0), &RoutingPolicy::new()).unwrap();
        assert!(!rep.stable);
        assert!(!rep.average_delay.is_finite());
    }

    #[test]
    fn queue_term_identity() {
        for &(mu, l) in &[(2.0, 1.0), (10.0, 3.3), (1.0, 0.0), (5.0, 4.999)] {
            let a = queue_term(mu, l);
            let b = mu / (mu - l) - 1.0;
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{mu} {l}");
        }
        assert!(queue_term(1.0, 1.0).is_infinite());
    }

    #[test]
    fn large_service_rate_approaches_ci() {
        let inst = tiny();
        let mut r = RoutingPolicy::new();
        r.set(0, 0, 0, 0.3);
        r.set(1, 0, 0, 1.0);
        let p = Placement::from_sets([[0]]);
        let ci = eval_ci(&inst, &p, &r).unwrap().average_delay.value();
        let big = eval_cs(&cs(&inst, 1e12), &p, &r).unwrap().average_delay.value();
        assert!((ci - big).abs() < 1e-6);
    }
}
