//! Optimal request routing for a fixed placement.
//!
//! Under the constant-delay model every request for a file goes to the
//! fastest reachable cache holding it, when that beats the direct path.
//!
//! Under the M/M/1 model the objective is convex in the uncached shares.
//! Writing `g(L) = L / (μ − L)` for the queue term, sending a unit of class
//! `c` to the queue changes the cost by `d^b_c − d_c + g'(L)`, so at the
//! optimum there is a marginal queue cost `t = g'(λ_q) = μ / (μ − λ_q)²`
//! such that a class with gap `d_c − d^b_c` above `t` is fully uncached, a
//! class below `t` is fully cached, and classes exactly at `t` may split.
//! [`threshold_sweep`] finds `t` exactly by walking the classes in
//! decreasing gap order: the load only grows as `t` falls, so the first
//! group where `g'` meets the gap fixes the solution.

use serde::{Deserialize, Serialize};

use crate::eval::{marginal_queue_cost, queue_term};
use crate::model::{Delay, Placement, ProblemInstance, RoutingPolicy, UncachedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSolution {
    /// `t = μ / (μ − λ_q)²`; infinite when the mandatory load saturates the queue.
    pub marginal_queue_cost: Delay,
    pub queue_load: f64,
    /// Demand classes `(user, file)` split between a cache and the queue.
    pub split_classes: Vec<(usize, usize)>,
    pub stable: bool,
}

impl ThresholdSolution {
    /// Cached-path delay above which requests of `user` take the queue, `d^b_i + t`.
    pub fn threshold_for(&self, instance: &ProblemInstance, user: usize) -> f64 {
        instance.uncached_base_delay[user] + self.marginal_queue_cost.value()
    }
}

/// Outcome of [`threshold_sweep`] over classes sorted by decreasing gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sweep {
    pub marginal_cost: f64,
    pub load: f64,
    /// Leading classes sent fully to the queue.
    pub fully_uncached: usize,
    /// `(end, fraction)`: classes `fully_uncached..end` send `fraction` of
    /// their traffic to the queue.
    pub split: Option<(usize, f64)>,
    /// `Σ w_c u_c gap_c` over the uncached shares `u_c`.
    pub diverted_gap: f64,
    pub stable: bool,
}

/// Solves the fixed point `t = μ / (μ − λ_q(t))²` for classes given as
/// `(gap, rate)` pairs sorted by decreasing gap, on top of a mandatory
/// queue load that cannot use any cache.
pub fn threshold_sweep(classes: &[(f64, f64)], mandatory_load: f64, service_rate: f64) -> Sweep {
    let mu = service_rate;
    if mandatory_load >= mu {
        return Sweep {
            marginal_cost: f64::INFINITY,
            load: mandatory_load,
            fully_uncached: 0,
            split: None,
            diverted_gap: 0.0,
            stable: false,
        };
    }
    let mut load = mandatory_load;
    let mut diverted = 0.0;
    let mut idx = 0;
    while idx < classes.len() {
        let gap = classes[idx].0;
        let mut end = idx;
        let mut group_rate = 0.0;
        while end < classes.len() && classes[end].0 == gap {
            group_rate += classes[end].1;
            end += 1;
        }
        let t = marginal_queue_cost(mu, load);
        if t >= gap {
            return Sweep {
                marginal_cost: t,
                load,
                fully_uncached: idx,
                split: None,
                diverted_gap: diverted,
                stable: true,
            };
        }
        let after = load + group_rate;
        if after < mu && marginal_queue_cost(mu, after) <= gap {
            load = after;
            diverted += group_rate * gap;
            idx = end;
            continue;
        }
        // g'(load) < gap < g'(load + group_rate): the group is indifferent at t = gap.
        let target = mu - (mu / gap).sqrt();
        let fraction = ((target - load) / group_rate).clamp(0.0, 1.0);
        return Sweep {
            marginal_cost: gap,
            load: target,
            fully_uncached: idx,
            split: Some((end, fraction)),
            diverted_gap: diverted + fraction * group_rate * gap,
            stable: true,
        };
    }
    Sweep {
        marginal_cost: marginal_queue_cost(mu, load),
        load,
        fully_uncached: classes.len(),
        split: None,
        diverted_gap: diverted,
        stable: true,
    }
}

/// Best cached-path delay per demand class, row-major `N × K`.
///
/// `hits_only` tables count only caches that hold the file (the
/// constant-delay routing rule); the other kind also counts misses.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedDelays {
    num_files: usize,
    hits_only: bool,
    values: Vec<f64>,
}

impl CachedDelays {
    pub fn new(instance: &ProblemInstance, placement: &Placement, hits_only: bool) -> Self {
        let mut values = vec![f64::INFINITY; instance.num_users * instance.num_files];
        for i in 0..instance.num_users {
            let row = &mut values[i * instance.num_files..(i + 1) * instance.num_files];
            for (j, v) in row.iter_mut().enumerate() {
                *v = if hits_only {
                    instance
                        .best_hit_cache(placement, i, j)
                        .map_or(f64::INFINITY, |(_, d)| d)
                } else {
                    instance.cached_delay(placement, i, j)
                };
            }
        }
        CachedDelays {
            num_files: instance.num_files,
            hits_only,
            values,
        }
    }

    /// Table matching the routing rule of the instance's model.
    pub fn for_model(instance: &ProblemInstance, placement: &Placement) -> Self {
        Self::new(instance, placement, !instance.uncached_model.is_congestion_sensitive())
    }

    #[inline]
    pub fn get(&self, user: usize, file: usize) -> f64 {
        self.values[user * self.num_files + file]
    }

    /// Updates the table for `file` becoming available at `cache`.
    pub fn add(&mut self, instance: &ProblemInstance, cache: usize, file: usize) {
        for i in 0..instance.num_users {
            if instance.adjacency[i][cache] {
                let v = &mut self.values[i * self.num_files + file];
                *v = v.min(instance.hit_delay[i][cache]);
            }
        }
    }

    pub fn hits_only(&self) -> bool {
        self.hits_only
    }
}

/// Optimal average delay for the given cached-path delays, without building
/// the routing policy.
pub fn optimal_delay_from(instance: &ProblemInstance, delays: &CachedDelays) -> f64 {
    let total = instance.total_rate();
    match instance.uncached_model {
        UncachedModel::CongestionInsensitive => {
            let mut sum = 0.0;
            for i in 0..instance.num_users {
                let db = instance.uncached_base_delay[i];
                for j in 0..instance.num_files {
                    let w = instance.class_rate(i, j);
                    if w > 0.0 {
                        sum += w * delays.get(i, j).min(db);
                    }
                }
            }
            sum / total
        }
        UncachedModel::CongestionSensitive { service_rate } => {
            let mut classes = Vec::new();
            let mut mandatory = 0.0;
            let mut base = 0.0;
            for i in 0..instance.num_users {
                let db = instance.uncached_base_delay[i];
                for j in 0..instance.num_files {
                    let w = instance.class_rate(i, j);
                    if w == 0.0 {
                        continue;
                    }
                    let d = delays.get(i, j);
                    if d.is_finite() {
                        base += w * d;
                        classes.push((d - db, w));
                    } else {
                        mandatory += w;
                        base += w * db;
                    }
                }
            }
            classes.sort_by(|a, b| b.0.total_cmp(&a.0));
            let sweep = threshold_sweep(&classes, mandatory, service_rate);
            if !sweep.stable {
                return f64::INFINITY;
            }
            (base - sweep.diverted_gap + queue_term(service_rate, sweep.load)) / total
        }
    }
}

/// Optimal average delay of a placement under the model-appropriate routing.
pub fn optimal_delay(instance: &ProblemInstance, placement: &Placement) -> f64 {
    optimal_delay_from(instance, &CachedDelays::for_model(instance, placement))
}

/// `F(X) = −D(p*; x_X)`, the monotone submodular placement value.
pub fn submodular_value(instance: &ProblemInstance, placement: &Placement) -> f64 {
    -optimal_delay(instance, placement)
}

/// Constant-delay routing: each class goes entirely to its fastest
/// reachable cache holding the file when that is no slower than `d^b_i`.
pub fn optimal_routing_ci(instance: &ProblemInstance, placement: &Placement) -> RoutingPolicy {
    let mut policy = RoutingPolicy::new();
    for i in 0..instance.num_users {
        let db = instance.uncached_base_delay[i];
        for j in 0..instance.num_files {
            if let Some((m, d)) = instance.best_hit_cache(placement, i, j) {
                if d <= db {
                    policy.set(i, j, m, 1.0);
                }
            }
        }
    }
    policy
}

/// M/M/1 routing by the marginal-queue-cost threshold. Classes of rate zero
/// follow the threshold rule without affecting it.
///
/// When the traffic of users without caches alone saturates the queue the
/// policy routes every other class to its best cache and the returned
/// solution is marked unstable.
pub fn optimal_routing_cs(instance: &ProblemInstance, placement: &Placement) -> (RoutingPolicy, ThresholdSolution) {
    let mu = instance
        .service_rate()
        .expect("optimal_routing_cs requires the congestion-sensitive model");

    struct Class {
        user: usize,
        file: usize,
        cache: usize,
        gap: f64,
        rate: f64,
    }

    let mut weighted = Vec::new();
    let mut idle = Vec::new();
    let mut mandatory = 0.0;
    for i in 0..instance.num_users {
        let db = instance.uncached_base_delay[i];
        for j in 0..instance.num_files {
            let w = instance.class_rate(i, j);
            match instance.best_cache(placement, i, j) {
                None => mandatory += w,
                Some((m, d)) => {
                    let c = Class {
                        user: i,
                        file: j,
                        cache: m,
                        gap: d - db,
                        rate: w,
                    };
                    if w > 0.0 {
                        weighted.push(c);
                    } else {
                        idle.push(c);
                    }
                }
            }
        }
    }
    // Stable sort keeps (user, file) order among equal gaps.
    weighted.sort_by(|a, b| b.gap.total_cmp(&a.gap));
    let pairs: Vec<(f64, f64)> = weighted.iter().map(|c| (c.gap, c.rate)).collect();
    let sweep = threshold_sweep(&pairs, mandatory, mu);

    let mut policy = RoutingPolicy::new();
    let mut split_classes = Vec::new();
    let split_end = sweep.split.map_or(sweep.fully_uncached, |(end, _)| end);
    for (k, c) in weighted.iter().enumerate() {
        if k < sweep.fully_uncached {
            continue;
        }
        if k < split_end {
            let fraction = sweep.split.map_or(0.0, |(_, f)| f);
            split_classes.push((c.user, c.file));
            policy.set(c.user, c.file, c.cache, 1.0 - fraction);
        } else {
            policy.set(c.user, c.file, c.cache, 1.0);
        }
    }
    for c in &idle {
        if c.gap <= sweep.marginal_cost {
            policy.set(c.user, c.file, c.cache, 1.0);
        }
    }
    split_classes.sort_unstable();

    let solution = ThresholdSolution {
        marginal_queue_cost: Delay(sweep.marginal_cost),
        queue_load: sweep.load,
        split_classes,
        stable: sweep.stable,
    };
    (policy, solution)
}

/// Model-appropriate optimal routing.
pub fn optimal_routing(instance: &ProblemInstance, placement: &Placement) -> RoutingPolicy {
    match instance.uncached_model {
        UncachedModel::CongestionInsensitive => optimal_routing_ci(instance, placement),
        UncachedModel::CongestionSensitive { .. } => optimal_routing_cs(instance, placement).0,
    }
}
