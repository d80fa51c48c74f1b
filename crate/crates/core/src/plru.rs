//! Analytical p-LRU baseline.
//!
//! Every user with at least one cache sends a request to a uniformly chosen
//! reachable LRU cache with probability `p` and to the back end otherwise.
//! Per-cache hit probabilities come from the characteristic-time (Che)
//! approximation `P(x_jm = 1) = 1 − exp(−r^m_j T_m)`, and `p` is chosen in
//! closed form by setting the derivative of the average delay to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Delay, ProblemInstance};

/// Relative bracket width at which the characteristic-time bisection stops.
pub const CHARACTERISTIC_TIME_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PLruModel {
    /// `r^m_j`, normalized to sum to one at every cache with any traffic.
    pub aggregate_popularity: Vec<Vec<f64>>,
    /// `T_m`; infinite when the cache holds every file it ever sees.
    pub characteristic_time: Vec<Delay>,
    pub hit_probability: Vec<Vec<f64>>,
    /// Users with at least one cache.
    pub connected_set: Vec<usize>,
    /// Number of caches reachable by each user.
    pub n_i: Vec<usize>,
    /// Average delay of the cached path, `D_c`.
    pub cached_path_delay: f64,
    pub p_star: f64,
}

/// Effective request rate of a user, `λ_i Σ_j q_ij`.
fn user_rate(instance: &ProblemInstance, user: usize) -> f64 {
    instance.request_rate[user] * instance.popularity[user].iter().sum::<f64>()
}

/// Solves `Σ_j (1 − exp(−r_j T)) = C` for `T`.
pub fn characteristic_time(popularity: &[f64], capacity: usize) -> f64 {
    let positive = popularity.iter().filter(|&&r| r > 0.0).count();
    if capacity == 0 {
        return 0.0;
    }
    if capacity >= positive {
        return f64::INFINITY;
    }
    let c = capacity as f64;
    let occupancy = |t: f64| -> f64 { popularity.iter().map(|&r| -(-r * t).exp_m1()).sum() };
    let mut hi = 1.0;
    while occupancy(hi) < c {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > CHARACTERISTIC_TIME_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if occupancy(mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn hit_probability(r: f64, t: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if t.is_infinite() {
        1.0
    } else {
        -(-r * t).exp_m1()
    }
}

pub fn build_plru(instance: &ProblemInstance) -> Result<PLruModel> {
    let (n, k, m) = (instance.num_users, instance.num_files, instance.num_caches);
    if m == 0 {
        return Err(Error::InvalidParameter("p-LRU needs at least one cache".into()));
    }
    let n_i: Vec<usize> = (0..n).map(|i| instance.caches_of(i).count()).collect();
    let connected_set: Vec<usize> = (0..n).filter(|&i| n_i[i] > 0).collect();

    let mut aggregate_popularity = vec![vec![0.0; k]; m];
    for &i in &connected_set {
        let share = instance.request_rate[i] / n_i[i] as f64;
        for c in instance.caches_of(i) {
            for (r, q) in aggregate_popularity[c].iter_mut().zip(&instance.popularity[i]) {
                *r += share * q;
            }
        }
    }
    for row in &mut aggregate_popularity {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|r| *r /= total);
        }
    }
    let times: Vec<f64> = aggregate_popularity
        .iter()
        .zip(&instance.cache_capacity)
        .map(|(r, &c)| characteristic_time(r, c))
        .collect();
    let hit: Vec<Vec<f64>> = aggregate_popularity
        .iter()
        .zip(&times)
        .map(|(row, &t)| row.iter().map(|&r| hit_probability(r, t)).collect())
        .collect();

    let mut model = PLruModel {
        aggregate_popularity,
        characteristic_time: times.into_iter().map(Delay).collect(),
        hit_probability: hit,
        connected_set,
        n_i,
        cached_path_delay: 0.0,
        p_star: 0.0,
    };
    model.cached_path_delay = cached_path_delay(instance, &model);
    model.p_star = optimal_probability(instance, &model);
    Ok(model)
}

/// `d^c_ij`: mean delay of a request of user `i` for file `j` sent to a
/// uniformly chosen reachable cache.
pub fn cache_access_delay(instance: &ProblemInstance, model: &PLruModel, user: usize, file: usize) -> f64 {
    let sum: f64 = instance
        .caches_of(user)
        .map(|c| {
            let h = model.hit_probability[c][file];
            h * instance.hit_delay[user][c] + (1.0 - h) * instance.miss_delay[user][c]
        })
        .sum();
    sum / model.n_i[user] as f64
}

fn cached_path_delay(instance: &ProblemInstance, model: &PLruModel) -> f64 {
    let mut rate = 0.0;
    let mut sum = 0.0;
    for &i in &model.connected_set {
        rate += user_rate(instance, i);
        for j in 0..instance.num_files {
            let w = instance.class_rate(i, j);
            if w > 0.0 {
                sum += w * cache_access_delay(instance, model, i, j);
            }
        }
    }
    if rate > 0.0 {
        sum / rate
    } else {
        0.0
    }
}

struct Aggregates {
    total: f64,
    connected: f64,
    connected_base: f64,
    disconnected: f64,
    disconnected_base: f64,
}

fn aggregates(instance: &ProblemInstance, model: &PLruModel) -> Aggregates {
    let mut a = Aggregates {
        total: 0.0,
        connected: 0.0,
        connected_base: 0.0,
        disconnected: 0.0,
        disconnected_base: 0.0,
    };
    for i in 0..instance.num_users {
        let w = user_rate(instance, i);
        let wb = w * instance.uncached_base_delay[i];
        a.total += w;
        if model.n_i[i] > 0 {
            a.connected += w;
            a.connected_base += wb;
        } else {
            a.disconnected += w;
            a.disconnected_base += wb;
        }
    }
    a
}

/// `D_LRU(p)`. Without a service rate the queue term is absent.
pub fn plru_delay(instance: &ProblemInstance, model: &PLruModel, p: f64) -> f64 {
    let a = aggregates(instance, model);
    let mut sum = p * a.connected * model.cached_path_delay
        + (1.0 - p) * a.connected_base
        + a.disconnected_base;
    if let Some(mu) = instance.service_rate() {
        let load = (1.0 - p) * a.connected + a.disconnected;
        if load >= mu {
            return f64::INFINITY;
        }
        sum += mu / (mu - load) - 1.0;
    }
    sum / a.total
}

/// Closed-form minimizer of [`plru_delay`] over `p ∈ [0, 1]`.
fn optimal_probability(instance: &ProblemInstance, model: &PLruModel) -> f64 {
    let a = aggregates(instance, model);
    if a.connected <= 0.0 {
        return 0.0;
    }
    // Extra delay per unit of connected traffic moved onto caches.
    let excess = a.connected * model.cached_path_delay - a.connected_base;
    let Some(mu) = instance.service_rate() else {
        return if excess < 0.0 { 1.0 } else { 0.0 };
    };
    if excess <= 0.0 {
        return 1.0;
    }
    let p = ((mu * a.connected / excess).sqrt() - mu + a.total) / a.connected;
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UncachedModel;

    fn one_cache(popularity: Vec<f64>, capacity: usize, mu: f64) -> ProblemInstance {
        let k = popularity.len();
        ProblemInstance {
            num_users: 2,
            num_files: k,
            num_caches: 1,
            request_rate: vec![1.0, 1.0],
            popularity: vec![popularity.clone(), popularity],
            adjacency: vec![vec![true], vec![false]],
            hit_delay: vec![vec![1.0]; 2],
            miss_delay: vec![vec![26.0]; 2],
            uncached_base_delay: vec![5.0; 2],
            cache_capacity: vec![capacity],
            uncached_model: UncachedModel::CongestionSensitive { service_rate: mu },
        }
    }

    #[test]
    fn two_equal_files_one_slot() {
        let t = characteristic_time(&[0.5, 0.5], 1);
        assert!((t - 2.0 * 2f64.ln()).abs() < 1e-9, "{t}");
        let model = build_plru(&one_cache(vec![0.5, 0.5], 1, 3.0)).unwrap();
        for &h in &model.hit_probability[0] {
            assert!((h - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn full_capacity_hits_everything() {
        let model = build_plru(&one_cache(vec![0.2, 0.3, 0.5], 3, 3.0)).unwrap();
        assert!(model.characteristic_time[0].value().is_infinite());
        assert_eq!(model.hit_probability[0], vec![1.0; 3]);
        assert_eq!(model.cached_path_delay, 1.0);
    }

    #[test]
    fn occupancy_matches_capacity() {
        let pop: Vec<f64> = (1..=50).map(|k| 1.0 / k as f64).collect();
        let total: f64 = pop.iter().sum();
        let pop: Vec<f64> = pop.iter().map(|p| p / total).collect();
        let model = build_plru(&one_cache(pop, 7, 3.0)).unwrap();
        let occ: f64 = model.hit_probability[0].iter().sum();
        assert!((occ - 7.0).abs() < 1e-6, "{occ}");
    }

    #[test]
    fn useless_cache_gives_zero_probability() {
        // An empty cache serves every request as a 26-unit miss, while the
        // queue at μ = 100 costs almost nothing beyond d^b = 5.
        let mut inst = one_cache(vec![0.5, 0.5], 1, 100.0);
        inst.cache_capacity = vec![0];
        let model = build_plru(&inst).unwrap();
        assert_eq!(model.p_star, 0.0);
    }

    #[test]
    fn endpoints() {
        let inst = one_cache(vec![0.5, 0.5], 1, 3.0);
        let model = build_plru(&inst).unwrap();
        // p = 0: both users uncached, load 2 at μ = 3.
        let d0 = (5.0 + 5.0 + 3.0 / (3.0 - 2.0) - 1.0) / 2.0;
        assert!((plru_delay(&inst, &model, 0.0) - d0).abs() < 1e-12);
        let d_c = model.cached_path_delay;
        let d1 = (d_c + 5.0 + 3.0 / (3.0 - 1.0) - 1.0) / 2.0;
        assert!((plru_delay(&inst, &model, 1.0) - d1).abs() < 1e-12);
    }

    #[test]
    fn closed_form_is_the_grid_minimum() {
        let inst = one_cache(vec![0.7, 0.2, 0.1], 1, 1.6);
        let model = build_plru(&inst).unwrap();
        let best = (0..=10_000)
            .map(|s| s as f64 / 10_000.0)
            .min_by(|a, b| plru_delay(&inst, &model, *a).total_cmp(&plru_delay(&inst, &model, *b)))
            .unwrap();
        assert!((best - model.p_star).abs() < 1e-3, "{best} vs {}", model.p_star);
    }
}
