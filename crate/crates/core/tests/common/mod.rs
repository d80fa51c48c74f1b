#![allow(dead_code)]

use cachenet::model::{Placement, ProblemInstance, UncachedModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub users: usize,
    pub files: usize,
    pub caches: usize,
    pub connect_prob: f64,
    /// Every user keeps at least one cache.
    pub all_connected: bool,
    pub homogeneous_base: bool,
}

impl Shape {
    pub fn new(users: usize, files: usize, caches: usize) -> Self {
        Shape {
            users,
            files,
            caches,
            connect_prob: 0.6,
            all_connected: false,
            homogeneous_base: false,
        }
    }
}

pub fn random_popularity(rng: &mut impl Rng, files: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..files).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random constant-delay instance; misses cost 25 more than hits, so they
/// are never worth more than the direct path.
pub fn random_ci(rng: &mut impl Rng, shape: Shape) -> ProblemInstance {
    let (n, k, m) = (shape.users, shape.files, shape.caches);
    let mut adjacency: Vec<Vec<bool>> = (0..n)
        .map(|_| (0..m).map(|_| rng.random::<f64>() < shape.connect_prob).collect())
        .collect();
    if shape.all_connected && m > 0 {
        for row in &mut adjacency {
            if !row.iter().any(|&a| a) {
                row[rng.random_range(0..m)] = true;
            }
        }
    }
    let hit_delay: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0.0..8.0)).collect())
        .collect();
    let miss_delay = hit_delay
        .iter()
        .map(|r| r.iter().map(|h| h + 25.0).collect())
        .collect();
    let base = rng.random_range(2.0..10.0);
    ProblemInstance {
        num_users: n,
        num_files: k,
        num_caches: m,
        request_rate: (0..n).map(|_| rng.random_range(0.2..2.0)).collect(),
        popularity: (0..n).map(|_| random_popularity(rng, k)).collect(),
        adjacency,
        hit_delay,
        miss_delay,
        uncached_base_delay: (0..n)
            .map(|_| if shape.homogeneous_base { base } else { rng.random_range(2.0..10.0) })
            .collect(),
        cache_capacity: (0..m).map(|_| rng.random_range(1..=k.max(1))).collect(),
        uncached_model: UncachedModel::CongestionInsensitive,
    }
}

/// Rate of the traffic that cannot reach any cache.
pub fn mandatory_load(instance: &ProblemInstance) -> f64 {
    (0..instance.num_users)
        .filter(|&i| !instance.has_cache(i))
        .map(|i| instance.request_rate[i] * instance.popularity[i].iter().sum::<f64>())
        .sum()
}

/// Random M/M/1 instance whose mandatory load leaves the queue stable.
/// Miss delays are drawn closer to the hits so that miss paths matter.
pub fn random_cs(rng: &mut impl Rng, shape: Shape) -> ProblemInstance {
    let mut inst = random_ci(rng, shape);
    for i in 0..inst.num_users {
        for c in 0..inst.num_caches {
            inst.miss_delay[i][c] = inst.hit_delay[i][c] + rng.random_range(0.5..15.0);
        }
    }
    let total = inst.total_rate();
    let mu = mandatory_load(&inst) + rng.random_range(0.2..1.5) * total;
    inst.uncached_model = UncachedModel::CongestionSensitive { service_rate: mu };
    inst
}

/// Random subset of all `(cache, file)` slots, capacity ignored.
pub fn random_slots(rng: &mut impl Rng, instance: &ProblemInstance, prob: f64) -> Placement {
    let mut p = Placement::empty(instance.num_caches);
    for c in 0..instance.num_caches {
        for j in 0..instance.num_files {
            if rng.random::<f64>() < prob {
                p.insert(c, j);
            }
        }
    }
    p
}

/// One distinct file per user, as a `N × N` identity popularity.
pub fn random_one_file_per_user(rng: &mut impl Rng, users: usize, caches: usize) -> ProblemInstance {
    let mut inst = random_ci(rng, Shape::new(users, users, caches));
    let mut files: Vec<usize> = (0..users).collect();
    files.shuffle(rng);
    for (i, &f) in files.iter().enumerate() {
        inst.popularity[i] = (0..users).map(|j| f64::from(u8::from(j == f))).collect();
    }
    for c in &mut inst.cache_capacity {
        *c = rng.random_range(1..users.max(2));
    }
    inst
}
