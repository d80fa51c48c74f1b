//! Discrete-event simulation of request serving.
//!
//! Cache and path delays are deterministic constants. The back end, when
//! congestion-sensitive, is a FIFO single server with exponential service
//! whose sojourn times follow Lindley's recursion, so the M/M/1 term is
//! measured rather than assumed.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{Placement, ProblemInstance, RoutingPolicy};
use crate::workload::TraceSegment;

pub const BATCHES: usize = 20;
const LOAD_BLOCK: usize = 1000;
const LOAD_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimPolicy {
    /// Fixed cache contents; requests follow the routing fractions.
    Static { placement: Placement, routing: RoutingPolicy },
    /// LRU caches; connected users pick a uniform reachable cache with
    /// probability `probability`.
    PLru { probability: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Requests(usize),
    Time(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueAccounting {
    /// Only uncached requests enter the back-end queue.
    #[default]
    UncachedOnly,
    /// Cache misses also fetch through the queue.
    IncludeMissFetch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: SimPolicy,
    pub horizon: Horizon,
    pub seed: u64,
    pub warmup_fraction: f64,
    pub queue_accounting: QueueAccounting,
    pub record_file_stats: bool,
    /// Shadows every LRU cache with a naive reference list and panics on
    /// any divergence.
    pub check_lru: bool,
}

impl SimConfig {
    pub fn new(policy: SimPolicy, horizon: Horizon, seed: u64) -> Self {
        SimConfig {
            policy,
            horizon,
            seed,
            warmup_fraction: 0.1,
            queue_accounting: QueueAccounting::default(),
            record_file_stats: false,
            check_lru: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Workload<'a> {
    /// Poisson arrivals at rate `λ_i`, files drawn from `q_i·`.
    Poisson,
    /// Replay; record ids must index the instance's users and files.
    Trace(&'a TraceSegment),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileStats {
    /// `requests[m][j]` routed to cache `m` after warmup.
    pub requests: Vec<Vec<u64>>,
    pub hits: Vec<Vec<u64>>,
}

impl FileStats {
    pub fn hit_rate(&self, cache: usize, file: usize) -> Option<f64> {
        let r = self.requests[cache][file];
        (r > 0).then(|| self.hits[cache][file] as f64 / r as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub mean_delay: f64,
    /// 95% batch-means half-width.
    pub half_width: f64,
    pub hit_rate: Vec<f64>,
    /// Mean sojourn in the back-end queue (0 when nothing was queued).
    pub queue_delay: f64,
    /// Requests after warmup.
    pub requests: usize,
    pub warmup_requests: usize,
    pub queue_arrivals: usize,
    pub unstable: bool,
    pub file_stats: Option<FileStats>,
}

/// LRU list over file ids with O(1) touch and eviction.
#[derive(Clone, Debug)]
pub struct LruCache {
    capacity: usize,
    len: usize,
    head: usize,
    tail: usize,
    prev: Vec<usize>,
    next: Vec<usize>,
    present: Vec<bool>,
}

const NIL: usize = usize::MAX;

impl LruCache {
    pub fn new(capacity: usize, num_files: usize) -> Self {
        LruCache {
            capacity,
            len: 0,
            head: NIL,
            tail: NIL,
            prev: vec![NIL; num_files],
            next: vec![NIL; num_files],
            present: vec![false; num_files],
        }
    }

    pub fn contains(&self, file: usize) -> bool {
        self.present[file]
    }

    fn unlink(&mut self, f: usize) {
        let (p, n) = (self.prev[f], self.next[f]);
        if p == NIL {
            self.head = n;
        } else {
            self.next[p] = n;
        }
        if n == NIL {
            self.tail = p;
        } else {
            self.prev[n] = p;
        }
    }

    fn push_front(&mut self, f: usize) {
        self.prev[f] = NIL;
        self.next[f] = self.head;
        if self.head == NIL {
            self.tail = f;
        } else {
            self.prev[self.head] = f;
        }
        self.head = f;
    }

    /// References `file`; returns whether it was a hit. Misses insert at the
    /// head and evict the tail when full.
    pub fn access(&mut self, file: usize) -> bool {
        if self.present[file] {
            self.unlink(file);
            self.push_front(file);
            return true;
        }
        if self.capacity == 0 {
            return false;
        }
        if self.len == self.capacity {
            let victim = self.tail;
            self.unlink(victim);
            self.present[victim] = false;
            self.len -= 1;
        }
        self.push_front(file);
        self.present[file] = true;
        self.len += 1;
        false
    }

    /// Contents from most to least recently used.
    pub fn contents(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len);
        let mut f = self.head;
        while f != NIL {
            out.push(f);
            f = self.next[f];
        }
        out
    }
}

/// Naive move-to-front list used to cross-check [`LruCache`].
#[derive(Clone, Debug, Default)]
struct ReferenceLru {
    capacity: usize,
    order: Vec<usize>,
}

impl ReferenceLru {
    fn access(&mut self, file: usize) -> bool {
        let hit = if let Some(pos) = self.order.iter().position(|&f| f == file) {
            self.order.remove(pos);
            true
        } else {
            false
        };
        if self.capacity > 0 {
            self.order.insert(0, file);
            self.order.truncate(self.capacity);
        }
        hit
    }
}

/// Single-server FIFO queue with exponential service.
struct Queue {
    service: Exp<f64>,
    rate: f64,
    last_departure: f64,
    block_start: f64,
    block_count: usize,
    hot_blocks: usize,
    unstable: bool,
}

impl Queue {
    fn new(service_rate: f64) -> Self {
        Queue {
            service: Exp::new(service_rate).expect("positive service rate"),
            rate: service_rate,
            last_departure: f64::NEG_INFINITY,
            block_start: f64::NAN,
            block_count: 0,
            hot_blocks: 0,
            unstable: false,
        }
    }

    /// Sojourn time of an arrival at `t`.
    fn arrive(&mut self, t: f64, rng: &mut impl Rng) -> f64 {
        if self.block_count == 0 {
            self.block_start = t;
        }
        self.block_count += 1;
        if self.block_count == LOAD_BLOCK {
            let span = t - self.block_start;
            let hot = span <= 0.0 || (LOAD_BLOCK - 1) as f64 / span >= self.rate;
            self.hot_blocks = if hot { self.hot_blocks + 1 } else { 0 };
            self.unstable |= self.hot_blocks >= LOAD_WINDOW;
            self.block_count = 0;
        }
        let departure = t.max(self.last_departure) + self.service.sample(rng);
        self.last_departure = departure;
        departure - t
    }
}

struct Streams {
    arrivals: ChaCha8Rng,
    routing: ChaCha8Rng,
    selection: ChaCha8Rng,
    service: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Streams {
            arrivals: stream(0),
            routing: stream(1),
            selection: stream(2),
            service: stream(3),
        }
    }
}

enum Arrivals<'a> {
    Poisson {
        gaps: Exp<f64>,
        users: WeightedIndex<f64>,
        files: Vec<Option<WeightedIndex<f64>>>,
        now: f64,
    },
    Trace { records: &'a [crate::workload::TraceRecord], pos: usize },
}

impl Arrivals<'_> {
    fn next(&mut self, rng: &mut impl Rng) -> Option<(f64, usize, usize)> {
        match self {
            Arrivals::Poisson { gaps, users, files, now } => {
                *now += gaps.sample(rng);
                let i = users.sample(rng);
                let j = files[i].as_ref().expect("users with traffic have a popularity row").sample(rng);
                Some((*now, i, j))
            }
            Arrivals::Trace { records, pos } => {
                let r = records.get(*pos)?;
                *pos += 1;
                Some((r.timestamp, r.user, r.file))
            }
        }
    }
}

fn check_policy(instance: &ProblemInstance, config: &SimConfig) -> Result<()> {
    let mut problems = Vec::new();
    match &config.policy {
        SimPolicy::Static { placement, routing } => {
            if placement.stored.len() != instance.num_caches {
                problems.push(format!(
                    "placement has {} caches, instance has {}",
                    placement.stored.len(),
                    instance.num_caches
                ));
            } else {
                problems.extend(placement.validate(instance));
            }
            problems.extend(routing.validate(instance));
        }
        SimPolicy::PLru { probability } => {
            if !(0.0..=1.0).contains(probability) {
                problems.push(format!("p-LRU probability {probability} is outside [0, 1]"));
            }
        }
    }
    if !(0.0..1.0).contains(&config.warmup_fraction) {
        problems.push("warmup fraction must lie in [0, 1)".into());
    }
    match config.horizon {
        Horizon::Requests(0) => problems.push("horizon must be at least one request".into()),
        Horizon::Time(t) if !(t > 0.0) => problems.push("time horizon must be positive".into()),
        _ => {}
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInstance(problems))
    }
}

pub fn simulate(instance: &ProblemInstance, workload: Workload<'_>, config: &SimConfig) -> Result<SimReport> {
    check_policy(instance, config)?;
    let (n, k, m) = (instance.num_users, instance.num_files, instance.num_caches);
    let mut rng = Streams::new(config.seed);

    let mut arrivals = match workload {
        Workload::Poisson => {
            let weights: Vec<f64> = (0..n)
                .map(|i| instance.request_rate[i] * instance.popularity[i].iter().sum::<f64>())
                .collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidParameter("no traffic to simulate".into()));
            }
            Arrivals::Poisson {
                gaps: Exp::new(total).expect("positive rate"),
                users: WeightedIndex::new(&weights).expect("positive total"),
                files: instance
                    .popularity
                    .iter()
                    .map(|q| WeightedIndex::new(q).ok())
                    .collect(),
                now: 0.0,
            }
        }
        Workload::Trace(segment) => {
            if let Some(r) = segment.records.iter().find(|r| r.user >= n || r.file >= k) {
                return Err(Error::InvalidParameter(format!(
                    "trace request (user {}, file {}) is outside the instance",
                    r.user, r.file
                )));
            }
            Arrivals::Trace {
                records: &segment.records,
                pos: 0,
            }
        }
    };
    let origin = match &workload {
        Workload::Trace(s) => s.records.first().map_or(0.0, |r| r.timestamp),
        Workload::Poisson => 0.0,
    };
    let (limit_requests, limit_time) = match config.horizon {
        Horizon::Requests(r) => (r, f64::INFINITY),
        Horizon::Time(t) => (usize::MAX, t),
    };
    let planned = match (&workload, config.horizon) {
        (Workload::Trace(s), Horizon::Requests(r)) => r.min(s.len()),
        (_, Horizon::Requests(r)) => r,
        _ => 0,
    };
    let warmup_requests = (config.warmup_fraction * planned as f64).floor() as usize;
    let warmup_time = config.warmup_fraction * limit_time;

    let mut queue = instance.service_rate().map(Queue::new);
    let mut lru: Vec<LruCache> = match config.policy {
        SimPolicy::PLru { .. } => (0..m).map(|c| LruCache::new(instance.cache_capacity[c], k)).collect(),
        SimPolicy::Static { .. } => Vec::new(),
    };
    let mut shadow: Vec<ReferenceLru> = if config.check_lru {
        lru.iter()
            .map(|c| ReferenceLru {
                capacity: c.capacity,
                order: Vec::new(),
            })
            .collect()
    } else {
        Vec::new()
    };
    let caches_of: Vec<Vec<usize>> = (0..n).map(|i| instance.caches_of(i).collect()).collect();

    let mut delays = Vec::with_capacity(planned.saturating_sub(warmup_requests));
    let mut cache_requests = vec![0u64; m];
    let mut cache_hits = vec![0u64; m];
    let mut file_stats = config.record_file_stats.then(|| FileStats {
        requests: vec![vec![0; k]; m],
        hits: vec![vec![0; k]; m],
    });
    let mut queue_sum = 0.0;
    let mut queue_arrivals = 0usize;
    let mut warmup_seen = 0usize;

    for index in 0..limit_requests {
        let Some((t, i, j)) = arrivals.next(&mut rng.arrivals) else { break };
        let t = t - origin;
        if t > limit_time {
            break;
        }
        let measured = match config.horizon {
            Horizon::Requests(_) => index >= warmup_requests,
            Horizon::Time(_) => t >= warmup_time,
        };

        // Choose a cache, or None for the uncached path.
        let target = match &config.policy {
            SimPolicy::Static { routing, .. } => {
                let u: f64 = rng.routing.random();
                let mut acc = 0.0;
                let mut pick = None;
                for (c, f) in routing.class(i, j) {
                    acc += f;
                    if u < acc {
                        pick = Some(c);
                        break;
                    }
                }
                pick
            }
            SimPolicy::PLru { probability } => {
                let caches = &caches_of[i];
                let coin: f64 = rng.routing.random();
                if caches.is_empty() || coin >= *probability {
                    None
                } else {
                    Some(caches[rng.selection.random_range(0..caches.len())])
                }
            }
        };

        let delay = match target {
            Some(c) => {
                let hit = match &config.policy {
                    SimPolicy::Static { placement, .. } => placement.contains(c, j),
                    SimPolicy::PLru { .. } => {
                        let hit = lru[c].access(j);
                        if config.check_lru {
                            let expect = shadow[c].access(j);
                            assert_eq!(hit, expect, "LRU hit mismatch at cache {c}");
                            assert_eq!(lru[c].contents(), shadow[c].order, "LRU contents diverged at cache {c}");
                        }
                        hit
                    }
                };
                if measured {
                    cache_requests[c] += 1;
                    cache_hits[c] += u64::from(hit);
                    if let Some(fs) = file_stats.as_mut() {
                        fs.requests[c][j] += 1;
                        fs.hits[c][j] += u64::from(hit);
                    }
                }
                if hit {
                    instance.hit_delay[i][c]
                } else {
                    let mut d = instance.miss_delay[i][c];
                    if config.queue_accounting == QueueAccounting::IncludeMissFetch {
                        if let Some(q) = queue.as_mut() {
                            let s = q.arrive(t, &mut rng.service);
                            if measured {
                                queue_sum += s;
                                queue_arrivals += 1;
                            }
                            d += s;
                        }
                    }
                    d
                }
            }
            None => {
                let mut d = instance.uncached_base_delay[i];
                if let Some(q) = queue.as_mut() {
                    let s = q.arrive(t, &mut rng.service);
                    if measured {
                        queue_sum += s;
                        queue_arrivals += 1;
                    }
                    d += s;
                }
                d
            }
        };
        if measured {
            delays.push(delay);
        } else {
            warmup_seen += 1;
        }
    }

    let (mean_delay, half_width) = batch_means(&delays);
    Ok(SimReport {
        mean_delay,
        half_width,
        hit_rate: cache_hits
            .iter()
            .zip(&cache_requests)
            .map(|(&h, &r)| if r > 0 { h as f64 / r as f64 } else { 0.0 })
            .collect(),
        queue_delay: if queue_arrivals > 0 {
            queue_sum / queue_arrivals as f64
        } else {
            0.0
        },
        requests: delays.len(),
        warmup_requests: warmup_seen,
        queue_arrivals,
        unstable: queue.is_some_and(|q| q.unstable),
        file_stats,
    })
}

/// Overall mean and the 95% half-width from [`BATCHES`] contiguous batches.
pub fn batch_means(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::INFINITY);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if samples.len() < BATCHES {
        return (mean, f64::INFINITY);
    }
    let means: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let lo = b * samples.len() / BATCHES;
            let hi = (b + 1) * samples.len() / BATCHES;
            samples[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (mean, student_t_quantile(BATCHES - 1) * (var / BATCHES as f64).sqrt())
}

/// Two-sided 95% Student-t critical value.
pub fn student_t_quantile(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny;
    use crate::model::UncachedModel;
    use crate::routing::optimal_routing;

    #[test]
    fn lru_evicts_least_recent() {
        let mut c = LruCache::new(2, 4);
        assert!(!c.access(0));
        assert!(!c.access(1));
        assert!(c.access(0));
        assert!(!c.access(2));
        assert_eq!(c.contents(), vec![2, 0]);
        assert!(!c.contains(1));
        let mut z = LruCache::new(0, 3);
        assert!(!z.access(1) && !z.access(1));
    }

    #[test]
    fn t_quantile() {
        assert!((student_t_quantile(19) - 2.093).abs() < 1e-3);
    }

    #[test]
    fn identical_seeds_replay_exactly() {
        let inst = tiny().with_model(UncachedModel::CongestionSensitive { service_rate: 3.0 });
        let placement = Placement::from_sets([[0]]);
        let routing = optimal_routing(&inst, &placement);
        let cfg = SimConfig::new(SimPolicy::Static { placement, routing }, Horizon::Requests(5000), 7);
        let a = simulate(&inst, Workload::Poisson, &cfg).unwrap();
        let b = simulate(&inst, Workload::Poisson, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.requests, 4500);
    }

    #[test]
    fn shadow_check_passes() {
        let inst = tiny();
        let mut cfg = SimConfig::new(SimPolicy::PLru { probability: 1.0 }, Horizon::Requests(2000), 1);
        cfg.check_lru = true;
        let r = simulate(&inst, Workload::Poisson, &cfg).unwrap();
        assert!(r.hit_rate[0] > 0.0 && r.hit_rate[0] < 1.0);
    }

    #[test]
    fn time_horizon_stops() {
        let inst = tiny();
        let cfg = SimConfig::new(SimPolicy::PLru { probability: 0.0 }, Horizon::Time(100.0), 1);
        let r = simulate(&inst, Workload::Poisson, &cfg).unwrap();
        // Rate 2 over 90 measured time units.
        assert!((100..300).contains(&r.requests), "{}", r.requests);
        assert_eq!(r.mean_delay, 5.0);
    }
}
