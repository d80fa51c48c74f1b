//! Problem instance, placement and routing data model.
//!
//! Indices are plain `usize`: users `0..num_users`, files `0..num_files`,
//! caches `0..num_caches`. Matrices are stored row-major as nested vectors,
//! which is also their JSON layout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance on popularity row sums.
pub const POPULARITY_TOL: f64 = 1e-9;
/// Absolute tolerance on routing sums.
pub const ROUTING_TOL: f64 = 1e-12;

/// A delay that may be infinite.
///
/// Finite values serialize as JSON numbers, the infinite sentinel as the
/// string `"infinity"`. Ordering is total with infinity above every finite
/// value.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Delay(pub f64);

impl Delay {
    pub const INFINITE: Delay = Delay(f64::INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl From<f64> for Delay {
    fn from(v: f64) -> Self {
        Delay(v)
    }
}

impl PartialOrd for Delay {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.0.total_cmp(&other.0))
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("infinity")
        }
    }
}

impl Serialize for Delay {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("infinity")
        }
    }
}

impl<'de> Deserialize<'de> for Delay {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct DelayVisitor;
        impl Visitor<'_> for DelayVisitor {
            type Value = Delay;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or the string \"infinity\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Delay, E> {
                Ok(Delay(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Delay, E> {
                Ok(Delay(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Delay, E> {
                Ok(Delay(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Delay, E> {
                match v {
                    "infinity" => Ok(Delay::INFINITE),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(DelayVisitor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UncachedModel {
    /// Constant delay `d^b_i` on the direct path.
    CongestionInsensitive,
    /// Base delay plus an M/M/1 queue with the given service rate.
    CongestionSensitive { service_rate: f64 },
}

impl UncachedModel {
    pub fn service_rate(&self) -> Option<f64> {
        match *self {
            UncachedModel::CongestionInsensitive => None,
            UncachedModel::CongestionSensitive { service_rate } => Some(service_rate),
        }
    }

    pub fn is_congestion_sensitive(&self) -> bool {
        matches!(self, UncachedModel::CongestionSensitive { .. })
    }
}

/// Users, caches, catalog, delays and demand of one hybrid cache network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub num_users: usize,
    pub num_files: usize,
    pub num_caches: usize,
    /// Poisson request rate of each user.
    pub request_rate: Vec<f64>,
    /// `popularity[i][j]`: probability that a request of user `i` is for file `j`.
    pub popularity: Vec<Vec<f64>>,
    /// `adjacency[i][m]`: whether user `i` can reach cache `m`.
    pub adjacency: Vec<Vec<bool>>,
    pub hit_delay: Vec<Vec<f64>>,
    pub miss_delay: Vec<Vec<f64>>,
    pub uncached_base_delay: Vec<f64>,
    pub cache_capacity: Vec<usize>,
    pub uncached_model: UncachedModel,
}

impl ProblemInstance {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// Aggregate request rate `λ = Σ λ_i`.
    pub fn total_rate(&self) -> f64 {
        self.request_rate.iter().sum()
    }

    /// Request rate of the demand class `(user, file)`, `λ_i q_ij`.
    #[inline]
    pub fn class_rate(&self, user: usize, file: usize) -> f64 {
        self.request_rate[user] * self.popularity[user][file]
    }

    #[inline]
    pub fn is_connected(&self, user: usize, cache: usize) -> bool {
        self.adjacency[user][cache]
    }

    /// Whether the user reaches at least one cache.
    pub fn has_cache(&self, user: usize) -> bool {
        self.adjacency[user].iter().any(|&a| a)
    }

    pub fn caches_of(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[user]
            .iter()
            .enumerate()
            .filter_map(|(m, &a)| a.then_some(m))
    }

    pub fn service_rate(&self) -> Option<f64> {
        self.uncached_model.service_rate()
    }

    pub fn with_model(&self, model: UncachedModel) -> Self {
        ProblemInstance {
            uncached_model: model,
            ..self.clone()
        }
    }

    /// Lists every broken invariant; empty when the instance is well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let (n, k, m) = (self.num_users, self.num_files, self.num_caches);
        if n == 0 {
            v.push("num_users must be positive".to_string());
        }
        if k == 0 {
            v.push("num_files must be positive".to_string());
        }
        check_len(&mut v, "request_rate", self.request_rate.len(), n);
        check_len(&mut v, "uncached_base_delay", self.uncached_base_delay.len(), n);
        check_len(&mut v, "cache_capacity", self.cache_capacity.len(), m);
        check_matrix(&mut v, "popularity", self.popularity.iter().map(Vec::len), n, k);
        check_matrix(&mut v, "adjacency", self.adjacency.iter().map(Vec::len), n, m);
        check_matrix(&mut v, "hit_delay", self.hit_delay.iter().map(Vec::len), n, m);
        check_matrix(&mut v, "miss_delay", self.miss_delay.iter().map(Vec::len), n, m);
        if !v.is_empty() {
            // Shapes are broken; element checks would index out of bounds.
            return v;
        }

        for (i, &rate) in self.request_rate.iter().enumerate() {
            if !(rate.is_finite() && rate >= 0.0) {
                v.push(format!("request_rate[{i}] = {rate} must be finite and non-negative"));
            }
        }
        if self.total_rate() <= 0.0 {
            v.push("aggregate request rate must be positive".to_string());
        }
        for (i, row) in self.popularity.iter().enumerate() {
            if let Some(j) = row.iter().position(|q| !(q.is_finite() && *q >= 0.0)) {
                v.push(format!("popularity[{i}][{j}] = {} is not a probability", row[j]));
                continue;
            }
            let sum: f64 = row.iter().sum();
            // An all-zero row is a silent user.
            if sum != 0.0 && (sum - 1.0).abs() > POPULARITY_TOL {
                v.push(format!("popularity row {i} sums to {sum}, expected 1"));
            }
        }
        for i in 0..n {
            let db = self.uncached_base_delay[i];
            if !(db.is_finite() && db >= 0.0) {
                v.push(format!("uncached_base_delay[{i}] = {db} must be finite and non-negative"));
            }
            for c in 0..m {
                let (h, mi) = (self.hit_delay[i][c], self.miss_delay[i][c]);
                if !(h.is_finite() && h >= 0.0) {
                    v.push(format!("hit_delay[{i}][{c}] = {h} must be finite and non-negative"));
                }
                if !(mi.is_finite() && mi >= 0.0) {
                    v.push(format!("miss_delay[{i}][{c}] = {mi} must be finite and non-negative"));
                }
                if self.adjacency[i][c] && mi <= h {
                    v.push(format!(
                        "miss_delay[{i}][{c}] = {mi} must exceed hit_delay[{i}][{c}] = {h}"
                    ));
                }
            }
        }
        for (c, &cap) in self.cache_capacity.iter().enumerate() {
            if cap == 0 {
                v.push(format!("cache_capacity[{c}] must be at least 1"));
            }
        }
        if let UncachedModel::CongestionSensitive { service_rate } = self.uncached_model {
            if !(service_rate.is_finite() && service_rate > 0.0) {
                v.push(format!("service_rate = {service_rate} must be finite and positive"));
            }
        }
        v
    }

    /// Fails with every violation when the instance is malformed.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(v))
        }
    }

    /// `d_ij(x)`: best cached-path delay for `(user, file)` under `placement`,
    /// counting hits and misses. Infinite when the user reaches no cache.
    pub fn cached_delay(&self, placement: &Placement, user: usize, file: usize) -> f64 {
        self.best_cache(placement, user, file)
            .map_or(f64::INFINITY, |(_, d)| d)
    }

    /// Connected cache realizing `d_ij(x)`; ties go to the lowest index.
    pub fn best_cache(&self, placement: &Placement, user: usize, file: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for m in self.caches_of(user) {
            let d = if placement.contains(m, file) {
                self.hit_delay[user][m]
            } else {
                self.miss_delay[user][m]
            };
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((m, d));
            }
        }
        best
    }

    /// Connected cache holding `file` with the smallest hit delay.
    pub fn best_hit_cache(&self, placement: &Placement, user: usize, file: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for m in self.caches_of(user) {
            if placement.contains(m, file) {
                let d = self.hit_delay[user][m];
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((m, d));
                }
            }
        }
        best
    }

    /// Smallest miss delay over the connected caches (infinite if none).
    pub fn min_miss_delay(&self, user: usize) -> f64 {
        self.caches_of(user)
            .map(|m| self.miss_delay[user][m])
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_len(v: &mut Vec<String>, field: &str, got: usize, want: usize) {
    if got != want {
        v.push(format!("{field} has length {got}, expected {want}"));
    }
}

fn check_matrix(
    v: &mut Vec<String>,
    field: &str,
    rows: impl ExactSizeIterator<Item = usize>,
    n_rows: usize,
    n_cols: usize,
) {
    if rows.len() != n_rows {
        v.push(format!("{field} has {} rows, expected {n_rows}", rows.len()));
        return;
    }
    for (i, len) in rows.enumerate() {
        if len != n_cols {
            v.push(format!("{field} row {i} has length {len}, expected {n_cols}"));
        }
    }
}

/// Files stored at each cache (the set form of `x_jm`).
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub stored: Vec<BTreeSet<usize>>,
}

impl Placement {
    pub fn empty(num_caches: usize) -> Self {
        Placement {
            stored: vec![BTreeSet::new(); num_caches],
        }
    }

    pub fn from_sets<I, S>(sets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = usize>,
    {
        Placement {
            stored: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    #[inline]
    pub fn contains(&self, cache: usize, file: usize) -> bool {
        self.stored[cache].contains(&file)
    }

    pub fn insert(&mut self, cache: usize, file: usize) -> bool {
        self.stored[cache].insert(file)
    }

    pub fn with(&self, cache: usize, file: usize) -> Self {
        let mut p = self.clone();
        p.insert(cache, file);
        p
    }

    /// Total number of stored (file, cache) items.
    pub fn len(&self) -> usize {
        self.stored.iter().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_subset_of(&self, other: &Placement) -> bool {
        self.stored.len() == other.stored.len()
            && self
                .stored
                .iter()
                .zip(&other.stored)
                .all(|(a, b)| a.is_subset(b))
    }

    pub fn validate(&self, instance: &ProblemInstance) -> Vec<String> {
        let mut v = Vec::new();
        if self.stored.len() != instance.num_caches {
            v.push(format!(
                "placement has {} caches, instance has {}",
                self.stored.len(),
                instance.num_caches
            ));
            return v;
        }
        for (m, set) in self.stored.iter().enumerate() {
            if set.len() > instance.cache_capacity[m] {
                v.push(format!(
                    "cache {m} stores {} files, capacity {}",
                    set.len(),
                    instance.cache_capacity[m]
                ));
            }
            if let Some(&j) = set.iter().find(|&&j| j >= instance.num_files) {
                v.push(format!("cache {m} stores unknown file {j}"));
            }
        }
        v
    }
}

/// Fractions `p_ijm` of each demand class sent to each cache. Whatever is
/// not routed to a cache takes the uncached path. Zero fractions are not
/// stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoutingPolicy {
    to_cache: BTreeMap<(usize, usize, usize), f64>,
}

#[derive(Serialize, Deserialize)]
struct RoutingEntry {
    user: usize,
    file: usize,
    cache: usize,
    fraction: f64,
}

impl Serialize for RoutingPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<RoutingEntry> = self
            .to_cache
            .iter()
            .map(|(&(user, file, cache), &fraction)| RoutingEntry {
                user,
                file,
                cache,
                fraction,
            })
            .collect();
        #[derive(Serialize)]
        struct Wire {
            to_cache: Vec<RoutingEntry>,
        }
        Wire { to_cache: entries }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RoutingPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            to_cache: Vec<RoutingEntry>,
        }
        let wire = Wire::deserialize(d)?;
        let mut policy = RoutingPolicy::default();
        for e in wire.to_cache {
            policy.set(e.user, e.file, e.cache, e.fraction);
        }
        Ok(policy)
    }
}

impl RoutingPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, user: usize, file: usize, cache: usize, fraction: f64) {
        if fraction > 0.0 {
            self.to_cache.insert((user, file, cache), fraction);
        } else {
            self.to_cache.remove(&(user, file, cache));
        }
    }

    pub fn get(&self, user: usize, file: usize, cache: usize) -> f64 {
        self.to_cache.get(&(user, file, cache)).copied().unwrap_or(0.0)
    }

    /// Cache fractions of one demand class as `(cache, fraction)` pairs.
    pub fn class(&self, user: usize, file: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.to_cache
            .range((user, file, 0)..=(user, file, usize::MAX))
            .map(|(&(_, _, m), &p)| (m, p))
    }

    /// `Σ_m p_ijm`, the cached share of the class.
    pub fn cached_share(&self, user: usize, file: usize) -> f64 {
        self.class(user, file).map(|(_, p)| p).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        self.to_cache.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.to_cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_cache.is_empty()
    }

    pub fn validate(&self, instance: &ProblemInstance) -> Vec<String> {
        let mut v = Vec::new();
        let mut sums: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(i, j, m), &p) in &self.to_cache {
            if i >= instance.num_users || j >= instance.num_files || m >= instance.num_caches {
                v.push(format!("routing entry ({i}, {j}, {m}) is out of range"));
                continue;
            }
            if !(0.0..=1.0).contains(&p) {
                v.push(format!("p[{i}][{j}][{m}] = {p} is not a fraction"));
            }
            if !instance.adjacency[i][m] {
                v.push(format!("p[{i}][{j}][{m}] = {p} routes to an unreachable cache"));
            }
            *sums.entry((i, j)).or_default() += p;
        }
        for ((i, j), s) in sums {
            if s > 1.0 + ROUTING_TOL {
                v.push(format!("class ({i}, {j}) routes {s} > 1 to caches"));
            }
        }
        v
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Two users, two files, one cache reachable by both.
    pub(crate) fn tiny() -> ProblemInstance {
        ProblemInstance {
            num_users: 2,
            num_files: 2,
            num_caches: 1,
            request_rate: vec![1.0, 1.0],
            popularity: vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            adjacency: vec![vec![true], vec![true]],
            hit_delay: vec![vec![1.0], vec![2.0]],
            miss_delay: vec![vec![30.0], vec![31.0]],
            uncached_base_delay: vec![5.0, 5.0],
            cache_capacity: vec![1],
            uncached_model: UncachedModel::CongestionInsensitive,
        }
    }

    #[test]
    fn well_formed_instance_has_no_violations() {
        assert!(tiny().validate().is_empty());
    }

    #[test]
    fn popularity_row_sum_is_checked() {
        let mut inst = tiny();
        inst.popularity[1] = vec![0.6, 0.3];
        let v = inst.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("popularity row 1"), "{v:?}");
    }

    #[test]
    fn miss_must_exceed_hit_on_connected_pairs() {
        let mut inst = tiny();
        inst.miss_delay[0][0] = inst.hit_delay[0][0];
        let v = inst.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("miss_delay[0][0]"), "{v:?}");
        // Disconnected pairs are unconstrained.
        inst.miss_delay[0][0] = 30.0;
        inst.adjacency[1][0] = false;
        inst.miss_delay[1][0] = 0.0;
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn silent_user_is_allowed() {
        let mut inst = tiny();
        inst.popularity[1] = vec![0.0, 0.0];
        inst.request_rate[1] = 0.0;
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn shape_errors_are_reported_without_panicking() {
        let mut inst = tiny();
        inst.hit_delay.pop();
        let v = inst.validate();
        assert_eq!(v, vec!["hit_delay has 1 rows, expected 2".to_string()]);
    }

    #[test]
    fn cached_delay_cases() {
        let inst = tiny();
        let p = Placement::from_sets([[0]]);
        assert_eq!(inst.cached_delay(&p, 0, 0), 1.0);

        let mut two = tiny();
        two.num_caches = 2;
        for i in 0..2 {
            two.adjacency[i] = vec![true, true];
            two.hit_delay[i] = vec![1.0, 5.0];
            two.miss_delay[i] = vec![30.0, 27.0];
        }
        two.cache_capacity = vec![1, 1];
        let empty = Placement::empty(2);
        assert_eq!(two.cached_delay(&empty, 0, 1), 27.0);

        // Stored only at the far cache: its hit beats the near miss.
        two.miss_delay[0][0] = 26.0;
        let far = Placement::from_sets([vec![], vec![1]]);
        assert_eq!(two.cached_delay(&far, 0, 1), 5.0);
        assert_eq!(two.best_cache(&far, 0, 1), Some((1, 5.0)));
    }

    #[test]
    fn cached_delay_without_caches_is_infinite() {
        let mut inst = tiny();
        inst.adjacency[0][0] = false;
        assert_eq!(inst.cached_delay(&Placement::empty(1), 0, 0), f64::INFINITY);
    }

    #[test]
    fn instance_json_round_trip() {
        let mut inst = tiny();
        inst.uncached_model = UncachedModel::CongestionSensitive { service_rate: 2.5 };
        let s = inst.to_json();
        assert!(s.contains("\"type\": \"congestion_sensitive\""));
        assert!(s.contains("\"service_rate\": 2.5"));
        assert_eq!(ProblemInstance::from_json(&s).unwrap(), inst);
    }

    #[test]
    fn delay_sentinel_serialization() {
        assert_eq!(serde_json::to_string(&Delay(1.5)).unwrap(), "1.5");
        assert_eq!(serde_json::to_string(&Delay::INFINITE).unwrap(), "\"infinity\"");
        let back: Delay = serde_json::from_str("\"infinity\"").unwrap();
        assert!(!back.is_finite());
        assert!(Delay(1e300) < Delay::INFINITE);
    }

    #[test]
    fn routing_validation() {
        let inst = tiny();
        let mut r = RoutingPolicy::new();
        r.set(0, 0, 0, 0.7);
        assert!(r.validate(&inst).is_empty());
        let mut bad = inst.clone();
        bad.adjacency[0][0] = false;
        assert_eq!(r.validate(&bad).len(), 1);
        r.set(0, 0, 0, 1.5);
        assert!(!r.validate(&inst).is_empty());
    }

    #[test]
    fn routing_json_round_trip() {
        let mut r = RoutingPolicy::new();
        r.set(1, 0, 0, 0.25);
        r.set(0, 1, 0, 1.0);
        let s = serde_json::to_string(&r).unwrap();
        let back: RoutingPolicy = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.cached_share(1, 0), 0.25);
    }
}
