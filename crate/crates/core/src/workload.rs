//! Synthetic instances on a square field and request traces.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProblemInstance, UncachedModel};

pub const DEFAULT_SEGMENT_SIZE: usize = 120_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// One large cache at the center of the field.
    Single,
    /// Five small caches: four quadrant centers and the field center.
    Multi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub architecture: Architecture,
    pub field_side: f64,
    /// Communication radius; the architecture default when absent.
    pub radius: Option<f64>,
    /// Hit delay at the edge of the radius; the architecture default when absent.
    pub max_hit_delay: Option<f64>,
    pub miss_penalty: f64,
    pub base_delay: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            architecture: Architecture::Single,
            field_side: 10.0,
            radius: None,
            max_hit_delay: None,
            miss_penalty: 25.0,
            base_delay: 5.0,
        }
    }
}

impl LayoutParams {
    pub fn new(architecture: Architecture) -> Self {
        LayoutParams {
            architecture,
            ..Self::default()
        }
    }

    pub fn num_caches(&self) -> usize {
        match self.architecture {
            Architecture::Single => 1,
            Architecture::Multi => 5,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(match self.architecture {
            Architecture::Single => 0.6 * self.field_side,
            Architecture::Multi => 0.3 * self.field_side,
        })
    }

    pub fn max_hit_delay(&self) -> f64 {
        self.max_hit_delay.unwrap_or(match self.architecture {
            Architecture::Single => 12.5,
            Architecture::Multi => 5.5,
        })
    }

    pub fn cache_positions(&self) -> Vec<(f64, f64)> {
        let s = self.field_side;
        match self.architecture {
            Architecture::Single => vec![(0.5 * s, 0.5 * s)],
            Architecture::Multi => vec![
                (0.25 * s, 0.25 * s),
                (0.75 * s, 0.25 * s),
                (0.25 * s, 0.75 * s),
                (0.75 * s, 0.75 * s),
                (0.5 * s, 0.5 * s),
            ],
        }
    }
}

/// Users and caches placed on the field, with the delay law that turns
/// distances into hit and miss delays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricLayout {
    pub params: LayoutParams,
    pub user_positions: Vec<(f64, f64)>,
    pub cache_positions: Vec<(f64, f64)>,
}

impl GeometricLayout {
    pub fn with_users(params: LayoutParams, user_positions: Vec<(f64, f64)>) -> Self {
        GeometricLayout {
            cache_positions: params.cache_positions(),
            params,
            user_positions,
        }
    }

    pub fn random(params: LayoutParams, num_users: usize, rng: &mut impl Rng) -> Self {
        let s = params.field_side;
        let users = (0..num_users)
            .map(|_| (rng.random::<f64>() * s, rng.random::<f64>() * s))
            .collect();
        Self::with_users(params, users)
    }

    /// `(adjacency, hit_delay, miss_delay)`. Uncovered pairs keep the linear
    /// law so that miss exceeds hit everywhere, but are not adjacent.
    #[allow(clippy::type_complexity)]
    pub fn delays(&self) -> (Vec<Vec<bool>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let radius = self.params.radius();
        let max_hit = self.params.max_hit_delay();
        let mut adjacency = Vec::with_capacity(self.user_positions.len());
        let mut hit = Vec::with_capacity(self.user_positions.len());
        let mut miss = Vec::with_capacity(self.user_positions.len());
        for &(ux, uy) in &self.user_positions {
            let mut a = Vec::new();
            let mut h = Vec::new();
            let mut d = Vec::new();
            for &(cx, cy) in &self.cache_positions {
                let dist = (ux - cx).hypot(uy - cy);
                let hd = max_hit * dist / radius;
                a.push(dist <= radius);
                h.push(hd);
                d.push(hd + self.params.miss_penalty);
            }
            adjacency.push(a);
            hit.push(h);
            miss.push(d);
        }
        (adjacency, hit, miss)
    }

    /// Instance for the given rates and popularities, with the budget split
    /// evenly across caches (earlier caches take any remainder).
    pub fn instance(
        &self,
        request_rate: Vec<f64>,
        popularity: Vec<Vec<f64>>,
        cache_budget: usize,
        uncached_model: UncachedModel,
    ) -> ProblemInstance {
        let (adjacency, hit_delay, miss_delay) = self.delays();
        let n = self.user_positions.len();
        ProblemInstance {
            num_users: n,
            num_files: popularity.first().map_or(0, Vec::len),
            num_caches: self.cache_positions.len(),
            request_rate,
            popularity,
            adjacency,
            hit_delay,
            miss_delay,
            uncached_base_delay: vec![self.params.base_delay; n],
            cache_capacity: split_budget(cache_budget, self.cache_positions.len()),
            uncached_model,
        }
    }
}

pub fn split_budget(budget: usize, caches: usize) -> Vec<usize> {
    (0..caches)
        .map(|m| budget / caches + usize::from(m < budget % caches))
        .collect()
}

/// Zipf probabilities `∝ k^{-s}` for ranks `1..=n`.
pub fn zipf_weights(n: usize, skew: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-skew)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub layout: LayoutParams,
    pub num_users: usize,
    pub num_files: usize,
    pub zipf_skew: f64,
    /// Each user ranks the files by an independent random permutation.
    pub heterogeneous: bool,
    pub total_rate: f64,
    /// `μ / λ`; the constant-delay model when absent.
    pub service_ratio: Option<f64>,
    pub cache_budget: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            layout: LayoutParams::default(),
            num_users: 5,
            num_files: 15,
            zipf_skew: 0.6,
            heterogeneous: false,
            total_rate: 5.0,
            service_ratio: Some(0.2),
            cache_budget: 5,
        }
    }
}

/// Random positive rates summing to `total`.
pub fn random_rates(n: usize, total: f64, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r * total / sum).collect()
}

pub fn gen_instance(params: &GenParams, seed: u64) -> Result<ProblemInstance> {
    if !(params.zipf_skew >= 0.0) {
        return Err(Error::InvalidParameter("zipf skew must be non-negative".into()));
    }
    if params.num_users == 0 || params.num_files == 0 {
        return Err(Error::InvalidParameter("need at least one user and one file".into()));
    }
    if params.cache_budget < params.layout.num_caches() {
        return Err(Error::InvalidParameter(format!(
            "cache budget {} leaves some of the {} caches without a slot",
            params.cache_budget,
            params.layout.num_caches()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = GeometricLayout::random(params.layout.clone(), params.num_users, &mut rng);
    let rates = random_rates(params.num_users, params.total_rate, &mut rng);
    let zipf = zipf_weights(params.num_files, params.zipf_skew);
    let popularity = (0..params.num_users)
        .map(|_| {
            if params.heterogeneous {
                let mut ranks: Vec<usize> = (0..params.num_files).collect();
                ranks.shuffle(&mut rng);
                ranks.into_iter().map(|r| zipf[r]).collect()
            } else {
                zipf.clone()
            }
        })
        .collect();
    let model = match params.service_ratio {
        Some(r) => UncachedModel::CongestionSensitive {
            service_rate: r * params.total_rate,
        },
        None => UncachedModel::CongestionInsensitive,
    };
    let instance = layout.instance(rates, popularity, params.cache_budget, model);
    instance.ensure_valid()?;
    Ok(instance)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp: f64,
    pub user: usize,
    pub file: usize,
}

/// Requests with users and files re-indexed densely in order of first
/// appearance. Segments of one trace share the index tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub records: Vec<TraceRecord>,
    pub user_ids: Vec<String>,
    pub file_ids: Vec<String>,
}

impl TraceSegment {
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_files(&self) -> usize {
        self.file_ids.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }

    /// `count(i, j)` as a sparse map per user.
    pub fn counts(&self) -> Vec<HashMap<usize, u64>> {
        let mut c = vec![HashMap::new(); self.num_users()];
        for r in &self.records {
            *c[r.user].entry(r.file).or_insert(0) += 1;
        }
        c
    }

    /// Empirical `(λ_i, q_i·)`. A zero-length segment counts one request per
    /// time unit.
    pub fn empirical(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if self.records.is_empty() {
            return Err(Error::EmptySegment);
        }
        let duration = self.duration();
        let duration = if duration > 0.0 { duration } else { self.len() as f64 };
        let counts = self.counts();
        let mut rates = Vec::with_capacity(self.num_users());
        let mut popularity = Vec::with_capacity(self.num_users());
        for row in &counts {
            let total: u64 = row.values().sum();
            let mut q = vec![0.0; self.num_files()];
            for (&j, &c) in row {
                q[j] = c as f64 / total as f64;
            }
            rates.push(total as f64 / duration);
            popularity.push(q);
        }
        Ok((rates, popularity))
    }
}

pub fn read_trace(reader: impl Read) -> Result<TraceSegment> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.len() != 3 || &headers[0] != "timestamp" || &headers[1] != "user" || &headers[2] != "file" {
        return Err(Error::TraceParse {
            line: 1,
            message: "expected header `timestamp,user,file`".into(),
        });
    }
    let mut users: HashMap<String, usize> = HashMap::new();
    let mut files: HashMap<String, usize> = HashMap::new();
    let mut segment = TraceSegment {
        records: Vec::new(),
        user_ids: Vec::new(),
        file_ids: Vec::new(),
    };
    let mut last = f64::NEG_INFINITY;
    for row in csv.records() {
        let row = row.map_err(|e| Error::TraceParse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let fail = |message: String| Error::TraceParse { line, message };
        if row.len() != 3 {
            return Err(fail(format!("expected 3 fields, found {}", row.len())));
        }
        let timestamp: f64 = row[0]
            .parse()
            .map_err(|_| fail(format!("bad timestamp `{}`", &row[0])))?;
        if !timestamp.is_finite() {
            return Err(fail(format!("bad timestamp `{}`", &row[0])));
        }
        if timestamp < last {
            return Err(fail("timestamps must be non-decreasing".into()));
        }
        last = timestamp;
        let user = intern(&mut users, &mut segment.user_ids, &row[1]);
        let file = intern(&mut files, &mut segment.file_ids, &row[2]);
        segment.records.push(TraceRecord { timestamp, user, file });
    }
    Ok(segment)
}

fn intern(map: &mut HashMap<String, usize>, ids: &mut Vec<String>, key: &str) -> usize {
    if let Some(&i) = map.get(key) {
        return i;
    }
    ids.push(key.to_owned());
    map.insert(key.to_owned(), ids.len() - 1);
    ids.len() - 1
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceSegment> {
    read_trace(std::fs::File::open(path)?)
}

pub fn write_trace(writer: impl Write, segment: &TraceSegment) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["timestamp", "user", "file"])?;
    for r in &segment.records {
        csv.write_record([
            r.timestamp.to_string().as_str(),
            &segment.user_ids[r.user],
            &segment.file_ids[r.file],
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn save_trace(path: impl AsRef<Path>, segment: &TraceSegment) -> Result<()> {
    write_trace(std::fs::File::create(path)?, segment)
}

/// Consecutive chunks of `segment_size` requests; the last may be shorter.
pub fn split_segments(trace: &TraceSegment, segment_size: usize) -> Vec<TraceSegment> {
    let size = segment_size.max(1);
    trace
        .records
        .chunks(size)
        .map(|chunk| TraceSegment {
            records: chunk.to_vec(),
            user_ids: trace.user_ids.clone(),
            file_ids: trace.file_ids.clone(),
        })
        .collect()
}

/// Deterministic position in `[0, side)²` derived from a user id.
pub fn hashed_position(id: &str, side: f64) -> (f64, f64) {
    // FNV-1a followed by two splitmix64 rounds.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut next = || {
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    };
    (next() * side, next() * side)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitParams {
    pub layout: LayoutParams,
    pub cache_budget: usize,
    /// `μ / λ` with `λ` the fitted aggregate rate; constant-delay when absent.
    pub service_ratio: Option<f64>,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            layout: LayoutParams::default(),
            cache_budget: 5,
            service_ratio: Some(0.8),
        }
    }
}

/// Instance learned from a segment over the trace-wide user and file sets.
/// Users silent in the segment get rate 0, a zero popularity row and no
/// caches, so they stay on the uncached path when the next segment replays.
pub fn fit_instance(segment: &TraceSegment, params: &FitParams) -> Result<ProblemInstance> {
    let (mut rates, popularity) = segment.empirical()?;
    let positions = segment
        .user_ids
        .iter()
        .map(|id| hashed_position(id, params.layout.field_side))
        .collect();
    let layout = GeometricLayout::with_users(params.layout.clone(), positions);
    let total: f64 = rates.iter().sum();
    let model = match params.service_ratio {
        Some(r) => UncachedModel::CongestionSensitive { service_rate: r * total },
        None => UncachedModel::CongestionInsensitive,
    };
    let mut instance = layout.instance(std::mem::take(&mut rates), popularity, params.cache_budget, model);
    for i in 0..instance.num_users {
        if instance.request_rate[i] == 0.0 {
            instance.adjacency[i].iter_mut().for_each(|a| *a = false);
        }
    }
    Ok(instance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTraceParams {
    pub num_users: usize,
    pub num_files: usize,
    pub zipf_skew: f64,
    pub total_rate: f64,
    pub num_requests: usize,
}

impl Default for SyntheticTraceParams {
    fn default() -> Self {
        SyntheticTraceParams {
            num_users: 250,
            num_files: 4000,
            zipf_skew: 0.8,
            total_rate: 5.0,
            num_requests: 120_000,
        }
    }
}

/// Poisson requests with random user rates and a shared Zipf popularity;
/// files are ranked by a random permutation so ids carry no rank.
pub fn synthetic_trace(params: &SyntheticTraceParams, seed: u64) -> Result<TraceSegment> {
    if params.num_users == 0 || params.num_files == 0 || !(params.total_rate > 0.0) {
        return Err(Error::InvalidParameter(
            "synthetic traces need users, files and a positive rate".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates = random_rates(params.num_users, params.total_rate, &mut rng);
    let mut names: Vec<usize> = (0..params.num_files).collect();
    names.shuffle(&mut rng);
    let users = WeightedIndex::new(&rates).expect("positive rates");
    let files = WeightedIndex::new(zipf_weights(params.num_files, params.zipf_skew)).expect("positive weights");
    let gaps = Exp::new(params.total_rate).expect("positive rate");

    let mut raw = Vec::with_capacity(params.num_requests);
    let mut t = 0.0;
    for _ in 0..params.num_requests {
        t += gaps.sample(&mut rng);
        raw.push((t, users.sample(&mut rng), names[files.sample(&mut rng)]));
    }
    // Re-index by first appearance, as the CSV reader would.
    let mut user_map = HashMap::new();
    let mut file_map = HashMap::new();
    let mut segment = TraceSegment {
        records: Vec::with_capacity(raw.len()),
        user_ids: Vec::new(),
        file_ids: Vec::new(),
    };
    for (timestamp, u, f) in raw {
        let user = intern(&mut user_map, &mut segment.user_ids, &format!("u{u}"));
        let file = intern(&mut file_map, &mut segment.file_ids, &format!("f{f}"));
        segment.records.push(TraceRecord { timestamp, user, file });
    }
    Ok(segment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_skew_is_uniform() {
        let w = zipf_weights(4, 0.0);
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn delay_law_endpoints() {
        let params = LayoutParams::new(Architecture::Single);
        let edge = (5.0 + params.radius(), 5.0);
        let layout = GeometricLayout::with_users(params, vec![(5.0, 5.0), edge, (0.0, 0.0)]);
        let (a, h, m) = layout.delays();
        assert_eq!(h[0][0], 0.0);
        assert!((h[1][0] - 12.5).abs() < 1e-12);
        assert_eq!(a, vec![vec![true], vec![true], vec![false]]);
        assert!(m.iter().zip(&h).all(|(mi, hi)| (mi[0] - hi[0] - 25.0).abs() < 1e-12));
    }

    #[test]
    fn generation_is_deterministic() {
        let params = GenParams {
            layout: LayoutParams::new(Architecture::Multi),
            ..GenParams::default()
        };
        assert_eq!(
            gen_instance(&params, 9).unwrap().to_json(),
            gen_instance(&params, 9).unwrap().to_json()
        );
        assert_ne!(
            gen_instance(&params, 9).unwrap().to_json(),
            gen_instance(&params, 10).unwrap().to_json()
        );
    }

    #[test]
    fn budget_split() {
        assert_eq!(split_budget(12, 5), vec![3, 3, 2, 2, 2]);
        assert_eq!(split_budget(7, 1), vec![7]);
    }

    #[test]
    fn toy_trace_counts() {
        let csv = "timestamp,user,file\n0,alice,a\n1,alice,a\n2,alice,b\n";
        let seg = read_trace(csv.as_bytes()).unwrap();
        let (rates, q) = seg.empirical().unwrap();
        assert_eq!(q, vec![vec![2.0 / 3.0, 1.0 / 3.0]]);
        assert_eq!(rates, vec![1.5]);
        assert_eq!(split_segments(&seg, 1000).len(), 1);
    }

    #[test]
    fn malformed_rows_report_lines() {
        let csv = "timestamp,user,file\n0,u,f\nx,u,f\n";
        match read_trace(csv.as_bytes()) {
            Err(Error::TraceParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let csv = "timestamp,user,file\n2,u,f\n1,u,f\n";
        assert!(matches!(read_trace(csv.as_bytes()), Err(Error::TraceParse { line: 3, .. })));
        assert!(matches!(read_trace("a,b\n".as_bytes()), Err(Error::TraceParse { line: 1, .. })));
    }

    #[test]
    fn empty_segment_is_rejected() {
        let seg = read_trace("timestamp,user,file\n".as_bytes()).unwrap();
        assert!(matches!(fit_instance(&seg, &FitParams::default()), Err(Error::EmptySegment)));
    }

    #[test]
    fn trace_round_trip() {
        let params = SyntheticTraceParams {
            num_users: 5,
            num_files: 20,
            num_requests: 200,
            ..Default::default()
        };
        let seg = synthetic_trace(&params, 3).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &seg).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), seg);
    }

    #[test]
    fn hashed_positions_are_stable_and_inside() {
        let p = hashed_position("user-42", 10.0);
        assert_eq!(p, hashed_position("user-42", 10.0));
        assert_ne!(p, hashed_position("user-43", 10.0));
        assert!((0.0..10.0).contains(&p.0) && (0.0..10.0).contains(&p.1));
    }
}
