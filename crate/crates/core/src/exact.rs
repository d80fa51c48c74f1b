//! Exhaustive placement search and the equal-cardinality-partition
//! reduction to the single-cache congestion-sensitive decision problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::queue_term;
use crate::exec::Execution;
use crate::model::{Placement, ProblemInstance, UncachedModel};
use crate::routing::optimal_delay;
use crate::solution::Solution;

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Maximum element count accepted by [`csddp_brute`].
pub const CSDDP_MAX_USERS: usize = 24;

/// Number of ways to choose `k` of `n`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// The `rank`-th `size`-subset of `0..n` in lexicographic order.
fn nth_combination(n: usize, size: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(size);
    let mut next = 0;
    for pos in 0..size {
        let mut x = next;
        loop {
            let rest = binomial(n - x - 1, size - pos - 1);
            if rank < rest {
                break;
            }
            rank -= rest;
            x += 1;
        }
        out.push(x);
        next = x + 1;
    }
    out
}

/// Placements considered by the exhaustive search: every cache filled to
/// `min(C_m, K)` files. Monotonicity of the placement value makes these
/// sufficient.
pub fn placement_count(instance: &ProblemInstance) -> u128 {
    instance
        .cache_capacity
        .iter()
        .map(|&c| binomial(instance.num_files, c.min(instance.num_files)))
        .fold(1u128, |acc, b| acc.saturating_mul(b))
}

fn nth_placement(instance: &ProblemInstance, mut rank: u128) -> Placement {
    let k = instance.num_files;
    let sizes: Vec<usize> = instance.cache_capacity.iter().map(|&c| c.min(k)).collect();
    let radices: Vec<u128> = sizes.iter().map(|&s| binomial(k, s)).collect();
    // Cache 0 is the most significant digit.
    let mut digits = vec![0u128; sizes.len()];
    for m in (0..sizes.len()).rev() {
        digits[m] = rank % radices[m];
        rank /= radices[m];
    }
    Placement::from_sets(
        sizes
            .iter()
            .zip(&digits)
            .map(|(&s, &d)| nth_combination(k, s, d)),
    )
}

/// Exact optimum by enumeration, with the lexicographically first placement
/// winning ties.
pub fn brute_force_placement(instance: &ProblemInstance) -> Result<Solution> {
    brute_force_placement_with(instance, DEFAULT_ENUMERATION_CAP, Execution::default())
}

pub fn brute_force_placement_with(instance: &ProblemInstance, cap: u128, exec: Execution) -> Result<Solution> {
    let total = placement_count(instance);
    if total > cap {
        return Err(Error::EnumerationCap { required: total, cap });
    }
    const CHUNK: u128 = 1024;
    let chunks = total.div_ceil(CHUNK) as usize;
    let bests = exec.map_range(chunks, |c| {
        let start = c as u128 * CHUNK;
        let end = (start + CHUNK).min(total);
        let mut best = (f64::INFINITY, start);
        for rank in start..end {
            let d = optimal_delay(instance, &nth_placement(instance, rank));
            if d < best.0 {
                best = (d, rank);
            }
        }
        best
    });
    let mut best = (f64::INFINITY, 0u128);
    for b in bests {
        if b.0 < best.0 {
            best = b;
        }
    }
    Ok(Solution::for_placement(instance, nth_placement(instance, best.1)))
}

/// Equal-cardinality partition input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcpInstance {
    pub numbers: Vec<f64>,
}

impl EcpInstance {
    pub fn new(numbers: impl IntoIterator<Item = f64>) -> Self {
        EcpInstance {
            numbers: numbers.into_iter().collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.numbers.iter().sum()
    }
}

/// Single-cache, one-file-per-user congestion-sensitive decision instance.
#[derive(Clone, Debug, PartialEq)]
pub struct CsddpInstance {
    pub service_rate: f64,
    pub rates: Vec<f64>,
    pub hit_delay: Vec<f64>,
    /// Always infinite for reduction outputs.
    pub miss_delay: Vec<f64>,
    pub base_delay: Vec<f64>,
    pub capacity: usize,
    pub target_delay: f64,
}

impl CsddpInstance {
    pub fn num_users(&self) -> usize {
        self.rates.len()
    }

    /// The same network as a general instance, with the infinite miss delay
    /// replaced by `miss_delay`.
    pub fn to_problem_instance(&self, miss_delay: f64) -> ProblemInstance {
        let n = self.num_users();
        ProblemInstance {
            num_users: n,
            num_files: n,
            num_caches: 1,
            request_rate: self.rates.clone(),
            popularity: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            adjacency: vec![vec![true]; n],
            hit_delay: self.hit_delay.iter().map(|&h| vec![h]).collect(),
            miss_delay: self
                .miss_delay
                .iter()
                .map(|&m| vec![if m.is_finite() { m } else { miss_delay }])
                .collect(),
            uncached_base_delay: self.base_delay.clone(),
            cache_capacity: vec![self.capacity],
            uncached_model: UncachedModel::CongestionSensitive {
                service_rate: self.service_rate,
            },
        }
    }
}

/// Builds `μ = S`, `λ_i = a_i`, `d^h = 4/S`, `d^m = ∞`, `d^b_i = 4/a_i`,
/// `C = n/2` with target delay `(2n + 3)/S`.
///
/// Zero elements carry no traffic and are dropped from the users; `n`
/// still counts them.
pub fn ecp_to_csddp(ecp: &EcpInstance) -> Result<CsddpInstance> {
    let n = ecp.numbers.len();
    if n == 0 || n % 2 == 1 {
        return Err(Error::OddPartition(n));
    }
    if let Some(bad) = ecp.numbers.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidParameter(format!("partition element {bad} is not a non-negative number")));
    }
    let s = ecp.sum();
    if s <= 0.0 {
        return Err(Error::InvalidParameter("partition elements sum to zero".into()));
    }
    let rates: Vec<f64> = ecp.numbers.iter().copied().filter(|&a| a > 0.0).collect();
    let users = rates.len();
    Ok(CsddpInstance {
        service_rate: s,
        hit_delay: vec![4.0 / s; users],
        miss_delay: vec![f64::INFINITY; users],
        base_delay: rates.iter().map(|&a| 4.0 / a).collect(),
        rates,
        capacity: n / 2,
        target_delay: (2 * n + 3) as f64 / s,
    })
}

/// Minimum delay over all cached subsets of size at most `C`, with each
/// user's traffic following its file (`p_i = x_i`). Returns the delay and
/// the first minimizing subset in mask order.
pub fn csddp_brute(csddp: &CsddpInstance) -> Result<(f64, Vec<usize>)> {
    let n = csddp.num_users();
    if n > CSDDP_MAX_USERS {
        return Err(Error::SizeCap(format!(
            "{n} users exceed the subset-enumeration limit of {CSDDP_MAX_USERS}"
        )));
    }
    let total: f64 = csddp.rates.iter().sum();
    let mu = csddp.service_rate;
    let mut best = (f64::INFINITY, 0u32);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize > csddp.capacity {
            continue;
        }
        let mut paths = 0.0;
        let mut load = 0.0;
        for i in 0..n {
            let w = csddp.rates[i];
            if mask & (1 << i) != 0 {
                paths += w * csddp.hit_delay[i];
            } else {
                paths += w * csddp.base_delay[i];
                load += w;
            }
        }
        let d = (paths + queue_term(mu, load)) / total;
        if d < best.0 {
            best = (d, mask);
        }
    }
    let subset = (0..n).filter(|i| best.1 & (1 << i) != 0).collect();
    Ok((best.0, subset))
}
