//! Simple-cycle enumeration on the bipartite user–cache graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;

pub const DEFAULT_CYCLE_CAP: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    User(usize),
    Cache(usize),
}

/// A simple cycle as its node sequence; the closing edge back to the first
/// node is implicit. Length counts edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub nodes: Vec<Node>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Lengths `4k + 2`, `k ≥ 1`.
    pub fn is_bad(&self) -> bool {
        self.len() >= 6 && self.len() % 4 == 2
    }
}

/// Every simple cycle, each reported once, starting from its smallest node
/// (users before caches) and oriented so the second node is the smaller
/// neighbor.
pub fn all_cycles(instance: &ProblemInstance, cap: usize) -> Result<Vec<Cycle>> {
    let n = instance.num_users;
    let total = n + instance.num_caches;
    let node = |v: usize| if v < n { Node::User(v) } else { Node::Cache(v - n) };
    let mut adj = vec![Vec::new(); total];
    for i in 0..n {
        for m in instance.caches_of(i) {
            adj[i].push(n + m);
            adj[n + m].push(i);
        }
    }

    let mut cycles = Vec::new();
    let mut on_path = vec![false; total];
    let mut path = Vec::new();
    for start in 0..total {
        on_path[start] = true;
        path.push(start);
        extend(start, start, &adj, &mut on_path, &mut path, &mut cycles, cap)?;
        path.pop();
        on_path[start] = false;
    }
    Ok(cycles
        .into_iter()
        .map(|c: Vec<usize>| Cycle {
            nodes: c.into_iter().map(node).collect(),
        })
        .collect())
}

fn extend(
    start: usize,
    at: usize,
    adj: &[Vec<usize>],
    on_path: &mut [bool],
    path: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    cap: usize,
) -> Result<()> {
    for &next in &adj[at] {
        if next == start {
            if path.len() >= 4 && path[1] < path[path.len() - 1] {
                if out.len() >= cap {
                    return Err(Error::SizeCap(format!("more than {cap} cycles")));
                }
                out.push(path.clone());
            }
            continue;
        }
        if next < start || on_path[next] {
            continue;
        }
        on_path[next] = true;
        path.push(next);
        extend(start, next, adj, on_path, path, out, cap)?;
        path.pop();
        on_path[next] = false;
    }
    Ok(())
}

/// Cycles of length `4k + 2`, `k ≥ 1`.
pub fn find_bad_cycles(instance: &ProblemInstance) -> Result<Vec<Cycle>> {
    find_bad_cycles_with_cap(instance, DEFAULT_CYCLE_CAP)
}

pub fn find_bad_cycles_with_cap(instance: &ProblemInstance, cap: usize) -> Result<Vec<Cycle>> {
    Ok(all_cycles(instance, cap)?.into_iter().filter(Cycle::is_bad).collect())
}
