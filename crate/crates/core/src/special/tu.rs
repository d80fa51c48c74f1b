//! Constraint matrix of the constant-delay placement program and a
//! row-signing total-unimodularity test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::ProblemInstance;

/// Largest row count [`tu_check`] enumerates.
pub const TU_MAX_ROWS: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    /// `x_jm`
    Placement { file: usize, cache: usize },
    /// `p_ijm`
    Routing { user: usize, file: usize, cache: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// `Σ_m p_ijm ≤ 1`
    ClassShare { user: usize, file: usize },
    /// `Σ_j x_jm ≤ C_m`
    Capacity { cache: usize },
    /// `p_ijm − x_jm ≤ 0`
    Link { user: usize, file: usize, cache: usize },
}

/// `Az ≤ b` over `z = (x, p)`, with `p_ijm` present only where `a_im = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    pub columns: Vec<Variable>,
    pub row_kinds: Vec<RowKind>,
    pub rows: Vec<Vec<i64>>,
    pub rhs: Vec<i64>,
}

impl ConstraintMatrix {
    pub fn for_instance(instance: &ProblemInstance) -> Self {
        let (n, k, m) = (instance.num_users, instance.num_files, instance.num_caches);
        let mut columns = Vec::new();
        for cache in 0..m {
            for file in 0..k {
                columns.push(Variable::Placement { file, cache });
            }
        }
        let x_col = |file: usize, cache: usize| cache * k + file;
        let mut p_col = std::collections::BTreeMap::new();
        for user in 0..n {
            for file in 0..k {
                for cache in instance.caches_of(user) {
                    p_col.insert((user, file, cache), columns.len());
                    columns.push(Variable::Routing { user, file, cache });
                }
            }
        }
        let width = columns.len();
        let mut row_kinds = Vec::new();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for user in 0..n {
            if !instance.has_cache(user) {
                continue;
            }
            for file in 0..k {
                let mut row = vec![0; width];
                for cache in instance.caches_of(user) {
                    row[p_col[&(user, file, cache)]] = 1;
                }
                rows.push(row);
                rhs.push(1);
                row_kinds.push(RowKind::ClassShare { user, file });
            }
        }
        for cache in 0..m {
            let mut row = vec![0; width];
            for file in 0..k {
                row[x_col(file, cache)] = 1;
            }
            rows.push(row);
            rhs.push(instance.cache_capacity[cache] as i64);
            row_kinds.push(RowKind::Capacity { cache });
        }
        for (&(user, file, cache), &col) in &p_col {
            let mut row = vec![0; width];
            row[col] = 1;
            row[x_col(file, cache)] = -1;
            rows.push(row);
            rhs.push(0);
            row_kinds.push(RowKind::Link { user, file, cache });
        }
        ConstraintMatrix {
            columns,
            row_kinds,
            rows,
            rhs,
        }
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        ConstraintMatrix {
            columns: (0..width)
                .map(|c| Variable::Placement { file: c, cache: 0 })
                .collect(),
            row_kinds: Vec::new(),
            rhs: vec![0; rows.len()],
            rows,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuReport {
    pub totally_unimodular: bool,
    /// Smallest (by size, then index order) row subset with no valid signing.
    pub witness: Option<Vec<usize>>,
}

/// Ghouila-Houri test: the matrix is totally unimodular iff every row
/// subset has a ±1 signing whose signed sum lies in `{0, ±1}` entrywise.
pub fn tu_check(matrix: &ConstraintMatrix) -> Result<TuReport> {
    tu_check_with(matrix, Execution::default())
}

pub fn tu_check_with(matrix: &ConstraintMatrix, exec: Execution) -> Result<TuReport> {
    let r = matrix.num_rows();
    if r > TU_MAX_ROWS {
        return Err(Error::SizeCap(format!(
            "{r} rows exceed the total-unimodularity enumeration limit of {TU_MAX_ROWS}"
        )));
    }
    for (i, row) in matrix.rows.iter().enumerate() {
        if row.iter().any(|v| v.abs() > 1) {
            return Ok(TuReport {
                totally_unimodular: false,
                witness: Some(vec![i]),
            });
        }
    }
    let width = matrix.rows.first().map_or(0, Vec::len);
    let sparse: Vec<Vec<(usize, i64)>> = matrix
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0)
                .map(|(c, &v)| (c, v))
                .collect()
        })
        .collect();

    const CHUNK: usize = 1 << 12;
    let masks = 1usize << r;
    let failures = exec.map_range(masks.div_ceil(CHUNK), |chunk| {
        let mut sums = vec![0i64; width];
        let mut remaining = vec![0i64; width];
        let mut subset = Vec::with_capacity(r);
        let mut worst: Option<(u32, usize)> = None;
        for mask in (chunk * CHUNK).max(1)..((chunk + 1) * CHUNK).min(masks) {
            subset.clear();
            subset.extend((0..r).filter(|i| mask & (1 << i) != 0).map(|i| sparse[i].as_slice()));
            for row in &subset {
                for &(c, _) in *row {
                    remaining[c] += 1;
                }
            }
            let ok = signable(&subset, 0, &mut sums, &mut remaining);
            for row in &subset {
                for &(c, _) in *row {
                    remaining[c] = 0;
                    sums[c] = 0;
                }
            }
            if !ok {
                let key = (mask.count_ones(), mask);
                if worst.is_none_or(|w| key < w) {
                    worst = Some(key);
                }
            }
        }
        worst
    });
    let witness = failures.into_iter().flatten().min().map(|(_, mask)| {
        (0..r).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>()
    });
    Ok(TuReport {
        totally_unimodular: witness.is_none(),
        witness,
    })
}

/// Backtracking over signs of `rows[k..]`. `remaining[c]` counts the
/// nonzeros of column `c` still unsigned; a partial sum further than that
/// from `{0, ±1}` cannot be repaired.
fn signable(rows: &[&[(usize, i64)]], k: usize, sums: &mut [i64], remaining: &mut [i64]) -> bool {
    if k == rows.len() {
        return true;
    }
    let row = rows[k];
    // Negating every sign preserves validity, so the first row is fixed to +1.
    let signs: &[i64] = if k == 0 { &[1] } else { &[1, -1] };
    for &s in signs {
        let mut ok = true;
        for &(c, v) in row {
            sums[c] += s * v;
            remaining[c] -= 1;
            if sums[c].abs() - remaining[c] > 1 {
                ok = false;
            }
        }
        if ok && signable(rows, k + 1, sums, remaining) {
            for &(c, v) in row {
                sums[c] -= s * v;
                remaining[c] += 1;
            }
            return true;
        }
        for &(c, v) in row {
            sums[c] -= s * v;
            remaining[c] += 1;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_tu() {
        let rows = (0..5).map(|i| (0..5).map(|j| i64::from(i == j)).collect()).collect();
        let r = tu_check(&ConstraintMatrix::from_rows(rows)).unwrap();
        assert!(r.totally_unimodular);
        assert_eq!(r.witness, None);
    }

    #[test]
    fn odd_cycle_incidence_is_not_tu() {
        // Edge-vertex incidence of a triangle: det = 2.
        let rows = vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]];
        let r = tu_check(&ConstraintMatrix::from_rows(rows)).unwrap();
        assert!(!r.totally_unimodular);
        assert_eq!(r.witness, Some(vec![0, 1, 2]));
    }

    #[test]
    fn large_entries_fail_immediately() {
        let r = tu_check(&ConstraintMatrix::from_rows(vec![vec![1, 0], vec![2, 1]])).unwrap();
        assert_eq!(r.witness, Some(vec![1]));
    }

    #[test]
    fn interval_matrix_is_tu() {
        // Consecutive-ones rows are totally unimodular.
        let rows = vec![
            vec![1, 1, 1, 0, 0],
            vec![0, 1, 1, 1, 0],
            vec![0, 0, 1, 1, 1],
            vec![1, 1, 0, 0, 0],
        ];
        assert!(tu_check(&ConstraintMatrix::from_rows(rows)).unwrap().totally_unimodular);
    }

    #[test]
    fn too_many_rows_is_rejected() {
        let rows = vec![vec![1]; TU_MAX_ROWS + 1];
        assert!(matches!(
            tu_check(&ConstraintMatrix::from_rows(rows)),
            Err(Error::SizeCap(_))
        ));
    }
}
