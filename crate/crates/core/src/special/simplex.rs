//! Dense tableau simplex for `max cᵀz` subject to `Az ≤ b`, `z ≥ 0`, `b ≥ 0`.
//!
//! Slack variables form the starting basis, so no phase one is needed.
//! Bland's rule picks entering and leaving variables, which rules out
//! cycling on the heavily degenerate placement relaxations.

use crate::error::{Error, Result};

pub const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
}

pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::Lp("malformed"));
    }
    if b.iter().any(|&v| v < 0.0) {
        return Err(Error::Lp("not in slack-feasible form (negative right-hand side)"));
    }
    let width = n + m + 1;
    let rhs = n + m;
    let mut t = vec![vec![0.0; width]; m];
    for (i, row) in a.iter().enumerate() {
        t[i][..n].copy_from_slice(row);
        t[i][n + i] = 1.0;
        t[i][rhs] = b[i];
    }
    // Reduced costs of the maximization; the value accumulates in obj[rhs].
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(c);
    let mut basis: Vec<usize> = (n..n + m).collect();

    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..n + m).find(|&j| obj[j] > PIVOT_TOL) else {
            let mut z = vec![0.0; n];
            for (i, &var) in basis.iter().enumerate() {
                if var < n {
                    z[var] = t[i][rhs];
                }
            }
            let objective = c.iter().zip(&z).map(|(ci, zi)| ci * zi).sum();
            return Ok(LpSolution { z, objective });
        };
        let mut leave: Option<usize> = None;
        for i in 0..m {
            if t[i][enter] > PIVOT_TOL {
                let ratio = t[i][rhs] / t[i][enter];
                leave = match leave {
                    None => Some(i),
                    Some(l) => {
                        let best = t[l][rhs] / t[l][enter];
                        if ratio < best - PIVOT_TOL
                            || ((ratio - best).abs() <= PIVOT_TOL && basis[i] < basis[l])
                        {
                            Some(i)
                        } else {
                            Some(l)
                        }
                    }
                };
            }
        }
        let Some(row) = leave else {
            return Err(Error::Lp("unbounded"));
        };
        pivot(&mut t, &mut obj, row, enter);
        basis[row] = enter;
    }
    Err(Error::Lp("not converging within the pivot limit"))
}

fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = r[col];
        if f != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
    let f = obj[col];
    if f != 0.0 {
        for (v, pv) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
    }
}
