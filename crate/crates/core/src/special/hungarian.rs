//! Kuhn–Munkres assignment on a dense square matrix.

/// Maximum-weight perfect assignment of a square weight matrix.
///
/// Returns `assign[row] = column` and the total weight. Runs the
/// shortest-augmenting-path form of the Hungarian algorithm with row and
/// column potentials, `O(n³)`.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = weights.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    debug_assert!(weights.iter().all(|r| r.len() == n));
    // Minimize cost = -weight. 1-based arrays with a virtual column 0.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if owner[j] != 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| weights[i][j]).sum();
    (assign, total)
}
