//! Minimum-cost assignment (Kuhn-Munkres with potentials, O(n^3)).

/// Optimal partial assignment on a rectangular cost matrix. `f64::INFINITY`
/// marks a forbidden pair. Pairs are only kept when they lower the total, so
/// the result maximizes `-sum(cost)` over feasible matchings. Returned pairs
/// are `(row, col)` sorted by row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    // Leaving a row or column unmatched costs 0, so only negative entries
    // are worth taking.
    let c = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            let v = cost[i][j];
            if v.is_finite() {
                v.min(0.0)
            } else {
                0.0
            }
        } else {
            0.0
        }
    };
    // 1-based arrays, column 0 is the virtual start.
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
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let i = owner[j] - 1;
            let j = j - 1;
            (i < rows && j < cols && cost[i][j].is_finite() && cost[i][j] < 0.0).then_some((i, j))
        })
        .collect();
    pairs.sort_unstable();
    pairs
}
