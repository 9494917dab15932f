//! Dense O(n^3) Hungarian algorithm (shortest augmenting path with potentials).

/// Minimum-cost perfect assignment on a square cost matrix.
/// Returns `assignment[row] = column`.
pub fn min_cost_assignment(costs: &[Vec<i64>]) -> Vec<usize> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(costs.iter().all(|r| r.len() == n));
    let inf = i64::MAX / 4;
    // 1-based potentials; p[j] is the row matched to column j, 0 = free
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum-weight assignment on a (possibly rectangular) count matrix,
/// padded to square with zeros. Returns the matched total.
pub fn max_weight_matching(weights: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return (0, Vec::new());
    }
    let max_w = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    let costs: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let w = if i < rows && j < cols { weights[i][j] as i64 } else { 0 };
                    max_w - w
                })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&costs);
    let total = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < rows && j < cols)
        .map(|(i, &j)| weights[i][j])
        .sum();
    (total, assignment)
}
