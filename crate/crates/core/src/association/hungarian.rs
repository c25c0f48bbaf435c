//! Rectangular linear assignment via shortest augmenting paths with
//! row/column potentials (the Kuhn-Munkres method in its O(n^2 m) form).

use nalgebra::DMatrix;

/// Minimum-cost assignment of `min(rows, cols)` pairs.
///
/// Returns, for each row, the assigned column. Infinite entries are treated
/// as forbidden: the solver still prefers any finite completion, and a row
/// that can only be served by a forbidden column comes back as `None`.
pub fn solve(cost: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let finite_max = cost
        .iter()
        .filter(|c| c.is_finite())
        .fold(0.0_f64, |m, c| m.max(c.abs()));
    if !cost.iter().any(|c| c.is_finite()) {
        return vec![None; rows];
    }
    // larger than any total built from finite entries
    let big = (finite_max + 1.0) * (rows.min(cols) as f64 + 1.0) * 2.0;
    let work = cost.map(|c| if c.is_finite() { c } else { big });

    let transposed = rows > cols;
    let a = if transposed { work.transpose() } else { work };
    let by_row = assign_rows(&a);

    let mut result = vec![None; rows];
    if transposed {
        for (c, r) in by_row.into_iter().enumerate() {
            result[r] = Some(c);
        }
    } else {
        for (r, c) in by_row.into_iter().enumerate() {
            result[r] = Some(c);
        }
    }
    for (r, c) in result.iter_mut().enumerate() {
        if let Some(j) = *c {
            if !cost[(r, j)].is_finite() {
                *c = None;
            }
        }
    }
    result
}

/// `a` has `n <= m`. Returns the column of every row.
fn assign_rows(a: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = a.shape();
    let inf = f64::INFINITY;
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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

    let mut col_of = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            col_of[p[j] - 1] = j - 1;
        }
    }
    col_of
}
