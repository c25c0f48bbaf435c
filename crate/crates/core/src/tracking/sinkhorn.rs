//! Entropic optimal transport with a dustbin row and column.
//!
//! Each of the `n` rows and `m` columns carries unit mass. The dustbin row
//! holds `m` units and the dustbin column `n`, so every real entry can be
//! fully absorbed when it has no partner. The whole dustbin row and column,
//! corner included, costs `dustbin_cost`; mass in the corner equals the number
//! of matches, so a pair is worth matching exactly when its cost is below
//! `dustbin_cost`. Iterations run in the log domain; with `epsilon = 0.05` and
//! costs of order one the plain kernel underflows.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `(n + 1) x (m + 1)` coupling, dustbin last in both axes.
    pub plan: DMatrix<f64>,
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `cost` is `n x m`; `dustbin_cost` fills the extra row and column.
pub fn sinkhorn_with_dustbin(
    cost: &DMatrix<f64>,
    dustbin_cost: f64,
    epsilon: f64,
    max_iterations: usize,
    tolerance: f64,
) -> TransportPlan {
    let (n, m) = cost.shape();
    let mut full = DMatrix::from_element(n + 1, m + 1, dustbin_cost);
    full.view_mut((0, 0), (n, m)).copy_from(cost);

    let log_k = full.map(|c| -c / epsilon);
    let log_a: Vec<f64> = (0..=n).map(|i| if i < n { 0.0 } else { (m as f64).ln() }).collect();
    let log_b: Vec<f64> = (0..=m).map(|j| if j < m { 0.0 } else { (n as f64).ln() }).collect();
    let a: Vec<f64> = log_a.iter().map(|l| l.exp()).collect();

    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut iterations = 0;
    let mut marginal_error = f64::INFINITY;

    let plan_of = |u: &[f64], v: &[f64]| {
        DMatrix::from_fn(n + 1, m + 1, |i, j| {
            let l = u[i] + log_k[(i, j)] + v[j];
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                l.exp()
            }
        })
    };

    // a zero-mass side leaves only the dustbin cell; nothing to iterate
    if n == 0 || m == 0 {
        let mut plan = DMatrix::zeros(n + 1, m + 1);
        for i in 0..n {
            plan[(i, m)] = 1.0;
        }
        for j in 0..m {
            plan[(n, j)] = 1.0;
        }
        return TransportPlan {
            plan,
            iterations: 0,
            marginal_error: 0.0,
            converged: true,
        };
    }

    while iterations < max_iterations {
        for i in 0..=n {
            u[i] = log_a[i] - log_sum_exp((0..=m).map(|j| log_k[(i, j)] + v[j]));
        }
        for j in 0..=m {
            v[j] = log_b[j] - log_sum_exp((0..=n).map(|i| log_k[(i, j)] + u[i]));
        }
        iterations += 1;
        // columns are exact after the v update; measure the rows
        marginal_error = (0..=n)
            .map(|i| {
                let row = (0..=m)
                    .map(|j| (u[i] + log_k[(i, j)] + v[j]).exp())
                    .sum::<f64>();
                (row - a[i]).abs()
            })
            .sum();
        if marginal_error < tolerance {
            break;
        }
    }

    TransportPlan {
        plan: plan_of(&u, &v),
        iterations,
        marginal_error,
        converged: marginal_error < tolerance,
    }
}

/// Greedy row-max rounding of a dustbin plan.
///
/// Rows are visited in order; each takes its heaviest still-free column (ties:
/// lowest column) when that entry outweighs the row's dustbin cell. Returns
/// `(row, col)` pairs sorted by row.
pub fn harden(plan: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (rows, cols) = plan.shape();
    let (n, m) = (rows - 1, cols - 1);
    let mut col_used = vec![false; m];
    let mut pairs = Vec::new();
    for i in 0..n {
        let best = (0..m)
            .filter(|&j| !col_used[j])
            .fold(None, |acc: Option<usize>, j| match acc {
                Some(b) if plan[(i, b)] >= plan[(i, j)] => Some(b),
                _ => Some(j),
            });
        if let Some(j) = best {
            if plan[(i, j)] > plan[(i, m)] {
                col_used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs
}
