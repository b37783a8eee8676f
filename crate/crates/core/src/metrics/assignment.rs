//! Exact minimum-cost assignment via shortest augmenting paths.
//!
//! The classic O(n^3) Hungarian algorithm with row/column potentials. Costs
//! are plain `f64`; comparisons are exact, so for inputs whose optimal
//! matching is separated from the runner-up by more than accumulated
//! rounding (the generic case for geometric distances) the returned
//! assignment is the true optimum.

/// Returns `sigma` with `sigma[row] = column` minimizing the total cost of
/// the square matrix `cost`.
///
/// Panics if `cost` is empty or not square (callers validate sizes).
pub(crate) fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    assert!(n > 0, "assignment needs a non-empty cost matrix");
    assert!(
        cost.iter().all(|row| row.len() == n),
        "assignment needs a square cost matrix"
    );
    // Potentials and matching are 1-based; index 0 is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // per column
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let slack = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path back to the start.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }
    let mut sigma = vec![0usize; n];
    for j in 1..=n {
        sigma[matched_row[j] - 1] = j - 1;
    }
    sigma
}
