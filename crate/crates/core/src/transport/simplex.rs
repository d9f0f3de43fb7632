//! Exact transportation simplex for the balanced discrete problem.
//!
//! Deterministic by construction: northwest-corner start, Dantzig entering
//! rule with lowest-index tie-breaking, lowest-index leaving rule, and a
//! Bland fallback that kicks in after a run of degenerate pivots so the
//! solver cannot cycle. Duals are recomputed from the basis tree each pivot,
//! which keeps complementary slackness exact on the basis.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tie-break rule, recorded in solver metadata.
pub const TIE_BREAK_RULE: &str = "entering: most negative reduced cost, ties by lowest (row, col); \
     leaving: smallest step, ties by lowest (row, col); \
     bland fallback after 64 consecutive degenerate pivots";

const BLAND_TRIGGER: usize = 64;

pub(crate) struct SimplexSolution<T> {
    /// Dense row-major flow matrix.
    pub flow: Vec<T>,
    pub row_duals: Vec<T>,
    pub col_duals: Vec<T>,
    pub pivots: usize,
}

struct Basis<T> {
    cells: Vec<(usize, usize)>,
    flows: Vec<T>,
    /// Basis-edge indices incident to each row / column node.
    by_row: Vec<Vec<usize>>,
    by_col: Vec<Vec<usize>>,
}

impl<T: Scalar> Basis<T> {
    fn insert(&mut self, i: usize, j: usize, f: T) -> usize {
        let id = self.cells.len();
        self.cells.push((i, j));
        self.flows.push(f);
        self.by_row[i].push(id);
        self.by_col[j].push(id);
        id
    }

    fn remove(&mut self, id: usize) {
        // swap-remove; fix up the adjacency entry of the moved edge
        let (i, j) = self.cells[id];
        self.by_row[i].retain(|&e| e != id);
        self.by_col[j].retain(|&e| e != id);
        let last = self.cells.len() - 1;
        if id != last {
            let (li, lj) = self.cells[last];
            for e in self.by_row[li].iter_mut() {
                if *e == last {
                    *e = id;
                }
            }
            for e in self.by_col[lj].iter_mut() {
                if *e == last {
                    *e = id;
                }
            }
        }
        self.cells.swap_remove(id);
        self.flows.swap_remove(id);
    }
}

/// Solves `min sum c_ij f_ij` over `f >= 0` with row sums `a` and column
/// sums `b` (balanced within rounding; the last allocation absorbs the
/// residual). Costs are row-major `m x n`.
pub(crate) fn transportation_simplex<T: Scalar>(
    a: &[T],
    b: &[T],
    cost: &[T],
) -> Result<SimplexSolution<T>> {
    let m = a.len();
    let n = b.len();
    assert_eq!(cost.len(), m * n);

    let mut basis = northwest_corner(a, b);
    let max_abs = cost.iter().fold(T::zero(), |acc, c| acc.max(c.abs()));
    let tol = (T::one() + max_abs) * T::epsilon() * T::cast(256.0);
    let max_pivots = 20_000 + 20 * m * n;

    let mut u = vec![T::zero(); m];
    let mut v = vec![T::zero(); n];
    let mut pivots = 0usize;
    let mut degenerate_run = 0usize;

    loop {
        compute_duals(&basis, cost, n, &mut u, &mut v);

        let bland = degenerate_run >= BLAND_TRIGGER;
        let entering = find_entering(cost, &u, &v, m, n, tol, bland);
        let (ei, ej) = match entering {
            Some(cell) => cell,
            None => break,
        };

        if pivots >= max_pivots {
            return Err(Error::SolverStall { pivots });
        }
        pivots += 1;

        // Unique tree path from the entering column node back to the
        // entering row node; edges alternate -, +, -, ... starting at the
        // column end.
        let path = tree_path(&basis, m, ei, ej);
        let mut theta = T::infinity();
        let mut leaving = usize::MAX;
        for (pos, &edge) in path.iter().enumerate() {
            if pos % 2 == 0 {
                // minus edge
                let f = basis.flows[edge];
                let cell = basis.cells[edge];
                if f < theta || (f == theta && (leaving == usize::MAX || cell < basis.cells[leaving]))
                {
                    theta = f;
                    leaving = edge;
                }
            }
        }
        debug_assert!(leaving != usize::MAX, "cycle must contain a minus edge");

        for (pos, &edge) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flows[edge] = (basis.flows[edge] - theta).max(T::zero());
            } else {
                basis.flows[edge] += theta;
            }
        }
        basis.remove(leaving);
        basis.insert(ei, ej, theta);

        if theta == T::zero() {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
    }

    let mut flow = vec![T::zero(); m * n];
    for (idx, &(i, j)) in basis.cells.iter().enumerate() {
        flow[i * n + j] = basis.flows[idx].max(T::zero());
    }
    Ok(SimplexSolution {
        flow,
        row_duals: u,
        col_duals: v,
        pivots,
    })
}

/// Northwest-corner starting basis: always a spanning tree with exactly
/// `m + n - 1` cells, zero-flow cells included on degenerate ties.
fn northwest_corner<T: Scalar>(a: &[T], b: &[T]) -> Basis<T> {
    let m = a.len();
    let n = b.len();
    let mut basis = Basis {
        cells: Vec::with_capacity(m + n - 1),
        flows: Vec::with_capacity(m + n - 1),
        by_row: vec![Vec::new(); m],
        by_col: vec![Vec::new(); n],
    };
    let (mut i, mut j) = (0usize, 0usize);
    let mut ra = a[0];
    let mut cb = b[0];
    loop {
        let f = ra.min(cb).max(T::zero());
        basis.insert(i, j, f);
        ra -= f;
        cb -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        // advance exactly one index per step so the basis stays a tree
        if (ra <= T::zero() && i < m - 1) || j == n - 1 {
            i += 1;
            ra = a[i];
        } else {
            j += 1;
            cb = b[j];
        }
    }
    basis
}

/// Duals from the basis tree: `u_i + v_j = c_ij` on every basic cell, with
/// `u_0 = 0` as the root normalization.
fn compute_duals<T: Scalar>(basis: &Basis<T>, cost: &[T], n: usize, u: &mut [T], v: &mut [T]) {
    let m = u.len();
    let mut row_done = vec![false; m];
    let mut col_done = vec![false; v.len()];
    u[0] = T::zero();
    row_done[0] = true;
    // nodes: rows are 0..m, cols are m..m+n
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        if node < m {
            let i = node;
            for &e in &basis.by_row[i] {
                let (_, j) = basis.cells[e];
                if !col_done[j] {
                    v[j] = cost[i * n + j] - u[i];
                    col_done[j] = true;
                    stack.push(m + j);
                }
            }
        } else {
            let j = node - m;
            for &e in &basis.by_col[j] {
                let (i, _) = basis.cells[e];
                if !row_done[i] {
                    u[i] = cost[i * n + j] - v[j];
                    row_done[i] = true;
                    stack.push(i);
                }
            }
        }
    }
    debug_assert!(row_done.iter().all(|&d| d) && col_done.iter().all(|&d| d));
}

fn find_entering<T: Scalar>(
    cost: &[T],
    u: &[T],
    v: &[T],
    m: usize,
    n: usize,
    tol: T,
    bland: bool,
) -> Option<(usize, usize)> {
    let mut best = -tol;
    let mut cell = None;
    for i in 0..m {
        let row = &cost[i * n..(i + 1) * n];
        for j in 0..n {
            let r = row[j] - u[i] - v[j];
            if r < best {
                best = r;
                cell = Some((i, j));
                if bland {
                    return cell;
                }
            }
        }
    }
    cell
}

/// Edge path through the basis tree from column node `j0` to row node `i0`.
/// The first edge is incident to `j0`; consecutive edges alternate endpoint
/// types, so even positions are the "minus" edges of the pivot cycle.
fn tree_path<T: Scalar>(basis: &Basis<T>, m: usize, i0: usize, j0: usize) -> Vec<usize> {
    let total = m + basis.by_col.len();
    let mut parent_edge = vec![usize::MAX; total];
    let mut parent_node = vec![usize::MAX; total];
    let mut visited = vec![false; total];
    let start = m + j0;
    let target = i0;
    visited[start] = true;
    let mut stack = vec![start];
    while let Some(node) = stack.pop() {
        if node == target {
            break;
        }
        let edges = if node < m {
            &basis.by_row[node]
        } else {
            &basis.by_col[node - m]
        };
        for &e in edges {
            let (i, j) = basis.cells[e];
            let other = if node < m { m + j } else { i };
            if !visited[other] {
                visited[other] = true;
                parent_edge[other] = e;
                parent_node[other] = node;
                stack.push(other);
            }
        }
    }
    debug_assert!(visited[target], "basis must be connected");
    let mut path = Vec::new();
    let mut node = target;
    while node != start {
        path.push(parent_edge[node]);
        node = parent_node[node];
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_problem() {
        let sol = transportation_simplex(&[1.0f64], &[1.0], &[3.5]).unwrap();
        assert_eq!(sol.flow, vec![1.0]);
    }

    #[test]
    fn two_by_two_picks_cheap_diagonal() {
        // identity matching is cheaper
        let cost = vec![0.0f64, 1.0, 1.0, 0.0];
        let sol = transportation_simplex(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        assert!((sol.flow[0] - 0.5).abs() < 1e-15);
        assert!((sol.flow[3] - 0.5).abs() < 1e-15);
        assert!(sol.flow[1].abs() < 1e-15);
    }

    #[test]
    fn rectangular_instances_balance() {
        let a = [0.2f64, 0.3, 0.5];
        let b = [0.6, 0.4];
        let cost = vec![1.0, 2.0, 3.0, 0.5, 2.0, 2.0];
        let sol = transportation_simplex(&a, &b, &cost).unwrap();
        for i in 0..3 {
            let rs: f64 = (0..2).map(|j| sol.flow[i * 2 + j]).sum();
            assert!((rs - a[i]).abs() < 1e-12);
        }
        for j in 0..2 {
            let cs: f64 = (0..3).map(|i| sol.flow[i * 2 + j]).sum();
            assert!((cs - b[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_equal_weights_terminate() {
        // many exact ties force degenerate pivots
        let n = 6;
        let a = vec![1.0 / n as f64; n];
        let cost: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 13) as f64).collect();
        let sol = transportation_simplex(&a, &a, &cost).unwrap();
        let total: f64 = sol.flow.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duals_satisfy_feasibility_and_slackness() {
        let a = [0.25f64, 0.25, 0.5];
        let b = [0.3, 0.3, 0.4];
        let cost = vec![1.0, 4.0, 2.0, 3.0, 1.5, 2.5, 2.0, 2.0, 0.5];
        let sol = transportation_simplex(&a, &b, &cost).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let r = cost[i * 3 + j] - sol.row_duals[i] - sol.col_duals[j];
                assert!(r >= -1e-10, "reduced cost {r} negative at optimum");
                if sol.flow[i * 3 + j] > 1e-12 {
                    assert!(r.abs() <= 1e-10, "slackness violated: {r}");
                }
            }
        }
    }
}
