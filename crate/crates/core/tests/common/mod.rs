//! Independent reference values for the integration tests.

#![allow(dead_code)]

use orrw::walk::FiniteTree;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(row);
                for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Probability that the simple walk on `tree` started at its centre hits
/// `target` before the lower end: the harmonic function with boundary values
/// 0 at the lower end and 1 at `target`, reflecting everywhere else.
pub fn harmonic_hit_probability(tree: &FiniteTree, target: usize) -> f64 {
    let n = tree.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for v in 0..n {
        a[v][v] = 1.0;
        if v == tree.lower() {
            continue;
        }
        if v == target {
            b[v] = 1.0;
            continue;
        }
        let nbrs: Vec<usize> = tree.neighbors(v).collect();
        let w = 1.0 / nbrs.len() as f64;
        for u in nbrs {
            a[v][u] -= w;
        }
    }
    solve(a, b)[tree.center()]
}
