//! Brute-force reference for the flat distance on tiny measures.
//!
//! Solves the partial-transport linear program
//!
//! ```text
//! min  sum_ij |x_i - y_j| p_ij + sum_i d_i + sum_j c_j
//! s.t. sum_j p_ij + d_i = a_i,   sum_i p_ij + c_j = b_j,   p, d, c >= 0
//! ```
//!
//! by enumerating every basis of the equality system and keeping the cheapest
//! feasible vertex. Transport costs are not truncated here, so the oracle
//! shares no modelling shortcut with [`super::flat_distance`].

use super::{check_dims, euclidean, DiscreteMeasure, Measure};
use crate::error::{Error, Result};

pub const ORACLE_MAX_ATOMS: usize = 4;

const PIVOT_EPS: f64 = 1e-12;
const FEASIBILITY_EPS: f64 = 1e-12;

pub fn flat_distance_oracle(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    for m in [a, b] {
        if m.len() > ORACLE_MAX_ATOMS {
            return Err(Error::TooLarge {
                cap: ORACLE_MAX_ATOMS,
                found: m.len(),
            });
        }
    }
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Ok(a.mass() + b.mass());
    }

    let rows = n + m;
    // columns: transport (i, j), then destruction i, then creation j
    let mut columns: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n * m + n + m);
    for i in 0..n {
        for j in 0..m {
            let mut col = vec![0.0; rows];
            col[i] = 1.0;
            col[n + j] = 1.0;
            columns.push((col, euclidean(a.position(i), b.position(j))));
        }
    }
    for r in 0..rows {
        let mut col = vec![0.0; rows];
        col[r] = 1.0;
        columns.push((col, 1.0));
    }
    let rhs: Vec<f64> = a.weights().iter().chain(b.weights()).copied().collect();

    let mut best = f64::INFINITY;
    let mut basis: Vec<usize> = (0..rows).collect();
    loop {
        if let Some(x) = solve_basis(&columns, &basis, &rhs) {
            if x.iter().all(|&v| v >= -FEASIBILITY_EPS) {
                let cost: f64 = basis
                    .iter()
                    .zip(&x)
                    .map(|(&c, &v)| columns[c].1 * v.max(0.0))
                    .sum();
                best = best.min(cost);
            }
        }
        if !next_combination(&mut basis, columns.len()) {
            break;
        }
    }
    Ok(best)
}

fn solve_basis(columns: &[(Vec<f64>, f64)], basis: &[usize], rhs: &[f64]) -> Option<Vec<f64>> {
    let k = basis.len();
    let mut mat: Vec<Vec<f64>> = (0..k)
        .map(|r| {
            let mut row: Vec<f64> = basis.iter().map(|&c| columns[c].0[r]).collect();
            row.push(rhs[r]);
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).max_by(|&p, &q| mat[p][col].abs().total_cmp(&mat[q][col].abs()))?;
        if mat[pivot][col].abs() < PIVOT_EPS {
            return None;
        }
        mat.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = mat[r][col] / mat[col][col];
                if f != 0.0 {
                    let pivot_row = mat[col].clone();
                    for (m, p) in mat[r][col..=k].iter_mut().zip(&pivot_row[col..=k]) {
                        *m -= f * p;
                    }
                }
            }
        }
    }
    Some((0..k).map(|r| mat[r][k] / mat[r][r]).collect())
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coincident_diracs() {
        let d = DiscreteMeasure::dirac(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(flat_distance_oracle(&d, &d).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn short_transport() {
        let a = DiscreteMeasure::dirac(0.0, 1.0).unwrap();
        let b = DiscreteMeasure::dirac(0.5, 1.0).unwrap();
        assert_abs_diff_eq!(flat_distance_oracle(&a, &b).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn long_distance_prefers_destruction() {
        let a = DiscreteMeasure::dirac(0.0, 1.0).unwrap();
        let b = DiscreteMeasure::dirac(3.0, 1.0).unwrap();
        assert_abs_diff_eq!(flat_distance_oracle(&a, &b).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn too_many_atoms() {
        let a = DiscreteMeasure::from_1d(&[0.0, 1.0, 2.0, 3.0, 4.0], &[1.0; 5]).unwrap();
        assert!(matches!(
            flat_distance_oracle(&a, &a),
            Err(Error::TooLarge { cap: 4, found: 5 })
        ));
    }

    #[test]
    fn combinations_are_exhaustive() {
        let mut idx = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut idx, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
    }
}
