//! Reference solvers used to check the library. They share no code with
//! the implementations under test.
#![allow(dead_code)]

use nalgebra::{Cholesky, SymmetricEigen};

use drddl::random::{gaussian_mat, seeded};
use drddl::{Mat, Vector};

pub fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    gaussian_mat(rows, cols, &mut seeded(seed))
}

/// `(A^T A)^{-1} A^T Y` by Cholesky of the normal matrix.
pub fn normal_equations(a: &Mat, y: &Mat) -> Mat {
    let chol = Cholesky::new(a.transpose() * a).expect("A must have full column rank");
    chol.solve(&(a.transpose() * y))
}

/// Largest eigenvalue of `A^T A` from a dense symmetric eigensolver.
pub fn gram_max_eig(a: &Mat) -> f64 {
    SymmetricEigen::new(a.transpose() * a).eigenvalues.max()
}

pub fn lasso_objective(d: &Mat, y: &Mat, z: &Mat, lambda: f64) -> f64 {
    (y - d * z).norm_squared() + lambda * z.iter().map(|v| v.abs()).sum::<f64>()
}

fn shrink(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Cyclic coordinate descent for `||y - D z||^2 + lambda ||z||_1`, one column
/// at a time, run until no coordinate moves by more than `1e-14`.
pub fn cd_lasso(d: &Mat, y: &Mat, lambda: f64) -> Mat {
    let k = d.ncols();
    let mut z = Mat::zeros(k, y.ncols());
    let col_sq: Vec<f64> = (0..k).map(|j| d.column(j).norm_squared()).collect();
    for c in 0..y.ncols() {
        let yc = y.column(c).into_owned();
        let mut zc = Vector::zeros(k);
        let mut r = yc.clone();
        for _sweep in 0..100_000 {
            let mut biggest: f64 = 0.0;
            for j in 0..k {
                if col_sq[j] == 0.0 {
                    continue;
                }
                let dj = d.column(j);
                let rho = dj.dot(&r) + col_sq[j] * zc[j];
                let new = shrink(rho, lambda / 2.0) / col_sq[j];
                let delta = new - zc[j];
                if delta != 0.0 {
                    r -= dj * delta;
                    zc[j] = new;
                }
                biggest = biggest.max(delta.abs());
            }
            if biggest < 1e-14 {
                break;
            }
        }
        z.set_column(c, &zc);
    }
    z
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

/// Exact least absolute deviations by vertex enumeration: some minimizer of
/// `||y - D z||_1` interpolates `k` of the rows, so every nonsingular
/// `k`-row subsystem is solved and the cheapest solution kept.
pub fn lad_vertex(d: &Mat, y: &Vector) -> (Vector, f64) {
    let (m, k) = d.shape();
    let mut best: Option<(Vector, f64)> = None;
    for rows in subsets(m, k) {
        let a = Mat::from_fn(k, k, |i, j| d[(rows[i], j)]);
        let b = Vector::from_fn(k, |i, _| y[rows[i]]);
        let lu = a.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(z) = lu.solve(&b) else { continue };
        let cost = (y - d * &z).lp_norm(1);
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((z, cost));
        }
    }
    best.expect("no nonsingular subsystem")
}

/// Brute-force scalar l1 fit over a grid.
pub fn lad_grid_scalar(d: &[f64], y: &[f64], lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=n {
        let z = lo + i as f64 * step;
        let cost: f64 = d.iter().zip(y).map(|(a, b)| (b - a * z).abs()).sum();
        if cost < best.1 {
            best = (z, cost);
        }
    }
    best
}

/// Best rank-`k` Frobenius approximation error `sum_{i>k} sigma_i^2`.
pub fn truncated_svd_residual(y: &Mat, k: usize) -> f64 {
    let mut s: Vec<f64> = y.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s.iter().skip(k).map(|v| v * v).sum()
}

/// Eigenvectors of a symmetric matrix sorted by decreasing eigenvalue.
pub fn sorted_eigvecs(c: &Mat) -> Vec<(f64, Vector)> {
    let eig = SymmetricEigen::new(c.clone());
    let mut pairs: Vec<(f64, Vector)> = (0..c.nrows())
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    pairs
}

pub fn rel_l1(a: &Mat, b: &Mat) -> f64 {
    (a - b).iter().map(|v| v.abs()).sum::<f64>() / b.iter().map(|v| v.abs()).sum::<f64>()
}
