//! Dense elimination with complete pivoting for the small active-set systems
//! of the path tracer. Complete pivoting reveals rank, which the tracer uses
//! to detect degenerate active sets instead of silently dividing by noise.
//! Rows and columns are equilibrated first so badly scaled features do not
//! masquerade as rank loss.

use nalgebra::DMatrix;

use crate::error::{RalpError, Result};

/// Pivots smaller than this fraction of the largest entry count as zero.
pub const RANK_TOL: f64 = 1e-11;

struct Echelon {
    cols: usize,
    /// Row-major upper-trapezoidal factor, columns in pivot order.
    u: Vec<f64>,
    /// `perm[k]` is the original column eliminated at step `k`.
    perm: Vec<usize>,
    rank: usize,
    rhs: Vec<Vec<f64>>,
    /// Column `j` of the factored matrix is column `j` of the input divided
    /// by `col_scale[j]`.
    col_scale: Vec<f64>,
}

impl Echelon {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.cols + j]
    }

    /// Back substitution over the leading `rank × rank` block with the
    /// trailing permuted coordinates fixed to `tail`.
    fn back_substitute(&self, rhs: &[f64], tail: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let mut z = vec![0.0; self.cols];
        z[r..].copy_from_slice(tail);
        for k in (0..r).rev() {
            let mut s = rhs[k];
            for j in k + 1..self.cols {
                s -= self.at(k, j) * z[j];
            }
            z[k] = s / self.at(k, k);
        }
        let mut out = vec![0.0; self.cols];
        for (k, &j) in self.perm.iter().enumerate() {
            out[j] = z[k] / self.col_scale[j];
        }
        out
    }
}

fn eliminate(a: &DMatrix<f64>, rhs: &[Vec<f64>]) -> Echelon {
    let (rows, cols) = a.shape();
    let positive = |m: f64| if m > 0.0 { m } else { 1.0 };
    let col_scale: Vec<f64> = (0..cols).map(|j| positive(a.column(j).amax())).collect();
    let mut u = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            u[i * cols + j] = a[(i, j)] / col_scale[j];
        }
    }
    let mut rhs: Vec<Vec<f64>> = rhs.to_vec();
    for i in 0..rows {
        let row_scale = positive(u[i * cols..(i + 1) * cols].iter().fold(0.0f64, |m, v| m.max(v.abs())));
        u[i * cols..(i + 1) * cols].iter_mut().for_each(|v| *v /= row_scale);
        for r in rhs.iter_mut() {
            r[i] /= row_scale;
        }
    }
    let mut perm: Vec<usize> = (0..cols).collect();
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rank = 0;
    for k in 0..rows.min(cols) {
        let (mut pi, mut pj, mut pv) = (k, k, 0.0);
        for i in k..rows {
            for j in k..cols {
                let v = u[i * cols + j].abs();
                if v > pv {
                    (pi, pj, pv) = (i, j, v);
                }
            }
        }
        if pv <= RANK_TOL * scale || pv == 0.0 {
            break;
        }
        if pi != k {
            for j in 0..cols {
                u.swap(k * cols + j, pi * cols + j);
            }
            for r in rhs.iter_mut() {
                r.swap(k, pi);
            }
        }
        if pj != k {
            for i in 0..rows {
                u.swap(i * cols + k, i * cols + pj);
            }
            perm.swap(k, pj);
        }
        let piv = u[k * cols + k];
        for i in k + 1..rows {
            let f = u[i * cols + k] / piv;
            if f == 0.0 {
                continue;
            }
            for j in k..cols {
                u[i * cols + j] -= f * u[k * cols + j];
            }
            for r in rhs.iter_mut() {
                r[i] -= f * r[k];
            }
        }
        rank += 1;
    }
    Echelon { cols, u, perm, rank, rhs, col_scale }
}

/// Numerical rank of `a`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    eliminate(a, &[]).rank
}

/// Unit (sup-norm) vector spanning the null space of an `r × (r+1)` matrix.
/// Fails with [`RalpError::Degenerate`] when the null space is not one
/// dimensional.
pub fn null_vector(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (rows, cols) = a.shape();
    if cols != rows + 1 {
        return Err(RalpError::dim("null-space system columns", rows + 1, cols));
    }
    let ech = eliminate(a, &[]);
    if ech.rank != rows {
        return Err(RalpError::Degenerate(format!(
            "null space has dimension {} instead of 1",
            cols - ech.rank
        )));
    }
    let mut v = ech.back_substitute(&vec![0.0; rows], &[1.0]);
    let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Solves `a x = rhs` for each right-hand side. `a` must be square and of
/// full numerical rank.
pub fn solve(a: &DMatrix<f64>, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(RalpError::dim("square system columns", rows, cols));
    }
    if let Some(r) = rhs.iter().find(|r| r.len() != rows) {
        return Err(RalpError::dim("right-hand side", rows, r.len()));
    }
    let ech = eliminate(a, rhs);
    if ech.rank != rows {
        return Err(RalpError::Degenerate(format!("{rows}×{rows} active system has rank {}", ech.rank)));
    }
    Ok(ech.rhs.iter().map(|r| ech.back_substitute(r, &[])).collect())
}
