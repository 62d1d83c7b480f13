//! Dense revised simplex, used as the correctness oracle for the homotopy
//! tracer and as a fixed-budget fallback solver.
//!
//! The LP `min cᵀx, Ax ≥ b, eᵀx ≤ ψ, x ≥ 0` is brought to equality form with
//! one surplus column per row and one slack for the budget row. Rows whose
//! surplus cannot start basic get an artificial column and phase one drives
//! those to zero. The basis inverse is kept explicitly and updated by
//! elementary row operations; it is refactorized from scratch periodically
//! and once more before the solution is reported.

use nalgebra::DMatrix;

use crate::error::{RalpError, Result};
use crate::lp::{dual_of, StandardLP};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Smallest admissible pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-10;
const OPT_TOL: f64 = 1e-10;
/// Basic values at or below this are treated as zero in the ratio test.
const ZERO_LEVEL: f64 = 1e-11;
/// After this many consecutive degenerate pivots pricing switches from
/// most-negative reduced cost to Bland's lowest-index rule.
const DEGENERATE_STREAK: usize = 25;
const REFACTOR_EVERY: usize = 50;
/// Relaxation of the step bound in the ratio test.
const HARRIS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Proof of a non-optimal status.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// `y, λ ≥ 0` with `Aᵀy − eλ ≤ 0` and `bᵀy − ψλ > 0`.
    Farkas { y: Vec<f64>, lambda: f64 },
    /// `d ≥ 0` with `Ad ≥ 0`, `eᵀd ≤ 0` and `cᵀd < 0`.
    Ray(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub certificate: Option<Certificate>,
    /// `(entering, leaving)` column ids of every pivot, in order.
    pub pivots: Vec<(usize, usize)>,
}

/// Residuals of the optimality conditions, all in sup-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kkt {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl Kkt {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

/// Optimality residuals of a primal/dual pair.
pub fn kkt_residuals(lp: &StandardLP, x: &[f64], y: &[f64], lambda: f64) -> Kkt {
    let dual = dual_of(lp);
    let slack = lp.slacks(x);
    let reduced = dual.reduced_costs(y, lambda);
    let mut comp = (lambda * (lp.psi - lp.budget_used(x))).abs();
    for (yj, s) in y.iter().zip(&slack) {
        comp = comp.max((yj * s).abs());
    }
    for (xi, d) in x.iter().zip(&reduced) {
        comp = comp.max((xi * d).abs());
    }
    Kkt { primal: lp.primal_infeasibility(x), dual: dual.infeasibility(y, lambda), complementarity: comp }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

struct Tableau<'a> {
    lp: &'a StandardLP,
    rows: usize,
    /// Row index of each artificial column.
    artificial_rows: Vec<usize>,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: Vec<(usize, usize)>,
    since_refactor: usize,
}

impl<'a> Tableau<'a> {
    fn n(&self) -> usize {
        self.lp.num_vars()
    }

    fn m(&self) -> usize {
        self.lp.num_rows()
    }

    fn first_artificial(&self) -> usize {
        self.n() + self.m() + 1
    }

    fn num_cols(&self) -> usize {
        self.first_artificial() + self.artificial_rows.len()
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.first_artificial()
    }

    fn rhs(&self) -> Vec<f64> {
        let mut r = self.lp.b.clone();
        r.push(self.lp.psi);
        r
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let (n, m) = (self.n(), self.m());
        let mut col = vec![0.0; self.rows];
        if j < n {
            for (i, c) in col.iter_mut().take(m).enumerate() {
                *c = self.lp.a[(i, j)];
            }
            col[m] = self.lp.e[j];
        } else if j < n + m {
            col[j - n] = -1.0;
        } else if j == n + m {
            col[m] = 1.0;
        } else {
            col[self.artificial_rows[j - self.first_artificial()]] = 1.0;
        }
        col
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match phase {
            Phase::One => {
                if self.is_artificial(j) {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if j < self.n() {
                    self.lp.c[j]
                } else {
                    0.0
                }
            }
        }
    }

    fn new(lp: &'a StandardLP) -> Self {
        let (n, m) = (lp.num_vars(), lp.num_rows());
        let rows = m + 1;
        let artificial_rows: Vec<usize> = (0..m).filter(|&j| lp.b[j] > 0.0).collect();
        let total = n + m + 1 + artificial_rows.len();
        let mut t = Tableau {
            lp,
            rows,
            artificial_rows,
            basis: vec![0; rows],
            in_basis: vec![None; total],
            binv: vec![0.0; rows * rows],
            xb: vec![0.0; rows],
            pivots: Vec::new(),
            since_refactor: 0,
        };
        let mut art = 0;
        for j in 0..m {
            let col = if lp.b[j] > 0.0 {
                let c = t.first_artificial() + art;
                art += 1;
                t.binv[j * rows + j] = 1.0;
                t.xb[j] = lp.b[j];
                c
            } else {
                t.binv[j * rows + j] = -1.0;
                t.xb[j] = -lp.b[j];
                n + j
            };
            t.basis[j] = col;
            t.in_basis[col] = Some(j);
        }
        t.basis[m] = n + m;
        t.in_basis[n + m] = Some(m);
        t.binv[m * rows + m] = 1.0;
        t.xb[m] = lp.psi;
        t
    }

    /// Row vector `c_Bᵀ B⁻¹`.
    fn prices(&self, phase: Phase) -> Vec<f64> {
        let r = self.rows;
        let mut pi = vec![0.0; r];
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = self.cost(j, phase);
            if cb != 0.0 {
                let row = &self.binv[i * r..(i + 1) * r];
                for (p, b) in pi.iter_mut().zip(row) {
                    *p += cb * b;
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, j: usize, pi: &[f64], phase: Phase) -> f64 {
        let (n, m) = (self.n(), self.m());
        let c = self.cost(j, phase);
        if j < n {
            let col = self.lp.a.column(j);
            let dot: f64 = col.iter().zip(pi).map(|(a, p)| a * p).sum();
            c - dot - pi[m] * self.lp.e[j]
        } else if j < n + m {
            c + pi[j - n]
        } else if j == n + m {
            c - pi[m]
        } else {
            c - pi[self.artificial_rows[j - self.first_artificial()]]
        }
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let r = self.rows;
        (0..r)
            .map(|i| {
                self.binv[i * r..(i + 1) * r]
                    .iter()
                    .zip(col)
                    .map(|(b, c)| b * c)
                    .sum()
            })
            .collect()
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &[f64]) {
        let r = self.rows;
        let theta = self.xb[row] / alpha[row];
        for i in 0..r {
            if i != row {
                self.xb[i] -= theta * alpha[i];
            }
        }
        self.xb[row] = theta;
        let piv = alpha[row];
        for k in 0..r {
            self.binv[row * r + k] /= piv;
        }
        let pivot_row: Vec<f64> = self.binv[row * r..(row + 1) * r].to_vec();
        for i in 0..r {
            let f = alpha[i];
            if i != row && f != 0.0 {
                let dst = &mut self.binv[i * r..(i + 1) * r];
                for (d, p) in dst.iter_mut().zip(&pivot_row) {
                    *d -= f * p;
                }
            }
        }
        let leaving = self.basis[row];
        self.in_basis[leaving] = None;
        self.basis[row] = entering;
        self.in_basis[entering] = Some(row);
        self.pivots.push((entering, leaving));
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            // A failed refactorization keeps the updated inverse.
            let _ = self.refactor();
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let r = self.rows;
        let mut bmat = DMatrix::zeros(r, r);
        for (k, &j) in self.basis.iter().enumerate() {
            for (i, v) in self.column(j).into_iter().enumerate() {
                bmat[(i, k)] = v;
            }
        }
        let inv = bmat
            .lu()
            .try_inverse()
            .ok_or_else(|| RalpError::Solver("basis matrix became singular".into()))?;
        for i in 0..r {
            for k in 0..r {
                self.binv[i * r + k] = inv[(i, k)];
            }
        }
        self.xb = self.ftran(&self.rhs());
        self.since_refactor = 0;
        Ok(())
    }

    /// Two-pass Harris ratio test: the step bound is relaxed by
    /// `HARRIS_TOL`, then the largest pivot within the bound leaves (in Bland
    /// mode, the lowest basic index among pivots of comparable size).
    /// Returns `(row, step)`.
    fn ratio_test(&self, alpha: &[f64], bland: bool) -> Option<(usize, f64)> {
        let level = |i: usize| if self.xb[i] <= ZERO_LEVEL { 0.0 } else { self.xb[i] };
        let bound = alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a > PIVOT_TOL)
            .map(|(i, a)| (level(i) + HARRIS_TOL) / a)
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        let candidates: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > PIVOT_TOL && level(i) / alpha[i] <= bound).collect();
        let biggest = candidates.iter().map(|&i| alpha[i]).fold(0.0, f64::max);
        let row = if bland {
            *candidates
                .iter()
                .filter(|&&i| alpha[i] >= 1e-3 * biggest)
                .min_by_key(|&&i| self.basis[i])
                .expect("the largest pivot qualifies")
        } else {
            *candidates
                .iter()
                .max_by(|&&i, &&j| alpha[i].total_cmp(&alpha[j]).then(self.basis[j].cmp(&self.basis[i])))
                .expect("at least one candidate")
        };
        Some((row, level(row) / alpha[row]))
    }

    /// Runs simplex iterations for one phase. Returns the unbounded entering
    /// column if the phase objective is unbounded.
    fn run(&mut self, phase: Phase, cap: usize) -> Result<Option<(usize, Vec<f64>)>> {
        let mut bland = false;
        let mut streak = 0;
        let mut iters = 0;
        loop {
            let pi = self.prices(phase);
            let mut entering = None;
            let mut best = -OPT_TOL;
            for j in 0..self.num_cols() {
                if self.in_basis[j].is_some() || (phase == Phase::Two && self.is_artificial(j)) {
                    continue;
                }
                let d = self.reduced_cost(j, &pi, phase);
                if d < best {
                    entering = Some(j);
                    best = d;
                    if bland {
                        break;
                    }
                }
            }
            let Some(q) = entering else {
                // Confirm optimality on a fresh factorization.
                if self.since_refactor > 0 && self.refactor().is_ok() {
                    continue;
                }
                return Ok(None);
            };
            let alpha = self.ftran(&self.column(q));
            let leave = self.ratio_test(&alpha, bland);
            let Some((row, ratio)) = leave else {
                if self.since_refactor > 0 && self.refactor().is_ok() {
                    continue;
                }
                return Ok(Some((q, alpha)));
            };
            if ratio == 0.0 {
                streak += 1;
                if streak >= DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            self.pivot(row, q, &alpha);
            iters += 1;
            if iters > cap {
                return Err(RalpError::IterationCap {
                    cap,
                    diagnostic: format!("simplex phase did not terminate; last pivot ({q}, row {row})"),
                });
            }
        }
    }

    /// Pivots zero-level artificials out of the basis where possible.
    fn drive_out_artificials(&mut self) {
        for row in 0..self.rows {
            if !self.is_artificial(self.basis[row]) {
                continue;
            }
            let r = self.rows;
            for j in 0..self.first_artificial() {
                if self.in_basis[j].is_some() {
                    continue;
                }
                let col = self.column(j);
                let a_row: f64 = self.binv[row * r..(row + 1) * r].iter().zip(&col).map(|(b, c)| b * c).sum();
                if a_row.abs() > 1e-7 {
                    let alpha = self.ftran(&col);
                    self.pivot(row, j, &alpha);
                    break;
                }
            }
        }
    }
}

/// Solves a [`StandardLP`] to optimality or certifies infeasibility or
/// unboundedness. Deterministic: the same input yields the same pivot log.
pub fn solve_lp(lp: &StandardLP) -> Result<LpSolution> {
    let (n, m) = (lp.num_vars(), lp.num_rows());
    let mut t = Tableau::new(lp);
    let cap = 50 * (t.num_cols() + t.rows) + 1000;
    let scale = 1.0 + lp.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));

    if !t.artificial_rows.is_empty() {
        t.run(Phase::One, cap)?;
        t.refactor()?;
        let infeasibility: f64 = t
            .basis
            .iter()
            .zip(&t.xb)
            .filter(|(j, _)| t.is_artificial(**j))
            .map(|(_, v)| v.max(0.0))
            .sum();
        if infeasibility > FEAS_TOL * scale {
            let pi = t.prices(Phase::One);
            let cert = Certificate::Farkas { y: pi[..m].to_vec(), lambda: -pi[m] };
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                y: vec![0.0; m],
                lambda: 0.0,
                objective: f64::NAN,
                certificate: Some(cert),
                pivots: t.pivots,
            });
        }
        t.drive_out_artificials();
    }

    if let Some((q, alpha)) = t.run(Phase::Two, cap)? {
        let mut d = vec![0.0; n];
        if q < n {
            d[q] = 1.0;
        }
        for (i, &j) in t.basis.iter().enumerate() {
            if j < n {
                d[j] = -alpha[i];
            }
        }
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            y: vec![0.0; m],
            lambda: 0.0,
            objective: f64::NEG_INFINITY,
            certificate: Some(Certificate::Ray(d)),
            pivots: t.pivots,
        });
    }
    t.refactor()?;
    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.xb[i].max(0.0);
        }
    }
    let pi = t.prices(Phase::Two);
    let y: Vec<f64> = pi[..m].iter().map(|v| v.max(0.0)).collect();
    let lambda = (-pi[m]).max(0.0);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective(&x),
        x,
        y,
        lambda,
        certificate: None,
        pivots: t.pivots,
    })
}

/// Outcome of [`solve_with_constraint_generation`].
#[derive(Debug, Clone)]
pub struct GeneratedSolution {
    pub solution: LpSolution,
    /// Rows present in the final restricted LP.
    pub active_rows: Vec<usize>,
    pub rounds: usize,
    /// Largest violation over all rows of the returned point.
    pub max_violation: f64,
}

/// Solves with a growing subset of rows: start from `initial` rows, add up to
/// `batch` of the most violated rows per round, stop when no row is violated
/// by more than [`FEAS_TOL`]. The returned duals are expanded to all rows.
pub fn solve_with_constraint_generation(lp: &StandardLP, batch: usize) -> Result<GeneratedSolution> {
    let m = lp.num_rows();
    if m == 0 {
        return Err(RalpError::invalid("LP has no rows"));
    }
    let batch = batch.max(1);
    // Seed with the rows of largest right-hand side.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| lp.b[j].total_cmp(&lp.b[i]).then(i.cmp(&j)));
    let mut rows: Vec<usize> = order.into_iter().take(batch.min(m)).collect();
    rows.sort_unstable();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let sub = StandardLP {
            c: lp.c.clone(),
            a: lp.a.select_rows(rows.iter()),
            b: rows.iter().map(|&j| lp.b[j]).collect(),
            e: lp.e.clone(),
            psi: lp.psi,
            splits: lp.splits.clone(),
        };
        let sol = solve_lp(&sub)?;
        if sol.status != LpStatus::Optimal {
            return Ok(GeneratedSolution { solution: sol, active_rows: rows, rounds, max_violation: f64::NAN });
        }
        let slack = lp.slacks(&sol.x);
        let mut violated: Vec<(usize, f64)> =
            slack.iter().enumerate().filter(|(_, s)| **s < -FEAS_TOL).map(|(j, s)| (j, *s)).collect();
        let max_violation = slack.iter().fold(0.0f64, |a, s| a.max(-s));
        if violated.is_empty() {
            let mut y = vec![0.0; m];
            for (k, &j) in rows.iter().enumerate() {
                y[j] = sol.y[k];
            }
            let full = LpSolution { y, ..sol };
            return Ok(GeneratedSolution { solution: full, active_rows: rows, rounds, max_violation });
        }
        violated.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        rows.extend(violated.into_iter().take(batch).map(|(j, _)| j));
        rows.sort_unstable();
        rows.dedup();
    }
}
