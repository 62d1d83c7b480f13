//! Parametric solution of `min cᵀx, Ax ≥ b, eᵀx ≤ ψ, x ≥ 0` for every budget
//! `ψ` in `[0, ψ_max]` by active-set continuation.
//!
//! The tracer keeps a set `B` of active (possibly nonzero) variables and a set
//! `C` of active rows. Along a segment `|B| = |C| + 1`, and
//!
//! ```text
//! M = [A_CB; e_Bᵀ],  M x_B = (b_C, ψ)
//! ```
//!
//! is square, so `x` moves linearly in `ψ` while the duals stay fixed. When a
//! row binds or a variable reaches zero the sets become balanced
//! (`|B| = |C|`) and the duals `(y_C, λ)` move along the one-dimensional null
//! space of `[A_CBᵀ, −e_B]` until a dual reaches zero, a reduced cost reaches
//! zero, or `λ` reaches zero. The last case means the budget no longer binds
//! and the solution is frozen for every larger `ψ`.
//!
//! Every quantity is recomputed from the square systems after each event, so
//! rounding does not accumulate along long paths.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{RalpError, Result};
use crate::linalg;
use crate::lp::StandardLP;

/// Values at or below this count as zero when deciding set membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Right-hand-side perturbation used to retry after a degenerate failure.
pub const PERTURBATION: f64 = 1e-9;
/// Rates of change smaller than this do not block a step.
const RATE_TOL: f64 = 1e-11;
/// Relative width within which step lengths count as equal.
const TIE_TOL: f64 = 1e-12;

/// The event that ends a dual update or a primal segment. The declaration
/// order is the tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    /// An active row's dual reached zero; the row leaves `C`.
    DualLeaves,
    /// An inactive variable's reduced cost reached zero; it joins `B`.
    VariableEnters,
    /// The budget dual `λ` reached zero; the path ends.
    BudgetSlack,
    /// An inactive row became tight; it joins `C`.
    RowBinds,
    /// An active variable reached zero; it leaves `B`.
    VariableLeaves,
    /// The requested end of the budget range.
    PsiMax,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::DualLeaves => "dual_leaves",
            EventKind::VariableEnters => "variable_enters",
            EventKind::BudgetSlack => "budget_slack",
            EventKind::RowBinds => "row_binds",
            EventKind::VariableLeaves => "variable_leaves",
            EventKind::PsiMax => "psi_max",
        }
    }
}

/// A resolved event, in path order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    /// Row index for row events, column index for variable events.
    pub index: usize,
    pub psi: f64,
    /// Length of the step that ended at this event (in `ψ` for primal
    /// events, along the normalized dual direction for dual events).
    pub step: f64,
}

/// Step result of a ratio test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub tau: f64,
    pub kind: EventKind,
    pub index: usize,
}

/// Search direction of either phase, aligned with the active sets.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    /// `Δy` over the active rows and `Δλ`.
    Dual { dy: Vec<f64>, dlambda: f64 },
    /// `Δx` over the active variables, per unit of `ψ`.
    Primal { dx: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Init,
    RowAdded(usize),
    VarRemoved(usize),
}

/// Current point of the continuation.
#[derive(Debug, Clone)]
pub struct HomotopyState<'a> {
    lp: &'a StandardLP,
    pub psi: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: f64,
    active_vars: Vec<usize>,
    active_cons: Vec<usize>,
    pending: Pending,
}

fn insert_sorted(v: &mut Vec<usize>, i: usize) {
    if let Err(pos) = v.binary_search(&i) {
        v.insert(pos, i);
    }
}

fn remove_sorted(v: &mut Vec<usize>, i: usize) {
    if let Ok(pos) = v.binary_search(&i) {
        v.remove(pos);
    }
}

fn is_mirror(lp: &StandardLP, p: usize, q: usize) -> bool {
    lp.c[p] == -lp.c[q] && lp.a.column(p).iter().zip(lp.a.column(q).iter()).all(|(u, v)| *u == -*v)
}

/// Keeps the candidate with the smaller step, breaking near-ties by event
/// kind and then by index.
fn better(cand: Step, best: Option<Step>) -> Option<Step> {
    match best {
        None => Some(cand),
        Some(b) => {
            let tol = TIE_TOL * (1.0 + b.tau.abs());
            let wins = cand.tau < b.tau - tol
                || (cand.tau <= b.tau + tol && (cand.kind, cand.index) < (b.kind, b.index));
            Some(if wins { cand } else { b })
        }
    }
}

/// Solution at `ψ = 0` in closed form, with its active sets.
///
/// At zero budget only the unregularized columns (`e_i = 0`) may be nonzero.
/// Supported shapes are no such column, one such column, or one mirrored pair
/// (`A_q = −A_p`, `c_q = −c_p`) encoding a free variable such as the weight of
/// a constant feature. The binding row is the one with the largest ratio
/// `b_j / a_j`, lowest index among ties.
pub fn init_at_zero(lp: &StandardLP) -> Result<HomotopyState<'_>> {
    let (m, n) = (lp.num_rows(), lp.num_vars());
    let free: Vec<usize> = (0..n).filter(|&i| lp.e[i] == 0.0).collect();
    let (plus, minus) = match free.as_slice() {
        [] => (None, None),
        [k] => (Some(*k), None),
        [p, q] if is_mirror(lp, *p, *q) => (Some(*p), Some(*q)),
        _ => {
            return Err(RalpError::invalid(
                "path initialization needs at most one unregularized column or one mirrored pair",
            ))
        }
    };
    let scale = 1.0 + lp.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; m];
    let mut active_vars = Vec::new();
    let mut active_cons = Vec::new();

    match plus {
        None => {
            if let Some(j) = (0..m).find(|&j| lp.b[j] > 1e-12 * scale) {
                return Err(RalpError::invalid(format!("row {j} is infeasible at zero budget")));
            }
        }
        Some(k) => {
            let col = lp.a.column(k);
            let mut lo: Option<(usize, f64)> = None;
            let mut hi: Option<(usize, f64)> = None;
            for j in 0..m {
                let (aj, bj) = (col[j], lp.b[j]);
                if aj > 0.0 {
                    let r = bj / aj;
                    if lo.is_none_or(|(_, v)| r > v + 1e-12 * (1.0 + v.abs())) {
                        lo = Some((j, r));
                    }
                } else if aj < 0.0 {
                    let r = bj / aj;
                    if hi.is_none_or(|(_, v)| r < v - 1e-12 * (1.0 + v.abs())) {
                        hi = Some((j, r));
                    }
                } else if bj > 1e-12 * scale {
                    return Err(RalpError::invalid(format!("row {j} is infeasible at zero budget")));
                }
            }
            let floor = if minus.is_none() { Some(0.0) } else { None };
            let lower = match (lo, floor) {
                (Some((_, v)), Some(f)) if v <= f => (None, f),
                (Some((j, v)), _) => (Some(j), v),
                (None, Some(f)) => (None, f),
                (None, None) => (None, f64::NEG_INFINITY),
            };
            let ck = lp.c[k];
            let (row, z) = if ck >= 0.0 && lower.1.is_finite() {
                lower
            } else if let Some((j, v)) = hi {
                (Some(j), v)
            } else if lower.1.is_finite() {
                lower
            } else {
                return Err(RalpError::Unbounded("objective is unbounded at zero budget".into()));
            };
            if let Some((_, v)) = hi {
                if lower.1 > v + 1e-9 * scale {
                    return Err(RalpError::invalid("constraints are infeasible at zero budget"));
                }
            }
            if let Some(j) = row {
                let var = if z >= 0.0 { k } else { minus.expect("negative value needs a mirrored column") };
                x[var] = z.abs();
                active_vars.push(var);
                active_cons.push(j);
                y[j] = ck / col[j];
            }
        }
    }

    let mut lambda = 0.0f64;
    for i in (0..n).filter(|&i| lp.e[i] > 0.0) {
        let aty: f64 = active_cons.iter().map(|&j| lp.a[(j, i)] * y[j]).sum();
        lambda = lambda.max((aty - lp.c[i]) / lp.e[i]);
    }
    Ok(HomotopyState {
        lp,
        psi: 0.0,
        x,
        y,
        lambda,
        active_vars,
        active_cons,
        pending: Pending::Init,
    })
}

impl<'a> HomotopyState<'a> {
    pub fn active_vars(&self) -> &[usize] {
        &self.active_vars
    }

    pub fn active_cons(&self) -> &[usize] {
        &self.active_cons
    }

    /// `[A_CB; e_Bᵀ]`, rows `C` then the budget row, columns `B`.
    fn active_matrix(&self) -> DMatrix<f64> {
        let (b, c) = (&self.active_vars, &self.active_cons);
        let mut mat = DMatrix::zeros(c.len() + 1, b.len());
        for (col, &i) in b.iter().enumerate() {
            for (row, &j) in c.iter().enumerate() {
                mat[(row, col)] = self.lp.a[(j, i)];
            }
            mat[(c.len(), col)] = self.lp.e[i];
        }
        mat
    }

    /// Direction of the dual update at a balanced point, oriented so that a
    /// newly bound row's dual grows, a newly released variable's reduced cost
    /// grows, or (at the start) `λ` decreases.
    pub fn dual_direction(&self) -> Result<Direction> {
        let (nb, nc) = (self.active_vars.len(), self.active_cons.len());
        if nb != nc {
            return Err(RalpError::Degenerate(format!(
                "dual update needs balanced active sets, found {nb} variables and {nc} rows"
            )));
        }
        let mat = self.active_matrix().transpose();
        let mut n_mat = mat;
        for r in 0..nb {
            n_mat[(r, nc)] = -n_mat[(r, nc)];
        }
        let mut v = linalg::null_vector(&n_mat)?;
        let orient = match self.pending {
            Pending::Init => -v[nc],
            Pending::RowAdded(j) => {
                let pos = self.active_cons.binary_search(&j).expect("added row is active");
                v[pos]
            }
            Pending::VarRemoved(i) => {
                let aty: f64 = self.active_cons.iter().zip(&v).map(|(&j, dy)| self.lp.a[(j, i)] * dy).sum();
                self.lp.e[i] * v[nc] - aty
            }
        };
        if orient.abs() <= RATE_TOL {
            return Err(RalpError::Degenerate(format!(
                "dual direction does not move the pending quantity ({:?})",
                self.pending
            )));
        }
        if orient < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let dlambda = v.pop().expect("null vector has a budget coordinate");
        Ok(Direction::Dual { dy: v, dlambda })
    }

    /// Solves the square primal system for the current `x_B` and `Δx_B`.
    fn primal_system(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nb, nc) = (self.active_vars.len(), self.active_cons.len());
        if nb != nc + 1 {
            return Err(RalpError::Degenerate(format!(
                "primal segment needs one more variable than rows, found {nb} variables and {nc} rows"
            )));
        }
        let mat = self.active_matrix();
        let mut level: Vec<f64> = self.active_cons.iter().map(|&j| self.lp.b[j]).collect();
        level.push(self.psi);
        let mut unit = vec![0.0; nc + 1];
        unit[nc] = 1.0;
        let mut sol = linalg::solve(&mat, &[level, unit])?;
        let dx = sol.pop().expect("two solutions");
        let xb = sol.pop().expect("two solutions");
        Ok((xb, dx))
    }

    /// Rate of change of the active variables per unit budget.
    pub fn primal_direction(&self) -> Result<Direction> {
        Ok(Direction::Primal { dx: self.primal_system()?.1 })
    }

    fn refresh_duals(&mut self) -> Result<()> {
        let mat = self.active_matrix().transpose();
        let cb: Vec<f64> = self.active_vars.iter().map(|&i| self.lp.c[i]).collect();
        let u = linalg::solve(&mat, &[cb])?.pop().expect("one solution");
        self.y.iter_mut().for_each(|v| *v = 0.0);
        let nc = self.active_cons.len();
        for (k, &j) in self.active_cons.iter().enumerate() {
            self.y[j] = if u[k] < MEMBERSHIP_TOL && u[k] > -MEMBERSHIP_TOL { u[k].max(0.0) } else { u[k] };
        }
        self.lambda = -u[nc];
        if self.lambda.abs() < MEMBERSHIP_TOL {
            self.lambda = self.lambda.max(0.0);
        }
        Ok(())
    }

    fn reduced_cost(&self, i: usize) -> f64 {
        let aty: f64 = self.active_cons.iter().map(|&j| self.lp.a[(j, i)] * self.y[j]).sum();
        self.lp.c[i] + self.lp.e[i] * self.lambda - aty
    }

    /// Largest step along `direction` that keeps the current phase's
    /// feasibility, with the event that stops it. Primal steps are capped at
    /// `psi_max`. Returns `None` when nothing blocks the step.
    pub fn step_lengths(&self, direction: &Direction, psi_max: f64) -> Option<Step> {
        let mut best = None;
        match direction {
            Direction::Dual { dy, dlambda } => {
                for (&j, &d) in self.active_cons.iter().zip(dy) {
                    if d < -RATE_TOL {
                        let tau = self.y[j].max(0.0) / -d;
                        best = better(Step { tau, kind: EventKind::DualLeaves, index: j }, best);
                    }
                }
                let mut active = vec![false; self.lp.num_vars()];
                self.active_vars.iter().for_each(|&i| active[i] = true);
                for i in (0..self.lp.num_vars()).filter(|&i| !active[i]) {
                    let col = self.lp.a.column(i);
                    let aty: f64 = self.active_cons.iter().zip(dy).map(|(&j, d)| col[j] * d).sum();
                    let rate = self.lp.e[i] * dlambda - aty;
                    if rate < -RATE_TOL {
                        let tau = self.reduced_cost(i).max(0.0) / -rate;
                        best = better(Step { tau, kind: EventKind::VariableEnters, index: i }, best);
                    }
                }
                if *dlambda < -RATE_TOL {
                    let tau = self.lambda.max(0.0) / -dlambda;
                    best = better(Step { tau, kind: EventKind::BudgetSlack, index: 0 }, best);
                }
            }
            Direction::Primal { dx } => {
                let mut active = vec![false; self.lp.num_rows()];
                self.active_cons.iter().for_each(|&j| active[j] = true);
                for j in (0..self.lp.num_rows()).filter(|&j| !active[j]) {
                    let (mut level, mut rate) = (-self.lp.b[j], 0.0);
                    for (&i, d) in self.active_vars.iter().zip(dx) {
                        let a = self.lp.a[(j, i)];
                        level += a * self.x[i];
                        rate += a * d;
                    }
                    if rate < -RATE_TOL {
                        let tau = level.max(0.0) / -rate;
                        best = better(Step { tau, kind: EventKind::RowBinds, index: j }, best);
                    }
                }
                for (&i, &d) in self.active_vars.iter().zip(dx) {
                    if d < -RATE_TOL {
                        let tau = self.x[i].max(0.0) / -d;
                        best = better(Step { tau, kind: EventKind::VariableLeaves, index: i }, best);
                    }
                }
                let room = psi_max - self.psi;
                if best.is_none_or(|b| b.tau >= room) {
                    best = Some(Step { tau: room.max(0.0), kind: EventKind::PsiMax, index: 0 });
                }
            }
        }
        best
    }
}

/// Solution at one breakpoint with an optimal dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub psi: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
}

/// Linear piece between consecutive breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub psi_start: f64,
    pub psi_end: f64,
    /// `dx/dψ` over all variables.
    pub dx: Vec<f64>,
    /// Row duals, optimal over the whole piece.
    pub y: Vec<f64>,
    /// Budget dual; the objective slope on this piece is `−λ`.
    pub lambda: f64,
    pub active_vars: Vec<usize>,
    pub active_cons: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal {
    /// The budget stops binding at `psi_bar`; larger budgets give the same
    /// solution.
    BudgetInactive { psi_bar: f64 },
    /// Tracing stopped at the requested maximum.
    ReachedPsiMax { psi_max: f64 },
}

/// Knobs for [`trace_path_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomotopyOptions {
    pub psi_max: f64,
    /// Iteration cap; defaults to `10·(n + m)`.
    pub max_iterations: Option<usize>,
    /// Retry once on a perturbed right-hand side when the active system
    /// degenerates or cycles.
    pub perturb_on_failure: bool,
}

impl HomotopyOptions {
    pub fn new(psi_max: f64) -> Self {
        Self { psi_max, max_iterations: None, perturb_on_failure: true }
    }
}

/// Piecewise-linear solution path.
#[derive(Debug, Clone)]
pub struct HomotopyPath {
    /// `vertices[k]` is the solution at the `k`-th breakpoint; consecutive
    /// vertices bound `segments[k]`.
    pub vertices: Vec<Vertex>,
    pub segments: Vec<Segment>,
    pub terminal: Terminal,
    pub events: Vec<Event>,
    pub dual_updates: usize,
    /// Whether the path was traced on a perturbed right-hand side.
    pub perturbed: bool,
    splits: Option<Vec<(usize, usize)>>,
}

/// Traces the path from `ψ = 0` to `psi_max` (or until the budget stops
/// binding) with default options.
pub fn trace_path(lp: &StandardLP, psi_max: f64) -> Result<HomotopyPath> {
    trace_path_with(lp, &HomotopyOptions::new(psi_max))
}

/// Traces the path, retrying once on a deterministically perturbed
/// right-hand side if the unperturbed trace degenerates.
pub fn trace_path_with(lp: &StandardLP, opts: &HomotopyOptions) -> Result<HomotopyPath> {
    if !(opts.psi_max.is_finite() && opts.psi_max >= 0.0) {
        return Err(RalpError::invalid(format!("psi_max must be finite and nonnegative, got {}", opts.psi_max)));
    }
    match distinct_rows(lp) {
        Some((reduced, kept)) => Ok(expand_rows(trace_with_retry(&reduced, opts)?, &kept, lp.num_rows())),
        None => trace_with_retry(lp, opts),
    }
}

/// Drops rows that repeat an earlier row exactly, including the right-hand
/// side. Returns `None` when every row is distinct.
fn distinct_rows(lp: &StandardLP) -> Option<(StandardLP, Vec<usize>)> {
    let key = |v: f64| (v + 0.0).to_bits();
    let mut seen = HashSet::new();
    let kept: Vec<usize> = (0..lp.num_rows())
        .filter(|&j| {
            let mut row: Vec<u64> = lp.a.row(j).iter().map(|v| key(*v)).collect();
            row.push(key(lp.b[j]));
            seen.insert(row)
        })
        .collect();
    if kept.len() == lp.num_rows() {
        return None;
    }
    let mut out = lp.clone();
    out.a = lp.a.select_rows(&kept);
    out.b = kept.iter().map(|&j| lp.b[j]).collect();
    Some((out, kept))
}

/// Maps a path traced on `distinct_rows` output back to the original rows;
/// dropped duplicates get zero duals.
fn expand_rows(mut path: HomotopyPath, kept: &[usize], m: usize) -> HomotopyPath {
    let widen = |y: &[f64]| {
        let mut out = vec![0.0; m];
        for (r, &j) in kept.iter().enumerate() {
            out[j] = y[r];
        }
        out
    };
    for v in &mut path.vertices {
        v.y = widen(&v.y);
    }
    for s in &mut path.segments {
        s.y = widen(&s.y);
        s.active_cons.iter_mut().for_each(|j| *j = kept[*j]);
    }
    for e in &mut path.events {
        if matches!(e.kind, EventKind::DualLeaves | EventKind::RowBinds) {
            e.index = kept[e.index];
        }
    }
    path
}

fn trace_with_retry(lp: &StandardLP, opts: &HomotopyOptions) -> Result<HomotopyPath> {
    match trace_once(lp, opts) {
        Err(err @ (RalpError::Degenerate(_) | RalpError::IterationCap { .. })) if opts.perturb_on_failure => {
            let shifted = perturb(lp, PERTURBATION);
            let mut path = trace_once(&shifted, opts).map_err(|again| match again {
                RalpError::Degenerate(msg) => {
                    RalpError::Degenerate(format!("{msg} (also after perturbing; first failure: {err})"))
                }
                other => other,
            })?;
            path.perturbed = true;
            Ok(path)
        }
        other => other,
    }
}

/// Shifts each `b_j` up by a distinct amount in `(δ/2, δ]`.
pub fn perturb(lp: &StandardLP, delta: f64) -> StandardLP {
    const GOLDEN: f64 = 0.618_033_988_749_894_8;
    let mut out = lp.clone();
    for (j, b) in out.b.iter_mut().enumerate() {
        let u = ((j + 1) as f64 * GOLDEN).fract();
        *b += delta * (0.5 + 0.5 * u);
    }
    out
}

fn trace_once(lp: &StandardLP, opts: &HomotopyOptions) -> Result<HomotopyPath> {
    let (n, m) = (lp.num_vars(), lp.num_rows());
    let cap = opts.max_iterations.unwrap_or(10 * (n + m));
    let mut st = init_at_zero(lp)?;
    let mut path = HomotopyPath {
        vertices: vec![Vertex {
            psi: 0.0,
            objective: lp.objective(&st.x),
            x: st.x.clone(),
            y: st.y.clone(),
            lambda: st.lambda,
        }],
        segments: Vec::new(),
        terminal: Terminal::BudgetInactive { psi_bar: 0.0 },
        events: Vec::new(),
        dual_updates: 0,
        perturbed: false,
        splits: lp.splits.clone(),
    };
    if st.lambda <= MEMBERSHIP_TOL {
        path.vertices[0].lambda = 0.0;
        return Ok(path);
    }
    // Active-set pairs visited since the last step of positive length.
    let mut seen: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > cap {
            return Err(RalpError::IterationCap {
                cap,
                diagnostic: format!(
                    "path stalled at psi = {} with {} active variables and {} active rows",
                    st.psi,
                    st.active_vars.len(),
                    st.active_cons.len()
                ),
            });
        }

        let dir = st.dual_direction()?;
        let Direction::Dual { dy, dlambda } = &dir else { unreachable!() };
        let step = st
            .step_lengths(&dir, opts.psi_max)
            .ok_or_else(|| RalpError::Unbounded(format!("dual update at psi = {} is unblocked", st.psi)))?;
        for (&j, d) in st.active_cons.iter().zip(dy) {
            st.y[j] = (st.y[j] + step.tau * d).max(0.0);
        }
        st.lambda += step.tau * dlambda;
        path.dual_updates += 1;
        path.events.push(Event { kind: step.kind, index: step.index, psi: st.psi, step: step.tau });
        match step.kind {
            EventKind::BudgetSlack => {
                let last = path.vertices.last_mut().expect("path has a first vertex");
                last.y = st.y.clone();
                last.lambda = 0.0;
                path.terminal = Terminal::BudgetInactive { psi_bar: st.psi };
                return Ok(path);
            }
            EventKind::DualLeaves => {
                remove_sorted(&mut st.active_cons, step.index);
                st.y[step.index] = 0.0;
            }
            EventKind::VariableEnters => insert_sorted(&mut st.active_vars, step.index),
            _ => unreachable!("dual ratio test yields dual events"),
        }
        st.refresh_duals()?;
        if st.lambda <= MEMBERSHIP_TOL {
            let last = path.vertices.last_mut().expect("path has a first vertex");
            last.y = st.y.clone();
            last.lambda = 0.0;
            path.terminal = Terminal::BudgetInactive { psi_bar: st.psi };
            return Ok(path);
        }

        let (xb, dxb) = st.primal_system()?;
        for (&i, v) in st.active_vars.iter().zip(&xb) {
            st.x[i] = if *v < 0.0 && *v > -MEMBERSHIP_TOL { 0.0 } else { *v };
        }
        let dir = Direction::Primal { dx: dxb };
        let step = st.step_lengths(&dir, opts.psi_max).expect("primal steps are capped");
        let Direction::Primal { dx: dxb } = dir else { unreachable!() };
        let mut dx = vec![0.0; n];
        for (&i, d) in st.active_vars.iter().zip(&dxb) {
            dx[i] = *d;
        }
        if step.tau > 0.0 && step.tau <= TIE_TOL * (1.0 + st.psi) && step.kind != EventKind::PsiMax {
            // Round-off sized move: fold it into the current vertex.
            for (&i, d) in st.active_vars.iter().zip(&dxb) {
                st.x[i] = (st.x[i] + step.tau * d).max(0.0);
            }
            let last = path.vertices.last_mut().expect("path has a first vertex");
            last.x = st.x.clone();
            last.objective = lp.objective(&st.x);
            if !seen.insert((st.active_vars.clone(), st.active_cons.clone())) {
                return Err(RalpError::Degenerate(format!("active sets cycle at psi = {}", st.psi)));
            }
        } else if step.tau > 0.0 {
            seen.clear();
            let start = st.psi;
            for (&i, d) in st.active_vars.iter().zip(&dxb) {
                st.x[i] = (st.x[i] + step.tau * d).max(0.0);
            }
            st.psi = if step.kind == EventKind::PsiMax { opts.psi_max } else { start + step.tau };
            path.segments.push(Segment {
                psi_start: start,
                psi_end: st.psi,
                dx,
                y: st.y.clone(),
                lambda: st.lambda,
                active_vars: st.active_vars.clone(),
                active_cons: st.active_cons.clone(),
            });
            path.vertices.push(Vertex {
                psi: st.psi,
                objective: lp.objective(&st.x),
                x: st.x.clone(),
                y: st.y.clone(),
                lambda: st.lambda,
            });
        } else if !seen.insert((st.active_vars.clone(), st.active_cons.clone())) {
            return Err(RalpError::Degenerate(format!("active sets cycle at psi = {}", st.psi)));
        }
        path.events.push(Event { kind: step.kind, index: step.index, psi: st.psi, step: step.tau });
        match step.kind {
            EventKind::PsiMax => {
                path.terminal = Terminal::ReachedPsiMax { psi_max: opts.psi_max };
                return Ok(path);
            }
            EventKind::RowBinds => {
                insert_sorted(&mut st.active_cons, step.index);
                st.pending = Pending::RowAdded(step.index);
            }
            EventKind::VariableLeaves => {
                remove_sorted(&mut st.active_vars, step.index);
                st.x[step.index] = 0.0;
                st.pending = Pending::VarRemoved(step.index);
            }
            _ => unreachable!("primal ratio test yields primal events"),
        }
    }
}

impl HomotopyPath {
    /// Budgets at which the active sets change, starting at 0.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.vertices.iter().map(|v| v.psi).collect()
    }

    pub fn last_psi(&self) -> f64 {
        self.vertices.last().expect("path has a first vertex").psi
    }

    /// Slope of the objective on each segment.
    pub fn slopes(&self) -> Vec<f64> {
        self.vertices
            .windows(2)
            .map(|w| (w[1].objective - w[0].objective) / (w[1].psi - w[0].psi))
            .collect()
    }

    fn locate(&self, psi: f64) -> Result<(usize, f64)> {
        if !(psi >= 0.0) {
            return Err(RalpError::invalid(format!("budget must be nonnegative, got {psi}")));
        }
        let last = self.last_psi();
        if psi >= last {
            return match self.terminal {
                Terminal::ReachedPsiMax { .. } if psi > last * (1.0 + 1e-12) + 1e-12 => Err(RalpError::invalid(
                    format!("budget {psi} lies beyond the traced range [0, {last}]"),
                )),
                _ => Ok((self.vertices.len() - 1, 0.0)),
            };
        }
        let k = self.vertices.partition_point(|v| v.psi <= psi) - 1;
        let (a, b) = (self.vertices[k].psi, self.vertices[k + 1].psi);
        Ok((k, (psi - a) / (b - a)))
    }

    /// Optimal `x` at budget `psi`. Beyond the point where the budget stops
    /// binding the solution is frozen.
    pub fn solution_at(&self, psi: f64) -> Result<Vec<f64>> {
        let (k, t) = self.locate(psi)?;
        let x0 = &self.vertices[k].x;
        if t == 0.0 {
            return Ok(x0.clone());
        }
        let x1 = &self.vertices[k + 1].x;
        Ok(x0.iter().zip(x1).map(|(a, b)| a + t * (b - a)).collect())
    }

    /// Optimal objective at budget `psi`.
    pub fn objective_at(&self, psi: f64) -> Result<f64> {
        let (k, t) = self.locate(psi)?;
        let f0 = self.vertices[k].objective;
        if t == 0.0 {
            return Ok(f0);
        }
        Ok(f0 + t * (self.vertices[k + 1].objective - f0))
    }

    /// Recombined feature weights at budget `psi`, when the LP came from a
    /// regularized ALP.
    pub fn weights_at(&self, psi: f64) -> Result<Vec<f64>> {
        let x = self.solution_at(psi)?;
        self.recompose(&x)
    }

    /// Feature weights `w_i = x⁺ − x⁻` of a solution vector.
    pub fn recompose(&self, x: &[f64]) -> Result<Vec<f64>> {
        let splits = self
            .splits
            .as_ref()
            .ok_or_else(|| RalpError::invalid("LP has no split map to recompose weights"))?;
        Ok(splits.iter().map(|&(p, q)| x[p] - x[q]).collect())
    }

    /// Number of rows active after breakpoint `k`.
    fn active_rows_at(&self, k: usize) -> usize {
        let seg = if k < self.segments.len() { self.segments.get(k) } else { self.segments.last() };
        seg.map_or(0, |s| s.active_cons.len())
    }

    /// One line per breakpoint: `psi,objective,nnz_weights,active_constraints`.
    /// `nnz_weights` counts nonzero feature weights when a split map is
    /// available and nonzero variables otherwise.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("psi,objective,nnz_weights,active_constraints\n");
        for (k, v) in self.vertices.iter().enumerate() {
            let nnz = match self.recompose(&v.x) {
                Ok(w) => w.iter().filter(|w| w.abs() > MEMBERSHIP_TOL).count(),
                Err(_) => v.x.iter().filter(|x| x.abs() > MEMBERSHIP_TOL).count(),
            };
            let _ = writeln!(out, "{:?},{:?},{},{}", v.psi, v.objective, nnz, self.active_rows_at(k));
        }
        out
    }

    /// Weight (or variable) vector at each breakpoint: `psi,w0,w1,…`.
    pub fn weights_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.vertices.iter().enumerate() {
            let w = self.recompose(&v.x).unwrap_or_else(|_| v.x.clone());
            if k == 0 {
                out.push_str("psi");
                (0..w.len()).for_each(|i| {
                    let _ = write!(out, ",w{i}");
                });
                out.push('\n');
            }
            let _ = write!(out, "{:?}", v.psi);
            w.iter().for_each(|x| {
                let _ = write!(out, ",{x:?}");
            });
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{kkt_residuals, solve_lp};
    use approx::assert_abs_diff_eq;

    fn tiny() -> StandardLP {
        // minimize −x₁ subject to −x₁ ≥ −1, budget x₁ ≤ ψ
        StandardLP::new(vec![-1.0], DMatrix::from_row_slice(1, 1, &[-1.0]), vec![-1.0], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn tiny_path_has_breakpoints_zero_and_one() {
        let path = trace_path(&tiny(), 5.0).unwrap();
        assert_eq!(path.breakpoints(), vec![0.0, 1.0]);
        assert_eq!(path.terminal, Terminal::BudgetInactive { psi_bar: 1.0 });
        assert_abs_diff_eq!(path.objective_at(0.5).unwrap(), -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(path.objective_at(3.0).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(path.segments[0].lambda, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tiny_path_primal_event_is_row_binding() {
        let lp = tiny();
        let mut st = init_at_zero(&lp).unwrap();
        assert_eq!(st.lambda, 1.0);
        let dir = st.dual_direction().unwrap();
        assert_eq!(dir, Direction::Dual { dy: vec![], dlambda: -1.0 });
        let step = st.step_lengths(&dir, 10.0).unwrap();
        assert_eq!((step.kind, step.tau), (EventKind::VariableEnters, 0.0));
        st.active_vars.push(0);
        let dir = st.primal_direction().unwrap();
        assert_eq!(dir, Direction::Primal { dx: vec![1.0] });
        let step = st.step_lengths(&dir, 10.0).unwrap();
        assert_eq!((step.kind, step.index), (EventKind::RowBinds, 0));
        assert_abs_diff_eq!(step.tau, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn dual_ratio_prefers_budget_event() {
        let lp = tiny();
        let mut st = init_at_zero(&lp).unwrap();
        st.lambda = 0.3;
        st.active_vars.push(0);
        let step = st.step_lengths(&Direction::Dual { dy: vec![], dlambda: -0.1 }, 1.0).unwrap();
        assert_eq!(step.kind, EventKind::BudgetSlack);
        assert_abs_diff_eq!(step.tau, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_budget_when_costs_are_nonnegative() {
        let lp = StandardLP::new(vec![1.0], DMatrix::from_row_slice(1, 1, &[1.0]), vec![-1.0], vec![1.0], 0.0).unwrap();
        let path = trace_path(&lp, 2.0).unwrap();
        assert_eq!(path.terminal, Terminal::BudgetInactive { psi_bar: 0.0 });
        assert_eq!(path.solution_at(1.5).unwrap(), vec![0.0]);
    }

    #[test]
    fn reaches_psi_max_when_budget_keeps_binding() {
        let lp = StandardLP::new(vec![-1.0], DMatrix::zeros(0, 1), vec![], vec![1.0], 0.0).unwrap();
        let path = trace_path(&lp, 2.5).unwrap();
        assert_eq!(path.terminal, Terminal::ReachedPsiMax { psi_max: 2.5 });
        assert_abs_diff_eq!(path.objective_at(2.5).unwrap(), -2.5, epsilon = 1e-12);
        assert!(path.solution_at(3.0).is_err());
    }

    #[test]
    fn free_pair_initialization() {
        // w ≥ 2 and w ≤ 5 through a mirrored pair, plus one regularized column.
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 1.0, -1.0, 1.0, 0.0]);
        let lp = StandardLP::new(vec![1.0, -1.0, 0.5], a, vec![2.0, -5.0], vec![0.0, 0.0, 1.0], 0.0).unwrap();
        let st = init_at_zero(&lp).unwrap();
        assert_eq!(st.x, vec![2.0, 0.0, 0.0]);
        assert_eq!(st.active_cons(), &[0]);
        assert_eq!(st.y, vec![1.0, 0.0]);
        assert_abs_diff_eq!(st.lambda, 0.5, epsilon = 1e-15);
        let path = trace_path(&lp, 10.0).unwrap();
        for psi in [0.0, 0.7, 1.9, 4.0] {
            let oracle = solve_lp(&lp.with_psi(psi).unwrap()).unwrap();
            assert_abs_diff_eq!(path.objective_at(psi).unwrap(), oracle.objective, epsilon = 1e-9);
        }
    }

    #[test]
    fn vertices_satisfy_kkt() {
        let a = DMatrix::from_row_slice(3, 4, &[1.0, -1.0, 2.0, -1.0, 1.0, -1.0, -1.0, 3.0, 1.0, -1.0, 1.0, 1.0]);
        let mut lp = StandardLP::new(vec![1.0, -1.0, -1.0, -2.0], a, vec![1.0, -4.0, 0.5], vec![0.0, 0.0, 1.0, 1.0], 0.0)
            .unwrap();
        let path = trace_path(&lp, 20.0).unwrap();
        for v in &path.vertices {
            lp.psi = v.psi;
            assert!(kkt_residuals(&lp, &v.x, &v.y, v.lambda).max() < 1e-9, "{v:?}");
        }
    }

    #[test]
    fn perturbation_is_small_and_distinct() {
        let lp = StandardLP::new(vec![0.0; 1], DMatrix::zeros(4, 1), vec![0.0; 4], vec![1.0], 0.0).unwrap();
        let p = perturb(&lp, 1e-9);
        let mut seen = p.b.clone();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert!(p.b.iter().all(|&b| b > 0.0 && b <= 1e-9));
    }
}
