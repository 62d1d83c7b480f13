//! Regularized approximate linear programs and their nonnegative standard form.
//!
//! A RALP over features `φ` minimizes `ρ̄ᵀΦw` subject to one constraint
//! `φ(s)ᵀw ≥ r(s, a) + γ E[φ(s')ᵀw]` per (state, action) record and the
//! budget `Σ e_i |w_i| ≤ ψ`. [`StandardLP`] is the split form
//!
//! ```text
//! minimize cᵀx  subject to  Ax ≥ b,  eᵀx ≤ ψ,  x ≥ 0
//! ```
//!
//! with every weight written as `w_i = x_{2i} − x_{2i+1}`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{read_file, RalpError, Result};
use crate::features::FeatureBasis;
use crate::mdp::TabularMdp;
use crate::samples::{NextState, SampleKind, SampleSet};

/// Which of the three sample-based programs to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlpMode {
    /// Every (state, action) pair of a tabular MDP, exact expectations.
    Full,
    /// Sampled states with exact successor distributions.
    Sampled,
    /// Sampled states with empirical successor means.
    Estimated,
}

impl std::str::FromStr for AlpMode {
    type Err = RalpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AlpMode::Full),
            "sampled" => Ok(AlpMode::Sampled),
            "estimated" => Ok(AlpMode::Estimated),
            other => Err(RalpError::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// A RALP in feature space.
#[derive(Debug, Clone)]
pub struct RalpProblem {
    basis: Arc<FeatureBasis>,
    discount: f64,
    sources: Vec<Vec<f64>>,
    state_weights: Vec<f64>,
    objective: Vec<f64>,
    rows: DMatrix<f64>,
    rhs: Vec<f64>,
    budget: f64,
}

/// Builds a RALP. `Full` needs `mdp`; the sampled modes need `samples` of
/// the matching kind and use `discount`.
pub fn assemble_ralp(
    mode: AlpMode,
    samples: Option<&SampleSet>,
    mdp: Option<&TabularMdp>,
    basis: Arc<FeatureBasis>,
    budget: f64,
    discount: f64,
) -> Result<RalpProblem> {
    match mode {
        AlpMode::Full => {
            let mdp = mdp.ok_or_else(|| RalpError::invalid("full mode needs a tabular MDP"))?;
            RalpProblem::full(mdp, basis, budget)
        }
        AlpMode::Sampled | AlpMode::Estimated => {
            let samples = samples.ok_or_else(|| RalpError::invalid("sampled modes need a sample set"))?;
            let expected = if mode == AlpMode::Sampled { SampleKind::Expectation } else { SampleKind::Simple };
            if samples.kind() != expected {
                return Err(RalpError::invalid(format!(
                    "{mode:?} mode needs {expected:?} samples, got {:?}",
                    samples.kind()
                )));
            }
            RalpProblem::from_samples(samples, basis, budget, discount)
        }
    }
}

fn check_budget(budget: f64) -> Result<()> {
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(RalpError::invalid(format!("budget must be a finite nonnegative number, got {budget}")));
    }
    Ok(())
}

impl RalpProblem {
    /// The full ALP of a tabular MDP: every (state, action) pair, uniform
    /// state weights.
    pub fn full(mdp: &TabularMdp, basis: Arc<FeatureBasis>, budget: f64) -> Result<Self> {
        check_budget(budget)?;
        let n = mdp.num_states();
        let sources: Vec<Vec<f64>> = (0..n).map(TabularMdp::state_vector).collect();
        let phi = basis.materialize(&sources)?;
        let gamma = mdp.discount();
        let k = basis.len();
        let mut rows = DMatrix::zeros(n * mdp.num_actions(), k);
        let mut rhs = Vec::with_capacity(n * mdp.num_actions());
        // Row order: state-major, then action.
        let next: Vec<DMatrix<f64>> = (0..mdp.num_actions()).map(|a| mdp.transition(a) * &phi).collect();
        for s in 0..n {
            for a in 0..mdp.num_actions() {
                let r = s * mdp.num_actions() + a;
                for j in 0..k {
                    rows[(r, j)] = phi[(s, j)] - gamma * next[a][(s, j)];
                }
                rhs.push(mdp.reward(a)[s]);
            }
        }
        let weights = vec![1.0 / n as f64; n];
        Self::build(basis, gamma, sources, weights, rows, rhs, budget)
    }

    /// Sampled or estimated ALP from a sample set; one row per record.
    pub fn from_samples(samples: &SampleSet, basis: Arc<FeatureBasis>, budget: f64, discount: f64) -> Result<Self> {
        check_budget(budget)?;
        if !(0.0..1.0).contains(&discount) {
            return Err(RalpError::invalid(format!("discount {discount} is not in [0, 1)")));
        }
        if samples.is_empty() {
            return Err(RalpError::invalid("no samples"));
        }
        let k = basis.len();
        let row_data: Vec<Vec<f64>> = samples
            .records()
            .par_iter()
            .map(|rec| {
                let mut row = basis.evaluate(&rec.state)?;
                for (next, w) in rec.successors.weighted() {
                    if let NextState::State(s) = next {
                        for (r, f) in row.iter_mut().zip(basis.evaluate(s)?) {
                            *r -= discount * w * f;
                        }
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()
            .map_err(|e: RalpError| RalpError::invalid(format!("assembling constraint rows: {e}")))?;
        let rows = DMatrix::from_fn(row_data.len(), k, |r, c| row_data[r][c]);
        let rhs = samples.records().iter().map(|r| r.reward).collect();
        let sources = samples.source_states();
        let weights = vec![1.0 / sources.len() as f64; sources.len()];
        Self::build(basis, discount, sources, weights, rows, rhs, budget)
    }

    fn build(
        basis: Arc<FeatureBasis>,
        discount: f64,
        sources: Vec<Vec<f64>>,
        state_weights: Vec<f64>,
        rows: DMatrix<f64>,
        rhs: Vec<f64>,
        budget: f64,
    ) -> Result<Self> {
        let objective = objective_from_weights(&basis, &sources, &state_weights)?;
        Ok(Self { basis, discount, sources, state_weights, objective, rows, rhs, budget })
    }

    /// Replaces the uniform state weights `ρ̄` with custom ones.
    pub fn with_state_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.sources.len() {
            return Err(RalpError::dim("state weights", self.sources.len(), weights.len()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(RalpError::invalid("state weights must be nonnegative and sum to 1"));
        }
        self.objective = objective_from_weights(&self.basis, &self.sources, &weights)?;
        self.state_weights = weights;
        Ok(self)
    }

    pub fn with_budget(mut self, budget: f64) -> Result<Self> {
        check_budget(budget)?;
        self.budget = budget;
        Ok(self)
    }

    pub fn basis(&self) -> &Arc<FeatureBasis> {
        &self.basis
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Constraint-source states, in the order their weights are stored.
    pub fn sources(&self) -> &[Vec<f64>] {
        &self.sources
    }

    pub fn state_weights(&self) -> &[f64] {
        &self.state_weights
    }

    /// `ρ̄ᵀΦ`, the objective in feature space.
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Constraint rows `φ(s)ᵀ − γ E[φ(s')ᵀ]`.
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.rows.ncols()
    }

    pub fn reg_weights(&self) -> Vec<f64> {
        self.basis.reg_weights()
    }

    pub fn objective_value(&self, w: &[f64]) -> f64 {
        self.objective.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    /// Smallest constraint slack `min_j (row_j w − r_j)`.
    pub fn min_slack(&self, w: &[f64]) -> f64 {
        let ax = &self.rows * DVector::from_column_slice(w);
        ax.iter().zip(&self.rhs).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min)
    }

    pub fn l1_norm(&self, w: &[f64]) -> f64 {
        self.reg_weights().iter().zip(w).map(|(e, x)| e * x.abs()).sum()
    }
}

fn objective_from_weights(basis: &FeatureBasis, sources: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    let phi = basis.materialize(sources)?;
    Ok((0..basis.len())
        .map(|j| weights.iter().enumerate().map(|(s, w)| w * phi[(s, j)]).sum())
        .collect())
}

/// `minimize cᵀx s.t. Ax ≥ b, eᵀx ≤ ψ, x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardLP {
    pub c: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    pub psi: f64,
    /// `(plus, minus)` column indices of each feature weight, when the LP came
    /// from a RALP.
    pub splits: Option<Vec<(usize, usize)>>,
}

impl StandardLP {
    pub fn new(c: Vec<f64>, a: DMatrix<f64>, b: Vec<f64>, e: Vec<f64>, psi: f64) -> Result<Self> {
        let lp = Self { c, a, b, e, psi, splits: None };
        lp.validate()?;
        Ok(lp)
    }

    fn validate(&self) -> Result<()> {
        let (m, n) = self.a.shape();
        if self.c.len() != n {
            return Err(RalpError::dim("cost vector", n, self.c.len()));
        }
        if self.e.len() != n {
            return Err(RalpError::dim("regularization row", n, self.e.len()));
        }
        if self.b.len() != m {
            return Err(RalpError::dim("right-hand side", m, self.b.len()));
        }
        check_budget(self.psi)?;
        if self.e.iter().any(|&x| !(x >= 0.0)) {
            return Err(RalpError::invalid("regularization weights must be nonnegative"));
        }
        let finite = self.c.iter().chain(&self.b).chain(&self.e).chain(self.a.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(RalpError::invalid("LP data must be finite"));
        }
        if let Some(s) = &self.splits {
            if s.iter().any(|&(p, q)| p >= n || q >= n) {
                return Err(RalpError::invalid("split map refers to missing columns"));
            }
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn with_psi(&self, psi: f64) -> Result<Self> {
        check_budget(psi)?;
        let mut lp = self.clone();
        lp.psi = psi;
        Ok(lp)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn budget_used(&self, x: &[f64]) -> f64 {
        self.e.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `Ax − b`.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        let ax = &self.a * DVector::from_column_slice(x);
        ax.iter().zip(&self.b).map(|(a, b)| a - b).collect()
    }

    /// Largest violation of `Ax ≥ b`, `eᵀx ≤ ψ`, `x ≥ 0`.
    pub fn primal_infeasibility(&self, x: &[f64]) -> f64 {
        let rows = self.slacks(x).into_iter().fold(0.0f64, |m, s| m.max(-s));
        let bounds = x.iter().fold(0.0f64, |m, &v| m.max(-v));
        rows.max(bounds).max(self.budget_used(x) - self.psi)
    }

    /// Recombines split variables into feature weights.
    pub fn recompose(&self, x: &[f64]) -> Result<Vec<f64>> {
        let splits = self
            .splits
            .as_ref()
            .ok_or_else(|| RalpError::invalid("LP has no split map to recompose weights"))?;
        Ok(splits.iter().map(|&(p, q)| x[p] - x[q]).collect())
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "ralp-lp 1");
        let _ = writeln!(out, "dims {} {}", self.num_rows(), self.num_vars());
        let _ = writeln!(out, "psi {:?}", self.psi);
        let _ = writeln!(out, "c {}", join(&self.c));
        let _ = writeln!(out, "e {}", join(&self.e));
        for j in 0..self.num_rows() {
            let row: Vec<f64> = self.a.row(j).iter().copied().collect();
            let _ = writeln!(out, "row {:?} : {}", self.b[j], join(&row));
        }
        if let Some(s) = &self.splits {
            for (i, (p, q)) in s.iter().enumerate() {
                let _ = writeln!(out, "split {i} {p} {q}");
            }
        }
        out
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }

    /// Parses the plain-text LP interchange format written by
    /// [`StandardLP::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut dims = None;
        let (mut psi, mut c, mut e) = (None, None, None);
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut splits = Vec::new();
        let mut header = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("LP line {}", lineno + 1);
            let nums = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|x| x.parse().map_err(|_| RalpError::parse(&loc, format!("bad number {x:?}"))))
                    .collect()
            };
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match key {
                "ralp-lp" => {
                    if rest.trim() != "1" {
                        return Err(RalpError::parse(&loc, "unsupported format version"));
                    }
                    header = true;
                }
                "dims" => {
                    let d = nums(rest)?;
                    if d.len() != 2 {
                        return Err(RalpError::parse(&loc, "dims needs rows and columns"));
                    }
                    dims = Some((d[0] as usize, d[1] as usize));
                }
                "psi" => psi = Some(nums(rest)?.first().copied().ok_or_else(|| RalpError::parse(&loc, "empty psi"))?),
                "c" => c = Some(nums(rest)?),
                "e" => e = Some(nums(rest)?),
                "row" => {
                    let (b, coef) = rest
                        .split_once(':')
                        .ok_or_else(|| RalpError::parse(&loc, "row needs `b : coefficients`"))?;
                    let b = nums(b)?;
                    if b.len() != 1 {
                        return Err(RalpError::parse(&loc, "row needs exactly one right-hand side"));
                    }
                    rows.push((b[0], nums(coef)?));
                }
                "split" => {
                    let v = nums(rest)?;
                    if v.len() != 3 || v[0] as usize != splits.len() {
                        return Err(RalpError::parse(&loc, "split lines must be `split i plus minus` in order"));
                    }
                    splits.push((v[1] as usize, v[2] as usize));
                }
                other => return Err(RalpError::parse(&loc, format!("unknown key {other:?}"))),
            }
        }
        if !header {
            return Err(RalpError::parse("LP file", "missing `ralp-lp 1` header"));
        }
        let (m, n) = dims.ok_or_else(|| RalpError::parse("LP file", "missing dims"))?;
        if rows.len() != m {
            return Err(RalpError::parse("LP file", format!("dims declares {m} rows, found {}", rows.len())));
        }
        if let Some(bad) = rows.iter().position(|(_, r)| r.len() != n) {
            return Err(RalpError::parse("LP file", format!("row {bad} does not have {n} coefficients")));
        }
        let a = DMatrix::from_fn(m, n, |r, col| rows[r].1[col]);
        let mut lp = StandardLP {
            c: c.ok_or_else(|| RalpError::parse("LP file", "missing c"))?,
            a,
            b: rows.iter().map(|r| r.0).collect(),
            e: e.ok_or_else(|| RalpError::parse("LP file", "missing e"))?,
            psi: psi.ok_or_else(|| RalpError::parse("LP file", "missing psi"))?,
            splits: None,
        };
        if !splits.is_empty() {
            lp.splits = Some(splits);
        }
        lp.validate()?;
        Ok(lp)
    }
}

/// Splits every weight into a nonnegative pair; weight `i` becomes columns
/// `2i` (positive part) and `2i + 1` (negative part).
pub fn to_standard_form(p: &RalpProblem) -> StandardLP {
    let (m, k) = p.rows.shape();
    let reg = p.reg_weights();
    let mut a = DMatrix::zeros(m, 2 * k);
    let mut c = vec![0.0; 2 * k];
    let mut e = vec![0.0; 2 * k];
    for i in 0..k {
        c[2 * i] = p.objective[i];
        c[2 * i + 1] = -p.objective[i];
        e[2 * i] = reg[i];
        e[2 * i + 1] = reg[i];
        for j in 0..m {
            a[(j, 2 * i)] = p.rows[(j, i)];
            a[(j, 2 * i + 1)] = -p.rows[(j, i)];
        }
    }
    StandardLP {
        c,
        a,
        b: p.rhs.clone(),
        e,
        psi: p.budget,
        splits: Some((0..k).map(|i| (2 * i, 2 * i + 1)).collect()),
    }
}

/// `maximize bᵀy − ψλ s.t. Aᵀy − eλ ≤ c, y, λ ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualLP {
    pub b: Vec<f64>,
    pub psi: f64,
    /// `Aᵀ`, one row per primal variable.
    pub at: DMatrix<f64>,
    pub e: Vec<f64>,
    pub c: Vec<f64>,
}

pub fn dual_of(lp: &StandardLP) -> DualLP {
    DualLP { b: lp.b.clone(), psi: lp.psi, at: lp.a.transpose(), e: lp.e.clone(), c: lp.c.clone() }
}

impl DualLP {
    pub fn objective(&self, y: &[f64], lambda: f64) -> f64 {
        self.b.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - self.psi * lambda
    }

    /// Reduced costs `c + eλ − Aᵀy`; dual feasibility means all are ≥ 0.
    pub fn reduced_costs(&self, y: &[f64], lambda: f64) -> Vec<f64> {
        let aty = &self.at * DVector::from_column_slice(y);
        self.c.iter().zip(&self.e).zip(aty.iter()).map(|((c, e), a)| c + e * lambda - a).collect()
    }

    pub fn infeasibility(&self, y: &[f64], lambda: f64) -> f64 {
        let rc = self.reduced_costs(y, lambda).into_iter().fold(0.0f64, |m, d| m.max(-d));
        rc.max(-lambda).max(y.iter().fold(0.0f64, |m, &v| m.max(-v)))
    }
}
