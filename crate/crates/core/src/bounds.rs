//! Approximation error bounds for regularized ALPs and the budget selector
//! built on them.
//!
//! With sampling violation `ε_p`, estimation error `ε_s` and objective error
//! `ε_c`, any feasible `v` of the estimated program satisfies
//!
//! ```text
//! ‖v* − v‖₁,ρ ≤ ρ̄ᵀv − ρᵀv* + ε_c + 2(ε_s + ε_p)/(1 − γ)
//! ```
//!
//! Minimizing the right-hand side over the optimal path `θ(ψ)` gives the
//! selected budget `ψ*`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{read_file, RalpError, Result};
use crate::features::FeatureBasis;
use crate::homotopy::{HomotopyPath, Terminal};
use crate::lp::StandardLP;
use crate::mdp::TabularMdp;
use crate::samples::{NextState, SampleSet};
use crate::simplex::{solve_lp, LpStatus};

/// Constants of the linear error model
/// `ε_p(ψ) = c·K_r + c·ψ·(K_φ + γK_P)`, `ε_s(ψ) = slope·ψ`, `ε_c` constant.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModel {
    /// Largest distance from any state to its nearest sampled state.
    pub cover_radius: f64,
    pub k_r: f64,
    pub k_p: f64,
    pub k_phi: f64,
    pub gamma: f64,
    #[serde(default)]
    pub eps_c: f64,
    #[serde(default)]
    pub eps_s_slope: f64,
}

impl ErrorModel {
    pub fn new(cover_radius: f64, k_r: f64, k_p: f64, k_phi: f64, gamma: f64) -> Result<Self> {
        let m = Self { cover_radius, k_r, k_p, k_phi, gamma, eps_c: 0.0, eps_s_slope: 0.0 };
        m.validate()?;
        Ok(m)
    }

    /// Model with no error floor and `ε_p(ψ) = slope·ψ`.
    pub fn with_sampling_slope(gamma: f64, slope: f64) -> Result<Self> {
        Self::new(slope, 0.0, 0.0, 1.0, gamma)
    }

    pub fn with_eps_c(mut self, eps_c: f64) -> Result<Self> {
        self.eps_c = eps_c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eps_s_slope(mut self, slope: f64) -> Result<Self> {
        self.eps_s_slope = slope;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("cover_radius", self.cover_radius),
            ("k_r", self.k_r),
            ("k_p", self.k_p),
            ("k_phi", self.k_phi),
            ("eps_c", self.eps_c),
            ("eps_s_slope", self.eps_s_slope),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(RalpError::invalid(format!("error model field {name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(RalpError::invalid(format!("discount {} is not in [0, 1)", self.gamma)));
        }
        Ok(())
    }

    /// Parses the TOML form, e.g. `cover_radius = 0.05`, one key per field.
    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| RalpError::parse("error model", e.message()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?).map_err(|e| match e {
            RalpError::Parse { message, .. } => RalpError::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        format!(
            "cover_radius = {:?}\nk_r = {:?}\nk_p = {:?}\nk_phi = {:?}\ngamma = {:?}\neps_c = {:?}\neps_s_slope = {:?}\n",
            self.cover_radius, self.k_r, self.k_p, self.k_phi, self.gamma, self.eps_c, self.eps_s_slope
        )
    }

    /// `dε_p/dψ`.
    pub fn sampling_slope(&self) -> f64 {
        self.cover_radius * (self.k_phi + self.gamma * self.k_p)
    }

    /// Slope in `ψ` of `ε_c + 2(ε_s + ε_p)/(1 − γ)`.
    pub fn penalty_slope(&self) -> f64 {
        2.0 * (self.eps_s_slope + self.sampling_slope()) / (1.0 - self.gamma)
    }

    /// `ε_c + 2(ε_s(ψ) + ε_p(ψ))/(1 − γ)`.
    pub fn penalty(&self, psi: f64) -> f64 {
        self.eps_c + 2.0 * (epsilon_s(self, psi) + epsilon_p(self, psi)) / (1.0 - self.gamma)
    }
}

/// `c·K_r + c·ψ·(K_φ + γK_P)`.
pub fn epsilon_p(model: &ErrorModel, psi: f64) -> f64 {
    model.cover_radius * model.k_r + psi * model.sampling_slope()
}

pub fn epsilon_s(model: &ErrorModel, psi: f64) -> f64 {
    model.eps_s_slope * psi
}

/// Offline bounds for the full, sampled and estimated programs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineBounds {
    pub full: f64,
    pub sampled: f64,
    pub estimated: f64,
}

/// Offline bounds given `ε = 2/(1−γ)·min_{v ∈ M(ψ)} ‖v − v*‖_∞`.
pub fn offline_bound(model: &ErrorModel, psi: f64, eps: f64) -> OfflineBounds {
    let g = 1.0 - model.gamma;
    let (ep, es, ec) = (epsilon_p(model, psi), epsilon_s(model, psi), model.eps_c);
    OfflineBounds {
        full: eps,
        sampled: eps + 2.0 * ec + 2.0 * ep / g,
        estimated: eps + 2.0 * ec + (3.0 * es + 2.0 * ep) / g,
    }
}

/// Online bound `ρ̄ᵀv − ρᵀv* + ε_c + 2(ε_s + ε_p)/(1 − γ)` for a feasible `v`.
pub fn online_bound(rho_bar_v: f64, rho_v_star: f64, model: &ErrorModel, psi: f64) -> f64 {
    rho_bar_v - rho_v_star + model.penalty(psi)
}

/// Selected budget and the bound curve `f(ψ) + ρᵀv*` at every breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub psi_star: f64,
    pub curve: Vec<(f64, f64)>,
    /// True when the minimizer is the end of a path that stopped at
    /// `psi_max` with the bound still decreasing.
    pub at_boundary: bool,
}

/// Minimizes `θ(ψ) + ε_c + 2(ε_s(ψ) + ε_p(ψ))/(1 − γ)` over the path. The
/// objective is convex and piecewise linear, so the minimizer is the first
/// breakpoint whose right-hand slope is nonnegative; ties go to the smallest
/// budget.
pub fn select_psi(path: &HomotopyPath, model: &ErrorModel) -> Result<Selection> {
    let psi: Vec<f64> = path.vertices.iter().map(|v| v.psi).collect();
    let theta: Vec<f64> = path.vertices.iter().map(|v| v.objective).collect();
    let open = matches!(path.terminal, Terminal::ReachedPsiMax { .. });
    select_on_curve(&psi, &theta, open, model)
}

/// [`select_psi`] on explicit breakpoints `psi` and values `theta`. `open_end`
/// says whether `θ` may keep decreasing past the last breakpoint.
pub fn select_on_curve(psi: &[f64], theta: &[f64], open_end: bool, model: &ErrorModel) -> Result<Selection> {
    if psi.is_empty() {
        return Err(RalpError::invalid("cannot select a budget on an empty path"));
    }
    if psi.len() != theta.len() {
        return Err(RalpError::dim("objective curve", psi.len(), theta.len()));
    }
    let pen = model.penalty_slope();
    let curve: Vec<(f64, f64)> = psi.iter().zip(theta).map(|(&p, &t)| (p, t + model.penalty(p))).collect();
    let tol = 1e-12 * (1.0 + pen);
    let first = (0..psi.len() - 1).find(|&k| (theta[k + 1] - theta[k]) / (psi[k + 1] - psi[k]) + pen >= -tol);
    Ok(match first {
        Some(k) => Selection { psi_star: psi[k], curve, at_boundary: false },
        None => Selection { psi_star: psi[psi.len() - 1], curve, at_boundary: open_end },
    })
}

/// `2/(1−γ)·min ‖Φw − v*‖_∞` subject to `Σ e_i|w_i| ≤ ψ`, solved exactly as
/// an LP. `phi` has one row per state.
pub fn best_approximation_error(phi: &DMatrix<f64>, v_star: &[f64], reg: &[f64], psi: f64, gamma: f64) -> Result<f64> {
    let (n, k) = phi.shape();
    if v_star.len() != n {
        return Err(RalpError::dim("optimal value function", n, v_star.len()));
    }
    if reg.len() != k {
        return Err(RalpError::dim("regularization weights", k, reg.len()));
    }
    // Variables: w⁺₀, w⁻₀, …, t. Rows: Φw + t ≥ v*, −Φw + t ≥ −v*.
    let vars = 2 * k + 1;
    let mut a = DMatrix::zeros(2 * n, vars);
    let mut b = Vec::with_capacity(2 * n);
    for s in 0..n {
        for j in 0..k {
            a[(s, 2 * j)] = phi[(s, j)];
            a[(s, 2 * j + 1)] = -phi[(s, j)];
            a[(n + s, 2 * j)] = -phi[(s, j)];
            a[(n + s, 2 * j + 1)] = phi[(s, j)];
        }
        a[(s, 2 * k)] = 1.0;
        a[(n + s, 2 * k)] = 1.0;
    }
    b.extend_from_slice(v_star);
    b.extend(v_star.iter().map(|v| -v));
    let mut c = vec![0.0; vars];
    c[2 * k] = 1.0;
    let mut e: Vec<f64> = reg.iter().flat_map(|&r| [r, r]).collect();
    e.push(0.0);
    let lp = StandardLP::new(c, a, b, e, psi)?;
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(RalpError::Solver(format!("best-approximation LP ended with status {:?}", sol.status)));
    }
    Ok(2.0 * sol.objective / (1.0 - gamma))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest Euclidean distance from a state to its nearest sampled state.
pub fn cover_radius(states: &[Vec<f64>], sampled: &[Vec<f64>]) -> Result<f64> {
    if sampled.is_empty() {
        return Err(RalpError::invalid("cover radius needs at least one sampled state"));
    }
    Ok(states
        .iter()
        .map(|s| sampled.iter().map(|t| distance(s, t)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// `K_r` over the tabular states, `max |r(x,a) − r(y,a)| / ‖x − y‖`.
pub fn reward_lipschitz(mdp: &TabularMdp) -> f64 {
    let n = mdp.num_states();
    let mut k = 0.0f64;
    for a in 0..mdp.num_actions() {
        let r = mdp.reward(a);
        for x in 0..n {
            for y in x + 1..n {
                let d = distance(&TabularMdp::state_vector(x), &TabularMdp::state_vector(y));
                k = k.max((r[x] - r[y]).abs() / d);
            }
        }
    }
    k
}

/// `K_P` over the tabular states, `max |p(z|x,a) − p(z|y,a)| / ‖x − y‖`.
pub fn transition_lipschitz(mdp: &TabularMdp) -> f64 {
    let n = mdp.num_states();
    let mut k = 0.0f64;
    for a in 0..mdp.num_actions() {
        let p = mdp.transition(a);
        for x in 0..n {
            for y in x + 1..n {
                let d = distance(&TabularMdp::state_vector(x), &TabularMdp::state_vector(y));
                let diff = (0..n).map(|z| (p[(x, z)] - p[(y, z)]).abs()).fold(0.0, f64::max);
                k = k.max(diff / d);
            }
        }
    }
    k
}

/// Exact `ε_s` slope for sampled successors of a tabular MDP:
/// `γ·max |E[φ_i(s')] − mean φ_i(s̃')|` over records and regularized
/// features, so that `|L̄v − L̃v| ≤ slope·ψ` for every `v` in the budget set.
pub fn estimation_slope(mdp: &TabularMdp, samples: &SampleSet, basis: &FeatureBasis) -> Result<f64> {
    let n = mdp.num_states();
    let states: Vec<Vec<f64>> = (0..n).map(TabularMdp::state_vector).collect();
    let phi = basis.materialize(&states)?;
    let reg = basis.reg_weights();
    let mut worst = 0.0f64;
    for rec in samples.records() {
        let s = mdp.state_index(&rec.state)?;
        let p = mdp.transition(rec.action);
        let mut estimate = vec![0.0; basis.len()];
        for (next, w) in rec.successors.weighted() {
            if let NextState::State(z) = next {
                for (acc, f) in estimate.iter_mut().zip(basis.evaluate(z)?) {
                    *acc += w * f;
                }
            }
        }
        for (i, est) in estimate.iter().enumerate() {
            if reg[i] == 0.0 {
                continue;
            }
            let exact: f64 = (0..n).map(|z| p[(s, z)] * phi[(z, i)]).sum();
            worst = worst.max((exact - est).abs() / reg[i]);
        }
    }
    Ok(mdp.discount() * worst)
}

/// Everything the selector reports for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub psi_star: f64,
    pub eps_p: f64,
    pub eps_s: f64,
    pub eps_c: f64,
    /// `None` when the best-approximation error was not computed.
    pub offline: Option<OfflineBounds>,
    /// `None` when `ρᵀv*` is unknown.
    pub online: Option<f64>,
    pub objective_at_star: f64,
    pub at_boundary: bool,
    pub curve: Vec<(f64, f64)>,
}

impl BoundReport {
    /// Runs the selector and evaluates every term at `ψ*`.
    /// `best_approx` is `ε` at `ψ*` and `rho_v_star` is `ρᵀv*`, when known.
    pub fn build(
        path: &HomotopyPath,
        model: &ErrorModel,
        best_approx: impl FnOnce(f64) -> Option<Result<f64>>,
        rho_v_star: Option<f64>,
    ) -> Result<Self> {
        let sel = select_psi(path, model)?;
        let psi = sel.psi_star;
        let objective_at_star = path.objective_at(psi)?;
        let offline = best_approx(psi).transpose()?.map(|eps| offline_bound(model, psi, eps));
        Ok(Self {
            psi_star: psi,
            eps_p: epsilon_p(model, psi),
            eps_s: epsilon_s(model, psi),
            eps_c: model.eps_c,
            offline,
            online: rho_v_star.map(|r| online_bound(objective_at_star, r, model, psi)),
            objective_at_star,
            at_boundary: sel.at_boundary,
            curve: sel.curve,
        })
    }

    /// `key = value` summary followed by the curve as `psi,f` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "psi_star = {:?}", self.psi_star);
        let _ = writeln!(out, "objective = {:?}", self.objective_at_star);
        let _ = writeln!(out, "eps_p = {:?}", self.eps_p);
        let _ = writeln!(out, "eps_s = {:?}", self.eps_s);
        let _ = writeln!(out, "eps_c = {:?}", self.eps_c);
        match &self.offline {
            Some(b) => {
                let _ = writeln!(out, "offline_full = {:?}", b.full);
                let _ = writeln!(out, "offline_sampled = {:?}", b.sampled);
                let _ = writeln!(out, "offline_estimated = {:?}", b.estimated);
            }
            None => {
                for k in ["offline_full", "offline_sampled", "offline_estimated"] {
                    let _ = writeln!(out, "{k} = not computed");
                }
            }
        }
        match self.online {
            Some(v) => {
                let _ = writeln!(out, "online = {v:?}");
            }
            None => {
                let _ = writeln!(out, "online = not computed");
            }
        }
        let _ = writeln!(out, "at_boundary = {}", self.at_boundary);
        out.push_str("\npsi,f\n");
        for (p, f) in &self.curve {
            let _ = writeln!(out, "{p:?},{f:?}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn epsilon_p_closed_form() {
        let m = ErrorModel::new(0.5, 1.0, 0.1, 2.0, 0.9).unwrap();
        assert_abs_diff_eq!(epsilon_p(&m, 1.0), 1.545, epsilon = 1e-12);
        assert_abs_diff_eq!(epsilon_p(&m, 0.0), 0.5, epsilon = 1e-15);
        let chain = ErrorModel::with_sampling_slope(0.9, 0.05).unwrap();
        assert_abs_diff_eq!(epsilon_p(&chain, 2.0), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(chain.penalty_slope(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn offline_bounds_collapse_without_errors() {
        let m = ErrorModel::new(0.0, 0.0, 0.0, 0.0, 0.9).unwrap();
        let b = offline_bound(&m, 3.0, 1.7);
        assert_eq!((b.full, b.sampled, b.estimated), (1.7, 1.7, 1.7));
    }

    #[test]
    fn sampled_offline_bound_arithmetic() {
        let m = ErrorModel::with_sampling_slope(0.9, 0.05).unwrap();
        let b = offline_bound(&m, 1.0, 1.0);
        assert_abs_diff_eq!(b.sampled, 2.0, epsilon = 1e-12);
        assert!(b.full <= b.sampled && b.sampled <= b.estimated);
    }

    #[test]
    fn online_bound_is_zero_at_optimum() {
        let m = ErrorModel::new(0.0, 0.0, 0.0, 0.0, 0.9).unwrap();
        assert_eq!(online_bound(4.0, 4.0, &m, 2.0), 0.0);
    }

    #[test]
    fn parses_toml_model() {
        let m = ErrorModel::parse("cover_radius = 0.05\nk_r = 0\nk_p = 0\nk_phi = 1\ngamma = 0.9\n").unwrap();
        assert_eq!(m, ErrorModel::with_sampling_slope(0.9, 0.05).unwrap());
        assert_eq!(ErrorModel::parse(&m.to_toml()).unwrap(), m);
        assert!(ErrorModel::parse("cover_radius = -1\nk_r = 0\nk_p = 0\nk_phi = 1\ngamma = 0.9\n").is_err());
        assert!(matches!(ErrorModel::parse("gamma = 0.9"), Err(RalpError::Parse { .. })));
    }

    #[test]
    fn selects_first_nonnegative_slope() {
        let m = ErrorModel::with_sampling_slope(0.9, 0.05).unwrap();
        let psi = [0.0, 1.0, 3.0, 4.0];
        let theta = [10.0, 5.0, 3.0, 2.98];
        let sel = select_on_curve(&psi, &theta, true, &m).unwrap();
        assert_eq!(sel.psi_star, 1.0);
        assert!(!sel.at_boundary);
    }

    #[test]
    fn dominant_penalty_selects_zero() {
        let m = ErrorModel::with_sampling_slope(0.9, 1.0).unwrap();
        let sel = select_on_curve(&[0.0, 1.0], &[10.0, 5.0], true, &m).unwrap();
        assert_eq!(sel.psi_star, 0.0);
    }

    #[test]
    fn decreasing_bound_stops_at_open_end() {
        let m = ErrorModel::with_sampling_slope(0.9, 0.0).unwrap();
        let sel = select_on_curve(&[0.0, 1.0], &[10.0, 5.0], true, &m).unwrap();
        assert_eq!((sel.psi_star, sel.at_boundary), (1.0, true));
        assert!(select_on_curve(&[], &[], true, &m).is_err());
    }

    #[test]
    fn best_approximation_of_representable_function_is_zero() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let eps = best_approximation_error(&phi, &[1.0, 2.0, 3.0], &[0.0, 1.0], 5.0, 0.9).unwrap();
        assert_abs_diff_eq!(eps, 0.0, epsilon = 1e-9);
        // With no slope budget the best constant is the midrange, error 1.
        let eps = best_approximation_error(&phi, &[1.0, 2.0, 3.0], &[0.0, 1.0], 0.0, 0.9).unwrap();
        assert_abs_diff_eq!(eps, 20.0, epsilon = 1e-9);
    }

    #[test]
    fn cover_radius_of_stride_four() {
        let states: Vec<Vec<f64>> = (1..=200).map(|i| vec![i as f64]).collect();
        let sampled: Vec<Vec<f64>> = (1..=50).map(|i| vec![4.0 * i as f64]).collect();
        assert_eq!(cover_radius(&states, &sampled).unwrap(), 3.0);
    }
}
