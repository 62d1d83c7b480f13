//! Tabular Markov decision processes and their exact Bellman operator.
//!
//! Tabular states are numbered `0..num_states` internally. Whenever a tabular
//! state has to be handed to a feature map or stored in a sample file it is
//! written as the one-dimensional vector `[i + 1]`, i.e. states carry 1-based
//! labels (state `s_1` is index 0).

use nalgebra::{DMatrix, DVector};

use crate::error::{RalpError, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Default cap on value-iteration sweeps.
pub const VALUE_ITERATION_CAP: usize = 1_000_000;

/// A finite MDP with one row-stochastic transition matrix and one reward
/// vector per action.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    transitions: Vec<DMatrix<f64>>,
    rewards: Vec<Vec<f64>>,
    discount: f64,
}

impl TabularMdp {
    pub fn new(transitions: Vec<DMatrix<f64>>, rewards: Vec<Vec<f64>>, discount: f64) -> Result<Self> {
        if transitions.is_empty() {
            return Err(RalpError::invalid("an MDP needs at least one action"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(RalpError::invalid(format!("discount {discount} is not in [0, 1)")));
        }
        if transitions.len() != rewards.len() {
            return Err(RalpError::dim("reward vectors per action", transitions.len(), rewards.len()));
        }
        let n = transitions[0].nrows();
        if n == 0 {
            return Err(RalpError::invalid("an MDP needs at least one state"));
        }
        for (a, (p, r)) in transitions.iter().zip(&rewards).enumerate() {
            if p.nrows() != n || p.ncols() != n {
                return Err(RalpError::dim(format!("transition matrix of action {a}"), n, p.nrows().max(p.ncols())));
            }
            if r.len() != n {
                return Err(RalpError::dim(format!("reward vector of action {a}"), n, r.len()));
            }
            for s in 0..n {
                let row = p.row(s);
                if row.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
                    return Err(RalpError::invalid(format!(
                        "action {a}, state {s}: probabilities must lie in [0, 1]"
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(RalpError::invalid(format!(
                        "action {a}, state {s}: transition row sums to {total}"
                    )));
                }
            }
        }
        Ok(Self { transitions, rewards, discount })
    }

    pub fn num_states(&self) -> usize {
        self.transitions[0].nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition(&self, action: usize) -> &DMatrix<f64> {
        &self.transitions[action]
    }

    pub fn reward(&self, action: usize) -> &[f64] {
        &self.rewards[action]
    }

    /// The labelled state vector `[index + 1]`.
    pub fn state_vector(index: usize) -> Vec<f64> {
        vec![(index + 1) as f64]
    }

    /// Inverse of [`TabularMdp::state_vector`].
    pub fn state_index(&self, state: &[f64]) -> Result<usize> {
        tabular_index(state, self.num_states())
    }

    /// One-step lookahead `r_a + γ P_a v` for a single action.
    pub fn q_values(&self, action: usize, v: &[f64]) -> Result<Vec<f64>> {
        let p = &self.transitions[action];
        if p.ncols() != v.len() {
            return Err(RalpError::dim(format!("transition matrix of action {action}"), p.ncols(), v.len()));
        }
        let pv = p * DVector::from_column_slice(v);
        Ok(self.rewards[action]
            .iter()
            .zip(pv.iter())
            .map(|(r, x)| r + self.discount * x)
            .collect())
    }

    /// The Bellman optimality operator `(Lv)(s) = max_a r_a(s) + γ (P_a v)(s)`.
    pub fn bellman(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![f64::NEG_INFINITY; self.num_states()];
        for a in 0..self.num_actions() {
            for (o, q) in out.iter_mut().zip(self.q_values(a, v)?) {
                if q > *o {
                    *o = q;
                }
            }
        }
        Ok(out)
    }

    /// Greedy action per state; ties go to the lowest action id.
    pub fn greedy_policy(&self, v: &[f64]) -> Result<Vec<usize>> {
        let mut best = vec![f64::NEG_INFINITY; self.num_states()];
        let mut policy = vec![0; self.num_states()];
        for a in 0..self.num_actions() {
            for (s, q) in self.q_values(a, v)?.into_iter().enumerate() {
                if q > best[s] {
                    best[s] = q;
                    policy[s] = a;
                }
            }
        }
        Ok(policy)
    }

    /// Exact value of a deterministic policy by solving `(I − γ P_π) v = r_π`.
    pub fn evaluate_policy(&self, policy: &[usize]) -> Result<Vec<f64>> {
        let n = self.num_states();
        if policy.len() != n {
            return Err(RalpError::dim("policy", n, policy.len()));
        }
        let mut system = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (s, &a) in policy.iter().enumerate() {
            if a >= self.num_actions() {
                return Err(RalpError::invalid(format!("policy picks unknown action {a} in state {s}")));
            }
            for t in 0..n {
                system[(s, t)] -= self.discount * self.transitions[a][(s, t)];
            }
            rhs[s] = self.rewards[a][s];
        }
        let solution = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| RalpError::Solver("policy evaluation system is singular".into()))?;
        Ok(solution.iter().copied().collect())
    }
}

pub(crate) fn tabular_index(state: &[f64], num_states: usize) -> Result<usize> {
    if state.len() != 1 {
        return Err(RalpError::dim("tabular state vector", 1, state.len()));
    }
    let label = state[0];
    if label.fract() != 0.0 || label < 1.0 || label > num_states as f64 {
        return Err(RalpError::invalid(format!(
            "state label {label} is not in 1..={num_states}"
        )));
    }
    Ok(label as usize - 1)
}

/// `‖a − b‖_∞`.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Outcome of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Final Bellman residual `‖Lv − v‖_∞`.
    pub residual: f64,
    pub converged: bool,
}

/// Iterates `v ← Lv` until the Bellman residual `‖Lv − v‖_∞` drops to `tol`.
///
/// Stops after [`VALUE_ITERATION_CAP`] sweeps; the returned struct then has
/// `converged == false` and the residual reached so far.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<ValueIteration> {
    if !(tol > 0.0) {
        return Err(RalpError::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut v = vec![0.0; mdp.num_states()];
    let mut next = mdp.bellman(&v)?;
    let mut residual = sup_distance(&next, &v);
    let mut iterations = 0;
    while residual > tol {
        if iterations >= VALUE_ITERATION_CAP {
            return Ok(ValueIteration { values: v, iterations, residual, converged: false });
        }
        v = next;
        next = mdp.bellman(&v)?;
        residual = sup_distance(&next, &v);
        iterations += 1;
    }
    Ok(ValueIteration { values: v, iterations, residual, converged: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn self_loop(reward: f64, discount: f64) -> TabularMdp {
        TabularMdp::new(vec![DMatrix::from_element(1, 1, 1.0)], vec![vec![reward]], discount).unwrap()
    }

    #[test]
    fn one_step_reward() {
        let mdp = self_loop(1.0, 0.5);
        assert_eq!(mdp.bellman(&[0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn geometric_series_two_states() {
        // s1 -> s2 with reward 1, s2 absorbing with reward 0
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let mdp = TabularMdp::new(vec![p], vec![vec![1.0, 0.0]], 0.5).unwrap();
        let vi = value_iteration(&mdp, 1e-12).unwrap();
        assert!(vi.converged);
        assert_abs_diff_eq!(vi.values[0], 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(vi.values[1], 0.0, epsilon = 1e-11);
    }

    #[test]
    fn self_loop_value() {
        let mdp = self_loop(1.0, 0.9);
        let vi = value_iteration(&mdp, 1e-10).unwrap();
        assert_abs_diff_eq!(vi.values[0], 10.0, epsilon = 1e-8);
        let exact = mdp.evaluate_policy(&[0]).unwrap();
        assert_abs_diff_eq!(exact[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        let p = DMatrix::from_row_slice(1, 1, &[0.9]);
        assert!(TabularMdp::new(vec![p], vec![vec![0.0]], 0.5).is_err());
        assert!(TabularMdp::new(vec![DMatrix::from_element(1, 1, 1.0)], vec![vec![0.0]], 1.0).is_err());
    }

    #[test]
    fn mismatched_value_names_action() {
        let mdp = self_loop(1.0, 0.5);
        let err = mdp.bellman(&[0.0, 1.0]).unwrap_err().to_string();
        assert!(err.contains("action 0"), "{err}");
    }

    #[test]
    fn state_labels_round_trip() {
        let mdp = self_loop(0.0, 0.5);
        assert_eq!(mdp.state_index(&TabularMdp::state_vector(0)).unwrap(), 0);
        assert!(mdp.state_index(&[2.0]).is_err());
        assert!(mdp.state_index(&[0.5]).is_err());
    }
}
