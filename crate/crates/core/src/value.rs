use std::sync::Arc;

use crate::error::{RalpError, Result};
use crate::features::FeatureBasis;
use crate::mdp::tabular_index;

/// A value function, either one number per tabular state or `φ(s)ᵀw`.
#[derive(Debug, Clone)]
pub enum ValueFunction {
    Tabular(Vec<f64>),
    Linear { basis: Arc<FeatureBasis>, weights: Vec<f64> },
}

impl ValueFunction {
    pub fn linear(basis: Arc<FeatureBasis>, weights: Vec<f64>) -> Result<Self> {
        if basis.len() != weights.len() {
            return Err(RalpError::dim("weight vector", basis.len(), weights.len()));
        }
        Ok(ValueFunction::Linear { basis, weights })
    }

    /// Value at a state vector. Tabular functions take 1-based state labels.
    pub fn value_at(&self, state: &[f64]) -> Result<f64> {
        match self {
            ValueFunction::Tabular(v) => Ok(v[tabular_index(state, v.len())?]),
            ValueFunction::Linear { basis, weights } => basis.value(state, weights),
        }
    }

    /// Values on the tabular states `1..=num_states`.
    pub fn on_tabular_states(&self, num_states: usize) -> Result<Vec<f64>> {
        match self {
            ValueFunction::Tabular(v) if v.len() == num_states => Ok(v.clone()),
            ValueFunction::Tabular(v) => Err(RalpError::dim("tabular value function", num_states, v.len())),
            ValueFunction::Linear { .. } => {
                (1..=num_states).map(|i| self.value_at(&[i as f64])).collect()
            }
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            ValueFunction::Linear { weights, .. } => Some(weights),
            ValueFunction::Tabular(_) => None,
        }
    }
}

/// `Σ ρ(s)|v(s) − v_ref(s)|`.
pub fn weighted_l1_error(v: &[f64], reference: &[f64], weights: &[f64]) -> Result<f64> {
    if v.len() != reference.len() {
        return Err(RalpError::dim("reference value function", v.len(), reference.len()));
    }
    if weights.len() != v.len() {
        return Err(RalpError::dim("state weights", v.len(), weights.len()));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(RalpError::invalid("state weights must be a probability distribution"));
    }
    Ok(v.iter().zip(reference).zip(weights).map(|((a, b), w)| w * (a - b).abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weighted_error_examples() {
        assert_eq!(weighted_l1_error(&[1.0, 2.0], &[0.0, 0.0], &[0.5, 0.5]).unwrap(), 1.5);
        assert_eq!(weighted_l1_error(&[1.0, 2.0], &[1.0, 2.0], &[0.5, 0.5]).unwrap(), 0.0);
        assert!(weighted_l1_error(&[1.0], &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn linear_value_matches_basis() {
        let basis = Arc::new(FeatureBasis::piecewise_linear([2.0]));
        let v = ValueFunction::linear(basis, vec![1.0, 3.0]).unwrap();
        assert_eq!(v.value_at(&[5.0]).unwrap(), 10.0);
        assert_eq!(v.on_tabular_states(2).unwrap(), vec![1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn weighted_error_below_sup_norm(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.01f64..1.0), 1..20)
        ) {
            let total: f64 = pairs.iter().map(|p| p.2).sum();
            let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let w: Vec<f64> = pairs.iter().map(|p| p.2 / total).collect();
            let sup = crate::mdp::sup_distance(&v, &r);
            prop_assert!(weighted_l1_error(&v, &r, &w).unwrap() <= sup + 1e-12);
        }
    }
}
