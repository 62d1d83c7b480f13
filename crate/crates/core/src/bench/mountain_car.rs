//! Downscaled mountain car RALP used for timing the path tracer against
//! repeated simplex solves.

use std::sync::Arc;

use crate::bench::env::{uniform_samples, EpisodicEnv};
use crate::error::{RalpError, Result};
use crate::features::{FeatureBasis, FeatureSpec};
use crate::lp::{to_standard_form, RalpProblem, StandardLP};

/// Constant plus `per_dim` hinges on each state dimension, centers evenly
/// spaced over the state bounds.
pub fn hinge_grid(env: &EpisodicEnv, per_dim: usize) -> Result<FeatureBasis> {
    if per_dim == 0 {
        return Err(RalpError::invalid("need at least one hinge per dimension"));
    }
    let mut specs = vec![FeatureSpec::Constant];
    for (dim, (lo, hi)) in env.bounds().into_iter().enumerate() {
        for j in 0..per_dim {
            let center = lo + (hi - lo) * j as f64 / per_dim as f64;
            specs.push(FeatureSpec::PiecewiseLinear { dim, center });
        }
    }
    FeatureBasis::new(specs)
}

/// Estimated RALP on `samples` uniform samples with a hinge grid.
pub fn hinge_ralp(env: &EpisodicEnv, samples: usize, per_dim: usize, seed: u64) -> Result<StandardLP> {
    let set = uniform_samples(env, samples, seed)?;
    let basis = Arc::new(hinge_grid(env, per_dim)?);
    Ok(to_standard_form(&RalpProblem::from_samples(&set, basis, 0.0, env.discount())?))
}
