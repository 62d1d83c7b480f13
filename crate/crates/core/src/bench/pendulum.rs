//! Kernel-basis RALP controllers for the pendulum.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::env::{collect_samples, EpisodicEnv};
use crate::error::{RalpError, Result};
use crate::features::{FeatureBasis, FeatureSpec};
use crate::homotopy::{trace_path_with, HomotopyOptions};
use crate::lp::{to_standard_form, RalpProblem};
use crate::samples::SampleSet;
use crate::value::ValueFunction;

/// Training settings for the kernel RALP.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSetup {
    pub episodes: usize,
    /// Number of sampled states used as kernel centers.
    pub centers: usize,
    pub sigmas: Vec<f64>,
    pub degree: u32,
    pub psi: f64,
}

impl Default for KernelSetup {
    fn default() -> Self {
        Self { episodes: 100, centers: 650, sigmas: vec![0.5, 1.0, 1.5], degree: 6, psi: 1.4 }
    }
}

/// Gaussian kernels of every width plus one polynomial kernel on each of
/// `count` distinct states drawn from `states`. The polynomial kernel takes
/// its inner product on states divided by `poly_scale`, i.e.
/// `((s/σ)ᵀ(c/σ) + 1)^d`, which keeps it within a few orders of magnitude of
/// the Gaussians.
pub fn kernel_basis(
    states: &[Vec<f64>],
    count: usize,
    sigmas: &[f64],
    degree: u32,
    poly_scale: &[f64],
    seed: u64,
) -> Result<FeatureBasis> {
    if states.is_empty() {
        return Err(RalpError::invalid("no states to place kernels on"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, states.len(), count.min(states.len()));
    let mut specs = vec![FeatureSpec::Constant];
    for i in picked.iter() {
        let c = &states[i];
        for &sigma in sigmas {
            specs.push(FeatureSpec::Gaussian { center: c.clone(), sigma });
        }
        if poly_scale.len() != c.len() {
            return Err(RalpError::dim("polynomial kernel scale", c.len(), poly_scale.len()));
        }
        let center = c.iter().zip(poly_scale).map(|(x, k)| x / (k * k)).collect();
        specs.push(FeatureSpec::PolynomialKernel { center, degree });
    }
    FeatureBasis::new(specs)
}

/// A trained linear value function and what it was built from.
#[derive(Debug, Clone)]
pub struct KernelRalp {
    pub samples: SampleSet,
    pub value: ValueFunction,
    pub objective: f64,
    /// Features with nonzero weight, the constant included.
    pub nonzero: usize,
}

/// Collects samples from random episodes, builds the kernel basis on the
/// visited states and solves the estimated RALP at `setup.psi`.
pub fn train_kernel_ralp(env: &EpisodicEnv, setup: &KernelSetup, seed: u64) -> Result<KernelRalp> {
    let samples = collect_samples(env, setup.episodes, true, seed)?;
    let scale: Vec<f64> = env.bounds().iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect();
    let basis = Arc::new(kernel_basis(&samples.source_states(), setup.centers, &setup.sigmas, setup.degree, &scale, seed)?);
    let problem = RalpProblem::from_samples(&samples, basis.clone(), setup.psi, env.discount())?;
    let lp = to_standard_form(&problem);
    let path = trace_path_with(&lp, &HomotopyOptions::new(setup.psi))?;
    let w = path.weights_at(setup.psi)?;
    let nonzero = w.iter().filter(|x| **x != 0.0).count();
    Ok(KernelRalp {
        objective: path.objective_at(setup.psi)?,
        value: ValueFunction::linear(basis, w)?,
        samples,
        nonzero,
    })
}
