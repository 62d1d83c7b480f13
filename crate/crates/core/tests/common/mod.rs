#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ralp::features::{FeatureBasis, FeatureSpec};
use ralp::lp::{to_standard_form, RalpProblem, StandardLP};
use ralp::mdp::TabularMdp;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mdp(rng: &mut ChaCha8Rng, states: usize, actions: usize, discount: f64) -> TabularMdp {
    let transitions = (0..actions)
        .map(|_| {
            let mut p = DMatrix::from_fn(states, states, |_, _| {
                if rng.random::<f64>() < 0.5 {
                    rng.random::<f64>()
                } else {
                    0.0
                }
            });
            for mut row in p.row_iter_mut() {
                let j = rng.random_range(0..states);
                row[j] += 0.1;
                let s = row.sum();
                row /= s;
            }
            p
        })
        .collect();
    let rewards = (0..actions)
        .map(|_| (0..states).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    TabularMdp::new(transitions, rewards, discount).unwrap()
}

pub fn random_basis(rng: &mut ChaCha8Rng, states: usize, features: usize) -> FeatureBasis {
    let mut specs = vec![FeatureSpec::Constant];
    for _ in 0..features {
        specs.push(FeatureSpec::Gaussian {
            center: vec![rng.random_range(1.0..states as f64)],
            sigma: rng.random_range(0.5..3.0),
        });
    }
    FeatureBasis::new(specs).unwrap()
}

/// Full RALP of a random MDP with 3–8 states, 1–2 actions and 1–4 kernels.
pub fn random_ralp(seed: u64) -> StandardLP {
    let mut rng = rng(seed);
    let states = rng.random_range(3..9);
    let actions = rng.random_range(1..3);
    let mdp = random_mdp(&mut rng, states, actions, 0.9);
    let features = rng.random_range(1..5);
    let basis = Arc::new(random_basis(&mut rng, states, features));
    to_standard_form(&RalpProblem::full(&mdp, basis, 0.0).unwrap())
}

/// Like [`random_ralp`] but with at most `max_vars` standard variables and
/// `max_rows` rows.
pub fn small_ralp(seed: u64, max_vars: usize, max_rows: usize) -> StandardLP {
    let mut rng = rng(seed);
    let actions = rng.random_range(1..3);
    let states = rng.random_range(2..=(max_rows / actions).min(15));
    let discount = rng.random_range(0.5..0.95);
    let mdp = random_mdp(&mut rng, states, actions, discount);
    let features = rng.random_range(1..max_vars / 2);
    let basis = Arc::new(random_basis(&mut rng, states, features));
    to_standard_form(&RalpProblem::full(&mdp, basis, 0.0).unwrap())
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
