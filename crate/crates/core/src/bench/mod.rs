//! Benchmark problems: the tabular chain and two continuous simulators.

pub mod chain;
pub mod env;
pub mod mountain_car;
pub mod pendulum;

pub use chain::{chain_basis, chain_mdp, chain_samples, error_profile, ChainConfig};
pub use env::{collect_samples, mountain_car_env, pendulum_env, uniform_samples, EnvKind, EpisodicEnv};
