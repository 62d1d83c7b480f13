//! Continuous episodic simulators and sample collection from random
//! trajectories.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{read_file, RalpError, Result};
use crate::samples::{NextState, SampleKind, SampleRecord, SampleSet};

/// Cart-pole balancing with the pole hinged on a cart; the state is
/// `(angle, angular velocity)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    pub gravity: f64,
    pub pole_mass: f64,
    pub cart_mass: f64,
    pub pole_length: f64,
    pub dt: f64,
    /// Force applied by each action.
    pub forces: Vec<f64>,
    /// Half-width of the uniform noise added to every force.
    pub force_noise: f64,
    pub fall_angle: f64,
    pub max_angular_velocity: f64,
    /// Episodes start uniformly within this distance of upright and at rest.
    pub start_spread: f64,
    pub gamma: f64,
    pub max_steps: usize,
}

/// Underpowered car in a valley; the state is `(position, velocity)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountainCarParams {
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub force: f64,
    pub gravity: f64,
    pub start_low: f64,
    pub start_high: f64,
    pub gamma: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Pendulum,
    MountainCar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpisodicEnv {
    Pendulum(PendulumParams),
    MountainCar(MountainCarParams),
}

/// Bundled pendulum constants.
pub fn pendulum_env() -> EpisodicEnv {
    EpisodicEnv::parse(EnvKind::Pendulum, include_str!("../../configs/pendulum.toml"))
        .expect("bundled pendulum config is valid")
}

/// Bundled mountain car constants.
pub fn mountain_car_env() -> EpisodicEnv {
    EpisodicEnv::parse(EnvKind::MountainCar, include_str!("../../configs/mountain_car.toml"))
        .expect("bundled mountain car config is valid")
}

impl EpisodicEnv {
    pub fn parse(kind: EnvKind, text: &str) -> Result<Self> {
        let env = match kind {
            EnvKind::Pendulum => EpisodicEnv::Pendulum(
                toml::from_str(text).map_err(|e| RalpError::parse("pendulum config", e.message()))?,
            ),
            EnvKind::MountainCar => EpisodicEnv::MountainCar(
                toml::from_str(text).map_err(|e| RalpError::parse("mountain car config", e.message()))?,
            ),
        };
        env.validate()?;
        Ok(env)
    }

    pub fn from_file(kind: EnvKind, path: &Path) -> Result<Self> {
        Self::parse(kind, &read_file(path)?)
    }

    fn validate(&self) -> Result<()> {
        let gamma = self.discount();
        if !(0.0..1.0).contains(&gamma) {
            return Err(RalpError::invalid(format!("discount {gamma} is not in [0, 1)")));
        }
        if self.max_steps() == 0 {
            return Err(RalpError::invalid("max_steps must be positive"));
        }
        match self {
            EpisodicEnv::Pendulum(p) => {
                if p.forces.is_empty() || !(p.dt > 0.0) || !(p.pole_length > 0.0) {
                    return Err(RalpError::invalid("pendulum needs actions, a positive step and pole length"));
                }
            }
            EpisodicEnv::MountainCar(m) => {
                if !(m.min_position < m.goal_position && m.goal_position <= m.max_position) {
                    return Err(RalpError::invalid("mountain car goal must lie inside the track"));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            EpisodicEnv::Pendulum(_) => EnvKind::Pendulum,
            EpisodicEnv::MountainCar(_) => EnvKind::MountainCar,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EpisodicEnv::Pendulum(p) => p.forces.len(),
            EpisodicEnv::MountainCar(_) => 3,
        }
    }

    pub fn state_dim(&self) -> usize {
        2
    }

    pub fn discount(&self) -> f64 {
        match self {
            EpisodicEnv::Pendulum(p) => p.gamma,
            EpisodicEnv::MountainCar(m) => m.gamma,
        }
    }

    pub fn max_steps(&self) -> usize {
        match self {
            EpisodicEnv::Pendulum(p) => p.max_steps,
            EpisodicEnv::MountainCar(m) => m.max_steps,
        }
    }

    /// Per-dimension `(low, high)` bounds of non-terminal states.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            EpisodicEnv::Pendulum(p) => vec![
                (-p.fall_angle, p.fall_angle),
                (-p.max_angular_velocity, p.max_angular_velocity),
            ],
            EpisodicEnv::MountainCar(m) => {
                vec![(m.min_position, m.goal_position), (-m.max_speed, m.max_speed)]
            }
        }
    }

    pub fn initial_state(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            EpisodicEnv::Pendulum(p) => {
                let s = p.start_spread;
                vec![rng.random_range(-s..=s), 0.0]
            }
            EpisodicEnv::MountainCar(m) => vec![rng.random_range(m.start_low..=m.start_high), 0.0],
        }
    }

    /// A state drawn uniformly from [`bounds`](Self::bounds).
    pub fn uniform_state(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.bounds().into_iter().map(|(lo, hi)| rng.random_range(lo..hi)).collect()
    }

    /// One noise draw for [`step_with_noise`](Self::step_with_noise).
    pub fn draw_noise(&self, rng: &mut impl Rng) -> f64 {
        match self {
            EpisodicEnv::Pendulum(p) if p.force_noise > 0.0 => rng.random_range(-p.force_noise..=p.force_noise),
            _ => 0.0,
        }
    }

    /// Deterministic transition for a given noise draw: `(reward, next)`.
    pub fn step_with_noise(&self, state: &[f64], action: usize, noise: f64) -> (f64, NextState) {
        match self {
            EpisodicEnv::Pendulum(p) => {
                let (theta, omega) = (state[0], state[1]);
                let u = p.forces[action] + noise;
                let alpha = 1.0 / (p.pole_mass + p.cart_mass);
                let ml = p.pole_mass * p.pole_length;
                let accel = (p.gravity * theta.sin()
                    - alpha * ml * omega * omega * (2.0 * theta).sin() / 2.0
                    - alpha * theta.cos() * u)
                    / (4.0 * p.pole_length / 3.0 - alpha * ml * theta.cos().powi(2));
                let next_theta = theta + p.dt * omega;
                let next_omega =
                    (omega + p.dt * accel).clamp(-p.max_angular_velocity, p.max_angular_velocity);
                if next_theta.abs() > p.fall_angle {
                    (-1.0, NextState::Terminal)
                } else {
                    (0.0, NextState::State(vec![next_theta, next_omega]))
                }
            }
            EpisodicEnv::MountainCar(m) => {
                let (x, v) = (state[0], state[1]);
                let push = action as f64 - 1.0;
                let mut nv = (v + m.force * push - m.gravity * (3.0 * x).cos()).clamp(-m.max_speed, m.max_speed);
                let mut nx = (x + nv).min(m.max_position);
                if nx < m.min_position {
                    nx = m.min_position;
                    nv = 0.0;
                }
                if nx >= m.goal_position {
                    (-1.0, NextState::Terminal)
                } else {
                    (-1.0, NextState::State(vec![nx, nv]))
                }
            }
        }
    }

    pub fn step(&self, state: &[f64], action: usize, rng: &mut impl Rng) -> (f64, NextState) {
        let noise = self.draw_noise(rng);
        self.step_with_noise(state, action, noise)
    }
}

/// Generator for run or episode `index` derived from a master seed.
pub fn derived_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn dedup(records: Vec<SampleRecord>) -> Vec<SampleRecord> {
    let mut seen = HashSet::new();
    records
        .into_iter()
        .filter(|r| seen.insert((r.state.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<_>>(), r.action)))
        .collect()
}

/// Simple samples from `episodes` trajectories of the uniformly random
/// policy. With `per_action`, every visited state is sampled once for each
/// action and the trajectory follows the sample of the chosen action;
/// otherwise only the chosen action is recorded. Episodes run in parallel
/// with seeds derived from `(seed, episode)` and are merged in episode order.
pub fn collect_samples(env: &EpisodicEnv, episodes: usize, per_action: bool, seed: u64) -> Result<SampleSet> {
    if episodes == 0 {
        return Err(RalpError::invalid("at least one episode is required"));
    }
    let per_episode: Vec<Vec<SampleRecord>> = (0..episodes)
        .into_par_iter()
        .map(|ep| {
            let mut rng = derived_rng(seed, ep as u64);
            let mut state = env.initial_state(&mut rng);
            let mut out = Vec::new();
            for _ in 0..env.max_steps() {
                let chosen = rng.random_range(0..env.num_actions());
                let mut follow = NextState::Terminal;
                for a in 0..env.num_actions() {
                    if !per_action && a != chosen {
                        continue;
                    }
                    let (r, next) = env.step(&state, a, &mut rng);
                    if a == chosen {
                        follow = next.clone();
                    }
                    out.push(SampleRecord::simple(state.clone(), a, r, vec![next]));
                }
                match follow {
                    NextState::State(s) => state = s,
                    NextState::Terminal => break,
                }
            }
            out
        })
        .collect();
    SampleSet::new(SampleKind::Simple, dedup(per_episode.into_iter().flatten().collect()))
}

/// `count` simple samples at states drawn uniformly from the state bounds,
/// every action at each state in turn.
pub fn uniform_samples(env: &EpisodicEnv, count: usize, seed: u64) -> Result<SampleSet> {
    if count == 0 {
        return Err(RalpError::invalid("at least one sample is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count);
    while records.len() < count {
        let state = env.uniform_state(&mut rng);
        for a in 0..env.num_actions() {
            if records.len() == count {
                break;
            }
            let (r, next) = env.step(&state, a, &mut rng);
            records.push(SampleRecord::simple(state.clone(), a, r, vec![next]));
        }
    }
    SampleSet::new(SampleKind::Simple, dedup(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_pendulum_is_a_fixed_point() {
        let env = pendulum_env();
        let (r, next) = env.step_with_noise(&[0.0, 0.0], 1, 0.0);
        assert_eq!(r, 0.0);
        assert_eq!(next, NextState::State(vec![0.0, 0.0]));
        assert_eq!(env.num_actions(), 3);
    }

    #[test]
    fn mountain_car_rests_in_the_valley() {
        let env = mountain_car_env();
        let mut s = vec![-std::f64::consts::PI / 6.0, 0.0];
        for _ in 0..10_000 {
            match env.step_with_noise(&s, 1, 0.0).1 {
                NextState::State(n) => s = n,
                NextState::Terminal => panic!("reached the goal without throttle"),
            }
        }
        assert!(s[0] < 0.5);
    }

    #[test]
    fn pendulum_falls_and_terminates() {
        let env = pendulum_env();
        let (r, next) = env.step_with_noise(&[1.5, 3.0], 1, 0.0);
        assert_eq!((r, next), (-1.0, NextState::Terminal));
    }

    #[test]
    fn collection_is_deterministic_and_bounded() {
        let env = pendulum_env();
        let a = collect_samples(&env, 50, true, 11).unwrap();
        let b = collect_samples(&env, 50, true, 11).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert!(a.len() >= 50 && a.len() <= 50 * env.max_steps() * env.num_actions());
        assert_eq!(a.len() % 3, 0);
        assert_ne!(a.to_text(), collect_samples(&env, 50, true, 12).unwrap().to_text());
    }

    #[test]
    fn uniform_samples_have_exact_count() {
        let env = mountain_car_env();
        let s = uniform_samples(&env, 1000, 3).unwrap();
        assert_eq!(s.len(), 1000);
    }
}
