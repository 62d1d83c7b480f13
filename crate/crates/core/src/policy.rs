//! Greedy controllers derived from value functions and their rollout
//! evaluation.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::bench::env::{derived_rng, EpisodicEnv};
use crate::error::{RalpError, Result};
use crate::mdp::TabularMdp;
use crate::samples::NextState;
use crate::value::ValueFunction;

/// Default number of simulated successors per action.
pub const DEFAULT_LOOKAHEAD: usize = 10;

/// How action values are estimated.
#[derive(Debug, Clone)]
pub enum Lookahead<'a> {
    /// Exact one-step expectation under a tabular model.
    Tabular { mdp: &'a TabularMdp, values: Vec<f64> },
    /// Mean over `samples` simulated successors.
    Simulated { env: &'a EpisodicEnv, samples: usize },
}

#[derive(Debug, Clone)]
pub struct GreedyPolicy<'a> {
    pub value: ValueFunction,
    pub model: Lookahead<'a>,
}

/// Index of the largest entry, lowest index among ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl<'a> GreedyPolicy<'a> {
    pub fn tabular(value: ValueFunction, mdp: &'a TabularMdp) -> Result<Self> {
        let values = value.on_tabular_states(mdp.num_states())?;
        Ok(Self { value, model: Lookahead::Tabular { mdp, values } })
    }

    pub fn simulated(value: ValueFunction, env: &'a EpisodicEnv, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(RalpError::invalid("lookahead needs at least one sample"));
        }
        Ok(Self { value, model: Lookahead::Simulated { env, samples } })
    }

    /// `r(s,a) + γ·E[v(s')]` for every action.
    pub fn action_values(&self, state: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
        match &self.model {
            Lookahead::Tabular { mdp, values } => {
                let s = mdp.state_index(state)?;
                Ok((0..mdp.num_actions())
                    .map(|a| {
                        let p = mdp.transition(a);
                        let ev: f64 = values.iter().enumerate().map(|(z, v)| p[(s, z)] * v).sum();
                        mdp.reward(a)[s] + mdp.discount() * ev
                    })
                    .collect())
            }
            Lookahead::Simulated { env, samples } => (0..env.num_actions())
                .map(|a| {
                    let mut total = 0.0;
                    for _ in 0..*samples {
                        let (r, next) = env.step(state, a, rng);
                        total += r + env.discount() * next.value(&self.value)?;
                    }
                    Ok(total / *samples as f64)
                })
                .collect(),
        }
    }

    pub fn greedy_action(&self, state: &[f64], rng: &mut impl Rng) -> Result<usize> {
        Ok(argmax_lowest(&self.action_values(state, rng)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalReason {
    /// The episode reached a terminal state.
    Terminal,
    /// The step cap was reached first.
    Cap,
}

impl TerminalReason {
    pub fn label(self) -> &'static str {
        match self {
            TerminalReason::Terminal => "terminal",
            TerminalReason::Cap => "cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunResult {
    pub run_id: usize,
    /// Transitions completed without reaching a terminal state.
    pub steps: usize,
    pub reason: TerminalReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStats {
    pub runs: Vec<RunResult>,
    pub mean: f64,
    pub median: f64,
}

impl RolloutStats {
    /// `run_id,steps,terminal_reason` lines under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run_id,steps,terminal_reason\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{}", r.run_id, r.steps, r.reason.label());
        }
        out
    }
}

/// Runs the greedy controller `runs` times from the environment's start
/// distribution, each run with a generator derived from `(seed, run)`.
pub fn rollout_evaluate(
    env: &EpisodicEnv,
    policy: &GreedyPolicy<'_>,
    max_steps: usize,
    runs: usize,
    seed: u64,
) -> Result<RolloutStats> {
    if max_steps == 0 || runs == 0 {
        return Err(RalpError::invalid("rollouts need at least one run and one step"));
    }
    let results: Vec<RunResult> = (0..runs)
        .into_par_iter()
        .map(|run_id| {
            let mut rng = derived_rng(seed, run_id as u64);
            let mut state = env.initial_state(&mut rng);
            for t in 0..max_steps {
                let a = policy.greedy_action(&state, &mut rng)?;
                match env.step(&state, a, &mut rng).1 {
                    NextState::State(s) => state = s,
                    NextState::Terminal => return Ok(RunResult { run_id, steps: t, reason: TerminalReason::Terminal }),
                }
            }
            Ok(RunResult { run_id, steps: max_steps, reason: TerminalReason::Cap })
        })
        .collect::<Result<_>>()?;
    let mut steps: Vec<f64> = results.iter().map(|r| r.steps as f64).collect();
    let mean = steps.iter().sum::<f64>() / steps.len() as f64;
    steps.sort_by(f64::total_cmp);
    let mid = steps.len() / 2;
    let median = if steps.len() % 2 == 1 { steps[mid] } else { 0.5 * (steps[mid - 1] + steps[mid]) };
    Ok(RolloutStats { runs: results, mean, median })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{chain_mdp, pendulum_env, ChainConfig};
    use crate::mdp::value_iteration;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ties_go_to_lowest_action() {
        assert_eq!(argmax_lowest(&[1.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[3.0, 3.0, 1.0]), 0);
        assert_eq!(argmax_lowest(&[5.0]), 0);
    }

    #[test]
    fn optimal_values_give_optimal_policy() {
        let mdp = chain_mdp(&ChainConfig { two_actions: true, ..ChainConfig::default() }).unwrap();
        let vi = value_iteration(&mdp, 1e-12).unwrap();
        let expected = mdp.greedy_policy(&vi.values).unwrap();
        let policy = GreedyPolicy::tabular(ValueFunction::Tabular(vi.values), &mdp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in 0..mdp.num_states() {
            assert_eq!(policy.greedy_action(&TabularMdp::state_vector(s), &mut rng).unwrap(), expected[s]);
        }
    }

    #[test]
    fn rollouts_respect_the_cap_and_repeat() {
        let env = pendulum_env();
        let constant = ValueFunction::linear(
            std::sync::Arc::new(crate::features::FeatureBasis::new(vec![crate::features::FeatureSpec::Constant]).unwrap()),
            vec![0.0],
        )
        .unwrap();
        let policy = GreedyPolicy::simulated(constant, &env, 2).unwrap();
        let a = rollout_evaluate(&env, &policy, 25, 6, 4).unwrap();
        assert!(a.runs.iter().all(|r| r.steps <= 25));
        assert_eq!(a, rollout_evaluate(&env, &policy, 25, 6, 4).unwrap());
        assert!(a.to_csv().starts_with("run_id,steps,terminal_reason\n"));
    }
}
