//! The chain benchmark: states `1..=N`, each step drifts one state to the
//! right with discretized Gaussian noise, a reward at the right end and a
//! penalty part-way along.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{read_file, RalpError, Result};
use crate::features::FeatureBasis;
use std::sync::Arc;

use crate::bounds::{cover_radius, estimation_slope, online_bound, reward_lipschitz, select_psi, transition_lipschitz, ErrorModel};
use crate::homotopy::{trace_path, HomotopyPath};
use crate::lp::{to_standard_form, RalpProblem};
use crate::mdp::TabularMdp;
use crate::samples::{NextState, SampleKind, SampleRecord, SampleSet};
use crate::value::weighted_l1_error;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub num_states: usize,
    pub noise_std: f64,
    pub reward_right: f64,
    pub reward_penalty: f64,
    /// 1-based label of the penalized state.
    pub penalty_state: usize,
    pub gamma: f64,
    pub sample_stride: usize,
    /// Adds a second action drifting left.
    pub two_actions: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::parse(include_str!("../../configs/chain.toml")).expect("bundled chain config is valid")
    }
}

impl ChainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| RalpError::parse("chain config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states < 2 {
            return Err(RalpError::invalid("chain needs at least two states"));
        }
        if !(self.noise_std > 0.0) {
            return Err(RalpError::invalid("chain noise must be positive"));
        }
        if !(1..=self.num_states).contains(&self.penalty_state) {
            return Err(RalpError::invalid("penalty state is outside the chain"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(RalpError::invalid(format!("discount {} is not in [0, 1)", self.gamma)));
        }
        if self.sample_stride == 0 || !self.num_states.is_multiple_of(self.sample_stride) {
            return Err(RalpError::invalid("sample stride must divide the number of states"));
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        if self.two_actions {
            2
        } else {
            1
        }
    }

    /// 0-based indices of the sampled states: every `stride`-th label.
    pub fn sampled_states(&self) -> Vec<usize> {
        (1..=self.num_states / self.sample_stride).map(|k| k * self.sample_stride - 1).collect()
    }
}

/// Probability of landing in each unit bin `[z − ½, z + ½]`, `z = 1..=n`,
/// truncated to the chain and renormalized.
fn gaussian_row(n: usize, mean: f64, normal: &Normal) -> Vec<f64> {
    let mut row: Vec<f64> = (1..=n)
        .map(|z| normal.cdf(z as f64 + 0.5 - mean) - normal.cdf(z as f64 - 0.5 - mean))
        .collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    row
}

pub fn chain_mdp(cfg: &ChainConfig) -> Result<TabularMdp> {
    cfg.validate()?;
    let n = cfg.num_states;
    let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| RalpError::invalid(e.to_string()))?;
    let drifts: &[f64] = if cfg.two_actions { &[1.0, -1.0] } else { &[1.0] };
    let transitions = drifts
        .iter()
        .map(|d| {
            let mut p = DMatrix::zeros(n, n);
            for s in 0..n {
                let row = gaussian_row(n, (s + 1) as f64 + d, &normal);
                for (z, v) in row.into_iter().enumerate() {
                    p[(s, z)] = v;
                }
            }
            p
        })
        .collect();
    let mut reward = vec![0.0; n];
    reward[n - 1] = cfg.reward_right;
    reward[cfg.penalty_state - 1] = cfg.reward_penalty;
    TabularMdp::new(transitions, vec![reward; drifts.len()], cfg.gamma)
}

/// Samples at every `stride`-th state for every action. `Simple` draws one
/// successor per record from `seed`; `Expectation` records the exact
/// successor distribution.
pub fn chain_samples(mdp: &TabularMdp, cfg: &ChainConfig, kind: SampleKind, seed: u64) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mdp.num_states();
    let mut records = Vec::new();
    for s in cfg.sampled_states() {
        for a in 0..mdp.num_actions() {
            let p = mdp.transition(a);
            let state = TabularMdp::state_vector(s);
            let reward = mdp.reward(a)[s];
            records.push(match kind {
                SampleKind::Simple => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut next = n - 1;
                    for z in 0..n {
                        acc += p[(s, z)];
                        if u < acc {
                            next = z;
                            break;
                        }
                    }
                    SampleRecord::simple(state, a, reward, vec![NextState::State(TabularMdp::state_vector(next))])
                }
                SampleKind::Expectation => {
                    let dist = (0..n)
                        .filter(|&z| p[(s, z)] > 0.0)
                        .map(|z| (NextState::State(TabularMdp::state_vector(z)), p[(s, z)]))
                        .collect();
                    SampleRecord::expectation(state, a, reward, dist)
                }
            });
        }
    }
    SampleSet::new(kind, records)
}

/// Constant feature plus `k` hinges `max(s − c, 0)` with centers evenly
/// spaced from 1: `c_j = 1 + j·N/k`.
pub fn chain_basis(num_states: usize, k: usize) -> Result<FeatureBasis> {
    if k == 0 || k > num_states {
        return Err(RalpError::invalid(format!("feature count must be in 1..={num_states}, got {k}")));
    }
    Ok(FeatureBasis::piecewise_linear((0..k).map(|j| 1.0 + (j * num_states) as f64 / k as f64)))
}

/// The exact piecewise-linear curve `ψ ↦ Σ ρ(s)|φ(s)ᵀw(ψ) − v*(s)|` along a
/// path, as `(ψ, error)` points at every breakpoint and every zero crossing.
/// `phi` has one row per state.
pub fn error_profile(path: &HomotopyPath, phi: &DMatrix<f64>, v_star: &[f64], rho: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = phi.nrows();
    if v_star.len() != n || rho.len() != n {
        return Err(RalpError::dim("state vectors of the error profile", n, v_star.len().min(rho.len())));
    }
    let values: Vec<Vec<f64>> = path
        .vertices
        .iter()
        .map(|v| {
            let w = path.recompose(&v.x)?;
            Ok((0..n).map(|s| (0..w.len()).map(|j| phi[(s, j)] * w[j]).sum()).collect())
        })
        .collect::<Result<_>>()?;
    let err = |v0: &[f64], v1: &[f64], t: f64| -> f64 {
        (0..n).map(|s| rho[s] * (v0[s] + t * (v1[s] - v0[s]) - v_star[s]).abs()).sum()
    };
    let mut out = vec![(path.vertices[0].psi, err(&values[0], &values[0], 0.0))];
    for k in 1..values.len() {
        let (v0, v1) = (&values[k - 1], &values[k]);
        let (p0, p1) = (path.vertices[k - 1].psi, path.vertices[k].psi);
        let mut ts: Vec<f64> = (0..n)
            .filter_map(|s| {
                let d = v1[s] - v0[s];
                let t = (v_star[s] - v0[s]) / d;
                (d != 0.0 && t > 0.0 && t < 1.0).then_some(t)
            })
            .collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts.push(1.0);
        for t in ts {
            out.push((p0 + t * (p1 - p0), err(v0, v1, t)));
        }
    }
    Ok(out)
}

/// Budget standing in for the unregularized program.
pub const UNREGULARIZED_PSI: f64 = 1e3;

/// One sampled chain instance solved along the whole path.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub path: HomotopyPath,
    /// True error under uniform weights on all states, see [`error_profile`].
    pub profile: Vec<(f64, f64)>,
    pub psi_star: f64,
    pub error_at_star: f64,
    /// True error at `UNREGULARIZED_PSI`.
    pub error_unregularized: f64,
    /// Smallest `bound − error` over all breakpoints, both measured with
    /// uniform weights on the sampled states.
    pub bound_margin: f64,
}

impl ChainRun {
    pub fn error_at_zero(&self) -> f64 {
        self.profile[0].1
    }

    pub fn error_at_end(&self) -> f64 {
        self.profile[self.profile.len() - 1].1
    }

    pub fn best_error(&self) -> f64 {
        self.profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }
}

/// Error model for the chain with every constant computed from the model:
/// cover radius of the sampled states, reward and transition Lipschitz
/// constants, unit hinge slopes and the exact estimation slope.
pub fn chain_error_model(mdp: &TabularMdp, cfg: &ChainConfig, samples: &SampleSet, basis: &FeatureBasis) -> Result<ErrorModel> {
    let states: Vec<Vec<f64>> = (0..mdp.num_states()).map(TabularMdp::state_vector).collect();
    let sampled: Vec<Vec<f64>> = cfg.sampled_states().into_iter().map(TabularMdp::state_vector).collect();
    let c = cover_radius(&states, &sampled)?;
    ErrorModel::new(c, reward_lipschitz(mdp), transition_lipschitz(mdp), 1.0, mdp.discount())?
        .with_eps_s_slope(estimation_slope(mdp, samples, basis)?)
}

/// Estimated RALP on `seed`'s samples with `k` hinges, traced up to
/// `UNREGULARIZED_PSI`; `ψ*` chosen with `select`.
pub fn run_chain(mdp: &TabularMdp, cfg: &ChainConfig, v_star: &[f64], k: usize, seed: u64, select: &ErrorModel) -> Result<ChainRun> {
    let n = mdp.num_states();
    let basis = Arc::new(chain_basis(n, k)?);
    let samples = chain_samples(mdp, cfg, SampleKind::Simple, seed)?;
    let problem = RalpProblem::from_samples(&samples, basis.clone(), 0.0, mdp.discount())?;
    let lp = to_standard_form(&problem);
    let path = trace_path(&lp, UNREGULARIZED_PSI)?;

    let states: Vec<Vec<f64>> = (0..n).map(TabularMdp::state_vector).collect();
    let phi = basis.materialize(&states)?;
    let rho = vec![1.0 / n as f64; n];
    let profile = error_profile(&path, &phi, v_star, &rho)?;
    let error_at = |psi: f64| -> Result<f64> {
        let w = path.weights_at(psi)?;
        let v: Vec<f64> = (0..n).map(|s| (0..w.len()).map(|j| phi[(s, j)] * w[j]).sum()).collect();
        weighted_l1_error(&v, v_star, &rho)
    };
    let psi_star = select_psi(&path, select)?.psi_star;

    let exact = chain_error_model(mdp, cfg, &samples, &basis)?;
    let sampled = cfg.sampled_states();
    let rho_bar = vec![1.0 / sampled.len() as f64; sampled.len()];
    let v_star_bar: Vec<f64> = sampled.iter().map(|&s| v_star[s]).collect();
    let rho_bar_v_star: f64 = rho_bar.iter().zip(&v_star_bar).map(|(r, v)| r * v).sum();
    let mut bound_margin = f64::INFINITY;
    for vert in &path.vertices {
        let w = path.recompose(&vert.x)?;
        let v: Vec<f64> = sampled.iter().map(|&s| (0..w.len()).map(|j| phi[(s, j)] * w[j]).sum()).collect();
        let err = weighted_l1_error(&v, &v_star_bar, &rho_bar)?;
        let bound = online_bound(vert.objective, rho_bar_v_star, &exact, vert.psi);
        bound_margin = bound_margin.min(bound - err);
    }

    Ok(ChainRun {
        error_at_star: error_at(psi_star)?,
        error_unregularized: error_at(UNREGULARIZED_PSI)?,
        path,
        profile,
        psi_star,
        bound_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::value_iteration;

    #[test]
    fn rows_are_stochastic() {
        let mdp = chain_mdp(&ChainConfig::default()).unwrap();
        for s in 0..200 {
            let sum: f64 = mdp.transition(0).row(s).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        let two = chain_mdp(&ChainConfig { two_actions: true, ..ChainConfig::default() }).unwrap();
        assert_eq!(two.num_actions(), 2);
    }

    #[test]
    fn rewards_have_two_nonzeros() {
        let mdp = chain_mdp(&ChainConfig::default()).unwrap();
        let nz: Vec<(usize, f64)> = mdp.reward(0).iter().copied().enumerate().filter(|(_, r)| *r != 0.0).collect();
        assert_eq!(nz, vec![(19, -3.0), (199, 1.0)]);
    }

    #[test]
    fn optimal_values_are_bounded() {
        let mdp = chain_mdp(&ChainConfig::default()).unwrap();
        let vi = value_iteration(&mdp, 1e-10).unwrap();
        assert!(vi.values.iter().all(|v| v.is_finite() && *v <= 1.0 / (1.0 - 0.9)));
    }

    #[test]
    fn stride_sampling_has_fifty_states() {
        let cfg = ChainConfig::default();
        let mdp = chain_mdp(&cfg).unwrap();
        let s = chain_samples(&mdp, &cfg, SampleKind::Simple, 7).unwrap();
        assert_eq!(s.source_states().len(), 50);
        assert_eq!(s, chain_samples(&mdp, &cfg, SampleKind::Simple, 7).unwrap());
        assert_eq!(chain_samples(&mdp, &cfg, SampleKind::Expectation, 0).unwrap().len(), 50);
    }

    #[test]
    fn basis_centers() {
        let b = chain_basis(200, 50).unwrap();
        assert_eq!(b.len(), 51);
        assert_eq!(b.evaluate(&[9.0]).unwrap()[3], 0.0);
        assert_eq!(b.evaluate(&[9.0]).unwrap()[2], 4.0);
        assert!(chain_basis(200, 0).is_err());
    }
}
