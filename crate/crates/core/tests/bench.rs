use ralp::bench::mountain_car::hinge_grid;
use ralp::bench::pendulum::kernel_basis;
use ralp::bench::{chain_mdp, chain_samples, collect_samples, mountain_car_env, pendulum_env, uniform_samples, ChainConfig};
use ralp::features::FeatureSpec;
use ralp::samples::{NextState, SampleKind};

#[test]
fn chain_samples_cover_every_fourth_state() {
    let cfg = ChainConfig::default();
    let mdp = chain_mdp(&cfg).unwrap();
    let s = chain_samples(&mdp, &cfg, SampleKind::Simple, 3).unwrap();
    let sources: Vec<f64> = s.source_states().into_iter().map(|v| v[0]).collect();
    assert_eq!(sources.len(), 50);
    assert_eq!(sources, (1..=50).map(|i| 4.0 * i as f64).collect::<Vec<_>>());
    assert_ne!(s, chain_samples(&mdp, &cfg, SampleKind::Simple, 4).unwrap());
}

#[test]
fn pendulum_episodes_are_reproducible_and_bounded() {
    let env = pendulum_env();
    let a = collect_samples(&env, 50, true, 11).unwrap();
    assert_eq!(a, collect_samples(&env, 50, true, 11).unwrap());
    assert!(a.len() <= 50 * env.max_steps() * env.num_actions());
    assert!(a.len() >= 50 * env.num_actions());
    assert!(a.records().iter().any(|r| r.successors.weighted().iter().any(|(n, _)| matches!(n, NextState::Terminal))));
    assert_ne!(a, collect_samples(&env, 50, true, 12).unwrap());
}

#[test]
fn uniform_samples_stay_inside_the_box() {
    let env = mountain_car_env();
    let s = uniform_samples(&env, 301, 5).unwrap();
    assert_eq!(s.len(), 301);
    let bounds = env.bounds();
    for r in s.records() {
        for (x, (lo, hi)) in r.state.iter().zip(&bounds) {
            assert!(lo <= x && x <= hi);
        }
    }
}

#[test]
fn hinge_grid_spans_each_dimension() {
    let env = mountain_car_env();
    let basis = hinge_grid(&env, 100).unwrap();
    assert_eq!(basis.len(), 201);
    assert_eq!(basis.specs()[0], FeatureSpec::Constant);
    for (d, (lo, hi)) in env.bounds().into_iter().enumerate() {
        let centers: Vec<f64> = basis
            .specs()
            .iter()
            .filter_map(|f| match f {
                FeatureSpec::PiecewiseLinear { dim, center } if *dim == d => Some(*center),
                _ => None,
            })
            .collect();
        assert_eq!(centers.len(), 100);
        assert!(centers.iter().all(|c| (lo..=hi).contains(c)));
        assert!(centers.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn kernel_basis_is_seeded() {
    let env = pendulum_env();
    let states: Vec<Vec<f64>> = (0..40).map(|i| vec![0.01 * i as f64, -0.02 * i as f64]).collect();
    let a = kernel_basis(&states, 10, &[0.5, 1.0], 3, &[1.0, 1.0], 2).unwrap();
    assert_eq!(a.len(), 1 + 10 * 3);
    assert_eq!(a, kernel_basis(&states, 10, &[0.5, 1.0], 3, &[1.0, 1.0], 2).unwrap());
    assert_eq!(env.state_dim(), 2);
}
