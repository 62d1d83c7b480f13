//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ralp::bench::chain::{run_chain, ChainRun};
use ralp::bench::mountain_car::hinge_ralp;
use ralp::bench::pendulum::{train_kernel_ralp, KernelSetup};
use ralp::bench::{chain_basis, chain_mdp, chain_samples, mountain_car_env, pendulum_env, ChainConfig};
use ralp::bounds::ErrorModel;
use ralp::features::{FeatureBasis, FeatureSpec};
use ralp::homotopy::{trace_path, HomotopyPath, Terminal};
use ralp::lp::{to_standard_form, RalpProblem, StandardLP};
use ralp::mdp::{value_iteration, TabularMdp};
use ralp::policy::{rollout_evaluate, GreedyPolicy, DEFAULT_LOOKAHEAD};
use ralp::samples::SampleKind;
use ralp::simplex::solve_lp;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_mdp(rng: &mut ChaCha8Rng, states: usize, actions: usize, discount: f64) -> TabularMdp {
    let transitions = (0..actions)
        .map(|_| {
            let mut p = DMatrix::from_fn(states, states, |_, _| if rng.random::<f64>() < 0.5 { rng.random::<f64>() } else { 0.0 });
            for mut row in p.row_iter_mut() {
                let j = rng.random_range(0..states);
                row[j] += 0.1;
                let s = row.sum();
                row /= s;
            }
            p
        })
        .collect();
    let rewards = (0..actions).map(|_| (0..states).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    TabularMdp::new(transitions, rewards, discount).unwrap()
}

/// Full RALP of a random MDP with at most `max_vars` variables and `max_rows` rows.
fn random_instance(seed: u64, max_vars: usize, max_rows: usize) -> (StandardLP, TabularMdp) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions = rng.random_range(1..3);
    let states = rng.random_range(2..=(max_rows / actions).min(15));
    let discount = rng.random_range(0.5..0.95);
    let mdp = random_mdp(&mut rng, states, actions, discount);
    let mut specs = vec![FeatureSpec::Constant];
    for _ in 0..rng.random_range(1..max_vars / 2) {
        specs.push(FeatureSpec::Gaussian {
            center: vec![rng.random_range(1.0..states as f64)],
            sigma: rng.random_range(0.5..3.0),
        });
    }
    let basis = Arc::new(FeatureBasis::new(specs).unwrap());
    (to_standard_form(&RalpProblem::full(&mdp, basis, 0.0).unwrap()), mdp)
}

fn end_of(path: &HomotopyPath, psi_max: f64) -> f64 {
    match path.terminal {
        Terminal::ReachedPsiMax { .. } => psi_max,
        _ => path.last_psi(),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for seed in 0..100 {
        let (lp, _) = random_instance(seed, 10, 30);
        assert!(lp.num_vars() <= 10 && lp.num_rows() <= 30);
        let psi_max = 50.0;
        let path = match trace_path(&lp, psi_max) {
            Ok(p) => p,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let end = end_of(&path, psi_max);
        for k in 0..10 {
            let psi = end * (k as f64 + 0.5) / 10.0;
            let oracle = solve_lp(&lp.with_psi(psi).unwrap()).unwrap().objective;
            let got = path.objective_at(psi).unwrap();
            worst = worst.max((got - oracle).abs() / oracle.abs().max(1.0));
        }
    }
    let suite = start.elapsed();

    let env = mountain_car_env();
    let lp = hinge_ralp(&env, 1000, 100, 0).unwrap();
    let psi_max = 100.0;
    let t = Instant::now();
    let path = trace_path(&lp, psi_max).unwrap();
    let trace = t.elapsed();
    let t = Instant::now();
    let mut agree = 0.0f64;
    for k in 1..=10 {
        let psi = psi_max * k as f64 / 10.0;
        let s = solve_lp(&lp.with_psi(psi).unwrap()).unwrap();
        agree = agree.max((s.objective - path.objective_at(psi).unwrap()).abs() / s.objective.abs().max(1.0));
    }
    let solves = t.elapsed();
    let pass = failures == 0 && worst <= 1e-6 && suite < Duration::from_secs(30) && trace < solves && agree <= 1e-6;
    outcome(
        pass,
        format!(
            "100 instances, max rel diff {worst:.1e}, {failures} trace failures, {:.2}s; mountain car {} features: path {:.3}s vs 10 solves {:.3}s (rel diff {agree:.1e})",
            suite.as_secs_f64(),
            lp.num_vars() / 2,
            trace.as_secs_f64(),
            solves.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let cfg = ChainConfig::default();
    let mdp = chain_mdp(&cfg).unwrap();
    let mut cases = Vec::new();
    for seed in 0..5 {
        let samples = chain_samples(&mdp, &cfg, SampleKind::Simple, seed).unwrap();
        let basis = Arc::new(chain_basis(200, 50).unwrap());
        let problem = RalpProblem::from_samples(&samples, basis, 0.0, cfg.gamma).unwrap();
        cases.push((to_standard_form(&problem), samples.max_reward().unwrap(), cfg.gamma));
    }
    for seed in 0..50 {
        let (lp, mdp) = random_instance(1000 + seed, 10, 30);
        let rmax = (0..mdp.num_actions()).flat_map(|a| mdp.reward(a).to_vec()).fold(f64::NEG_INFINITY, f64::max);
        cases.push((lp, rmax, mdp.discount()));
    }
    for (lp, rmax, gamma) in &cases {
        let theta0 = trace_path(lp, 1.0).unwrap().vertices[0].objective;
        let expected = rmax / (1.0 - gamma);
        worst = worst.max((theta0 - expected).abs() / expected.abs().max(1.0));
    }
    outcome(worst <= 1e-12, format!("{} fixtures, max rel diff {worst:.1e}", cases.len()))
}

struct ChainRuns {
    k50: Vec<ChainRun>,
    k200: Vec<ChainRun>,
    elapsed: Duration,
}

fn chain_runs() -> ChainRuns {
    let t = Instant::now();
    let cfg = ChainConfig::default();
    let mdp = chain_mdp(&cfg).unwrap();
    let v_star = value_iteration(&mdp, 1e-12).unwrap().values;
    let select = ErrorModel::with_sampling_slope(cfg.gamma, 0.05).unwrap();
    let runs = |k| (0..20).map(|seed| run_chain(&mdp, &cfg, &v_star, k, seed, &select).unwrap()).collect();
    let k50 = runs(50);
    let k200 = runs(200);
    ChainRuns { k50, k200, elapsed: t.elapsed() }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_3(c: &ChainRuns) -> Outcome {
    let zero = mean(c.k50.iter().map(ChainRun::error_at_zero));
    let end = mean(c.k50.iter().map(ChainRun::error_at_end));
    let best = mean(c.k50.iter().map(ChainRun::best_error));
    let pass = best <= 0.95 * zero && best <= 0.95 * end && c.elapsed < Duration::from_secs(120);
    outcome(pass, format!("mean error ψ=0 {zero:.3}, interior min {best:.3}, terminus {end:.3} (20 seeds, 50 features)"))
}

fn criterion_4(c: &ChainRuns) -> Outcome {
    let hits = c.k50.iter().filter(|r| r.error_at_star <= 1.25 * r.best_error()).count();
    let ratios: Vec<String> = c.k50.iter().map(|r| format!("{:.2}", r.error_at_star / r.best_error())).collect();
    outcome(hits >= 18, format!("{hits}/20 seeds within 1.25x of the best error; ratios [{}]", ratios.join(" ")))
}

fn criterion_5(c: &ChainRuns) -> Outcome {
    let star50 = mean(c.k50.iter().map(|r| r.error_at_star));
    let star200 = mean(c.k200.iter().map(|r| r.error_at_star));
    let alp50 = mean(c.k50.iter().map(|r| r.error_unregularized));
    let alp200 = mean(c.k200.iter().map(|r| r.error_unregularized));
    let pass = star200 <= 1.2 * star50 && alp200 > alp50 && c.elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!("RALP(ψ*) {star50:.3} -> {star200:.3}; ALP(ψ=1e3) {alp50:.3} -> {alp200:.3} (50 -> 200 features, {:.1}s)", c.elapsed.as_secs_f64()),
    )
}

fn criterion_6(c: &ChainRuns) -> Outcome {
    let all: Vec<&ChainRun> = c.k50.iter().chain(&c.k200).collect();
    let valid = all.iter().filter(|r| r.bound_margin >= 0.0).count();
    let margin = all.iter().map(|r| r.bound_margin).fold(f64::INFINITY, f64::min);
    outcome(valid == all.len(), format!("{valid}/{} runs bounded at every breakpoint, smallest margin {margin:.3}", all.len()))
}

/// Nonincreasing and convex on breakpoint values, with the segment duals
/// (θ' = −λ) nonnegative and nonincreasing. Values rather than differenced
/// slopes, which are noise on segments a few ulps wide.
fn shaped_well(p: &HomotopyPath) -> bool {
    let (psi, theta) = (p.breakpoints(), p.vertices.iter().map(|v| v.objective).collect::<Vec<_>>());
    let tol = |x: f64| 1e-9 * (1.0 + x.abs());
    let falling = theta.windows(2).all(|w| w[1] <= w[0] + tol(w[0]));
    let convex = (1..psi.len().saturating_sub(1)).all(|k| {
        let t = (psi[k] - psi[k - 1]) / (psi[k + 1] - psi[k - 1]);
        theta[k] <= theta[k - 1] + t * (theta[k + 1] - theta[k - 1]) + tol(theta[k])
    });
    let duals = p.segments.iter().all(|g| g.lambda >= -1e-9)
        && p.segments.windows(2).all(|w| w[1].lambda <= w[0].lambda + 1e-7 * (1.0 + w[0].lambda));
    falling && convex && duals
}

fn criterion_7(c: &ChainRuns) -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut shift_err = 0.0f64;
    let mut upper_ok = 0;
    for _ in 0..100 {
        let states = rng.random_range(1..12);
        let gamma = rng.random_range(0.1..0.95);
        let actions = rng.random_range(1..4);
        let mdp = random_mdp(&mut rng, states, actions, gamma);
        let v: Vec<f64> = (0..states).map(|_| rng.random_range(-10.0..10.0)).collect();
        let shift = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        for (a, b) in mdp.bellman(&shifted).unwrap().iter().zip(mdp.bellman(&v).unwrap()) {
            shift_err = shift_err.max((a - (b + gamma * shift)).abs() / a.abs().max(1.0));
        }
        let v_star = value_iteration(&mdp, 1e-12).unwrap().values;
        let u: Vec<f64> = v_star.iter().map(|x| x + rng.random_range(-1.0..2.0)).collect();
        let eps = mdp.bellman(&u).unwrap().iter().zip(&u).map(|(l, x)| l - x).fold(0.0, f64::max);
        if u.iter().zip(&v_star).all(|(x, s)| *x >= s - eps / (1.0 - gamma) - 1e-9) {
            upper_ok += 1;
        }
    }
    let mut paths: Vec<&HomotopyPath> = c.k50.iter().chain(&c.k200).map(|r| &r.path).collect();
    let extra: Vec<HomotopyPath> = (0..100).map(|s| trace_path(&random_instance(2000 + s, 10, 30).0, 50.0).unwrap()).collect();
    paths.extend(extra.iter());
    let shaped = paths.iter().filter(|p| shaped_well(p)).count();
    let elapsed = t.elapsed();
    let pass = shift_err <= 1e-12 && upper_ok == 100 && shaped == paths.len() && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "shift identity max rel err {shift_err:.1e}; upper bound {upper_ok}/100; {shaped}/{} paths nonincreasing and convex; {:.2}s",
            paths.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let env = pendulum_env();
    let trained = train_kernel_ralp(&env, &KernelSetup::default(), 0).unwrap();
    let policy = GreedyPolicy::simulated(trained.value.clone(), &env, DEFAULT_LOOKAHEAD).unwrap();
    let stats = rollout_evaluate(&env, &policy, env.max_steps(), 20, 1).unwrap();
    let elapsed = t.elapsed();
    let pass = stats.median >= 1000.0 && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "median {} steps (mean {:.0}, cap {}), {} samples, {} nonzero weights, {:.1}s",
            stats.median,
            stats.mean,
            env.max_steps(),
            trained.samples.len(),
            trained.nonzero,
            elapsed.as_secs_f64()
        ),
    )
}

fn main() {
    let mut results = vec![(1, criterion_1()), (2, criterion_2())];
    let chain = chain_runs();
    results.push((3, criterion_3(&chain)));
    results.push((4, criterion_4(&chain)));
    results.push((5, criterion_5(&chain)));
    results.push((6, criterion_6(&chain)));
    results.push((7, criterion_7(&chain)));
    results.push((8, criterion_8()));
    let mut failed = 0;
    for (n, o) in &results {
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
}
