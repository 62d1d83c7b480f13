use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ralp::bench::chain::run_chain;
use ralp::bench::mountain_car::hinge_grid;
use ralp::bench::pendulum::{train_kernel_ralp, KernelSetup};
use ralp::bench::{
    chain_basis, chain_mdp, chain_samples, collect_samples, mountain_car_env, pendulum_env, uniform_samples,
    ChainConfig, EnvKind, EpisodicEnv,
};
use ralp::bounds::{best_approximation_error, BoundReport, ErrorModel};
use ralp::features::FeatureBasis;
use ralp::homotopy::{trace_path, trace_path_with, HomotopyOptions, HomotopyPath, Terminal};
use ralp::lp::{assemble_ralp, to_standard_form, AlpMode, RalpProblem, StandardLP};
use ralp::mdp::{value_iteration, TabularMdp};
use ralp::policy::{rollout_evaluate, GreedyPolicy};
use ralp::samples::{SampleKind, SampleSet};
use ralp::simplex::{solve_lp, LpStatus};

use crate::failure::Failure;
use crate::output::{svg_beside, write_svg, write_with_header};
use crate::plot::{line_plot, Series};
use crate::{ChainBench, Mode, MountainCarBench, PathArgs, PendulumBench, ProblemArgs, SelectArgs, SolveArgs, Solver};

struct Loaded {
    lp: StandardLP,
    problem: Option<RalpProblem>,
    chain: Option<TabularMdp>,
}

fn check_budget(name: &str, v: f64) -> Result<(), Failure> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Failure::Input(format!("{name} must be a finite nonnegative number, got {v}")))
    }
}

fn chain_config(path: Option<&Path>) -> Result<ChainConfig, Failure> {
    Ok(match path {
        Some(p) => ChainConfig::from_file(p)?,
        None => ChainConfig::default(),
    })
}

/// One nonnegative number per line, scaled to sum to 1.
fn read_weights(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut w = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Failure::Input(format!("{} line {}: bad weight {line:?}", path.display(), i + 1)))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Failure::Input(format!("{} line {}: weights must be nonnegative", path.display(), i + 1)));
        }
        w.push(v);
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Failure::Input(format!("{}: weights sum to zero", path.display())));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

fn load(p: &ProblemArgs, psi: f64) -> Result<Loaded, Failure> {
    if let Some(path) = &p.lp {
        let lp = StandardLP::from_file(path)?.with_psi(psi)?;
        return Ok(Loaded { lp, problem: None, chain: None });
    }
    let basis_path = p.basis.as_deref().ok_or_else(|| Failure::Input("--basis is required unless --lp is given".into()))?;
    let basis = Arc::new(FeatureBasis::from_config_file(basis_path)?);
    let chain = if p.chain || p.chain_config.is_some() || p.mode == Mode::Full {
        Some(chain_mdp(&chain_config(p.chain_config.as_deref())?)?)
    } else {
        None
    };
    let samples = p.samples.as_deref().map(SampleSet::from_file).transpose()?;
    if p.mode != Mode::Full && samples.is_none() {
        return Err(Failure::Input("--samples is required in the sampled and estimated modes".into()));
    }
    let mode = match p.mode {
        Mode::Full => AlpMode::Full,
        Mode::Sampled => AlpMode::Sampled,
        Mode::Estimated => AlpMode::Estimated,
    };
    let mut problem = assemble_ralp(mode, samples.as_ref(), chain.as_ref(), basis, psi, p.gamma)?;
    if let Some(w) = &p.weights {
        problem = problem.with_state_weights(read_weights(w)?)?;
    }
    Ok(Loaded { lp: to_standard_form(&problem), problem: Some(problem), chain })
}

fn terminal_label(path: &HomotopyPath) -> String {
    match path.terminal {
        Terminal::BudgetInactive { psi_bar } => format!("budget_inactive at {psi_bar:?}"),
        Terminal::ReachedPsiMax { psi_max } => format!("reached_psi_max {psi_max:?}"),
    }
}

fn theta_series(path: &HomotopyPath) -> Vec<(f64, f64)> {
    path.vertices.iter().map(|v| (v.psi, v.objective)).collect()
}

pub fn solve(a: &SolveArgs) -> Result<(), Failure> {
    check_budget("--psi", a.psi)?;
    let loaded = load(&a.problem, a.psi)?;
    let lp = &loaded.lp;
    let (x, objective) = match a.solver {
        Solver::Homotopy => {
            let path = trace_path_with(lp, &HomotopyOptions::new(a.psi))?;
            (path.solution_at(a.psi)?, path.objective_at(a.psi)?)
        }
        Solver::Simplex => {
            let sol = solve_lp(lp)?;
            if sol.status != LpStatus::Optimal {
                return Err(Failure::Solver(format!("simplex ended with status {:?} after {} pivots", sol.status, sol.pivots.len())));
            }
            (sol.x, sol.objective)
        }
    };
    // Without a split map the variables themselves are reported.
    let w = lp.recompose(&x).unwrap_or_else(|_| x.clone());
    let margin = match &loaded.problem {
        Some(p) => p.min_slack(&w),
        None => lp.slacks(&x).into_iter().fold(f64::INFINITY, f64::min),
    };
    let nnz = w.iter().filter(|x| **x != 0.0).count();
    let mut body = String::new();
    let _ = writeln!(body, "solver = {}", if a.solver == Solver::Homotopy { "homotopy" } else { "simplex" });
    let _ = writeln!(body, "psi = {:?}", a.psi);
    let _ = writeln!(body, "objective = {objective:?}");
    let _ = writeln!(body, "feasibility_margin = {margin:?}");
    let _ = writeln!(body, "nnz = {nnz}");
    body.push_str("\nfeature,weight\n");
    for (i, x) in w.iter().enumerate() {
        let _ = writeln!(body, "{i},{x:?}");
    }
    write_with_header(&a.out, &body)?;
    println!("objective {objective:?}, {nnz} nonzero weights, margin {margin:.3e}");
    Ok(())
}

pub fn path(a: &PathArgs) -> Result<(), Failure> {
    check_budget("--psi-max", a.psi_max)?;
    let loaded = load(&a.problem, a.psi_max)?;
    let path = trace_path(&loaded.lp, a.psi_max)?;
    write_with_header(&a.out, &path.to_csv())?;
    write_with_header(&a.out.with_extension("weights.csv"), &path.weights_csv())?;
    let svg = line_plot("Optimal objective", "psi", "theta(psi)", &[Series { label: "theta", points: theta_series(&path) }]);
    write_svg(&svg_beside(&a.out), &svg)?;
    println!("{} breakpoints, {}", path.vertices.len(), terminal_label(&path));
    Ok(())
}

pub fn select(a: &SelectArgs) -> Result<(), Failure> {
    check_budget("--psi-max", a.psi_max)?;
    let model = ErrorModel::from_file(&a.error_model)?;
    let loaded = load(&a.problem, a.psi_max)?;
    let path = trace_path(&loaded.lp, a.psi_max)?;
    let report = match (&loaded.chain, &loaded.problem) {
        (Some(mdp), Some(problem)) => {
            let v_star = value_iteration(mdp, 1e-12)?.values;
            let states: Vec<Vec<f64>> = (0..mdp.num_states()).map(TabularMdp::state_vector).collect();
            let basis = problem.basis();
            let phi = basis.materialize(&states)?;
            let reg = basis.reg_weights();
            let mut rho_v_star = 0.0;
            for (s, w) in problem.sources().iter().zip(problem.state_weights()) {
                rho_v_star += w * v_star[mdp.state_index(s)?];
            }
            let gamma = problem.discount();
            BoundReport::build(&path, &model, |psi| Some(best_approximation_error(&phi, &v_star, &reg, psi, gamma)), Some(rho_v_star))?
        }
        _ => BoundReport::build(&path, &model, |_| None, None)?,
    };
    write_with_header(&a.out, &report.to_text())?;
    let svg = line_plot(
        "Bound curve",
        "psi",
        "value",
        &[
            Series { label: "f(psi)", points: report.curve.clone() },
            Series { label: "theta(psi)", points: theta_series(&path) },
        ],
    );
    write_svg(&svg_beside(&a.out), &svg)?;
    println!("psi* = {:?}{}", report.psi_star, if report.at_boundary { " (end of traced range)" } else { "" });
    Ok(())
}

pub fn bench_chain(a: &ChainBench) -> Result<(), Failure> {
    let cfg = chain_config(a.chain_config.as_deref())?;
    let mdp = chain_mdp(&cfg)?;
    let v_star = value_iteration(&mdp, 1e-12)?.values;
    let select = ErrorModel::with_sampling_slope(cfg.gamma, a.error_slope)?;
    let run = run_chain(&mdp, &cfg, &v_star, a.features, a.seed, &select)?;

    let dir = &a.out;
    let samples = chain_samples(&mdp, &cfg, SampleKind::Simple, a.seed)?;
    write_with_header(&dir.join("samples.txt"), &samples.to_text())?;
    write_with_header(&dir.join("basis.txt"), &chain_basis(cfg.num_states, a.features)?.to_config())?;
    write_with_header(&dir.join("path.csv"), &run.path.to_csv())?;
    let mut table = String::from("psi,true_error,objective\n");
    let mut theta = Vec::with_capacity(run.profile.len());
    for &(psi, err) in &run.profile {
        let obj = run.path.objective_at(psi)?;
        theta.push((psi, obj));
        let _ = writeln!(table, "{psi:?},{err:?},{obj:?}");
    }
    write_with_header(&dir.join("error.csv"), &table)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "seed = {}", a.seed);
    let _ = writeln!(summary, "features = {}", a.features);
    let _ = writeln!(summary, "breakpoints = {}", run.path.vertices.len());
    let _ = writeln!(summary, "psi_star = {:?}", run.psi_star);
    let _ = writeln!(summary, "error_at_zero = {:?}", run.error_at_zero());
    let _ = writeln!(summary, "best_error = {:?}", run.best_error());
    let _ = writeln!(summary, "error_at_star = {:?}", run.error_at_star);
    let _ = writeln!(summary, "error_at_end = {:?}", run.error_at_end());
    let _ = writeln!(summary, "error_unregularized = {:?}", run.error_unregularized);
    let _ = writeln!(summary, "bound_margin = {:?}", run.bound_margin);
    write_with_header(&dir.join("summary.txt"), &summary)?;
    // The terminus sits at a budget far past the interesting range.
    let cut = (4.0 * run.psi_star).max(10.0);
    let clip = |pts: &[(f64, f64)]| pts.iter().copied().filter(|p| p.0 <= cut).collect::<Vec<_>>();
    let svg = line_plot(
        "Chain: objective and true error",
        "psi",
        "value",
        &[
            Series { label: "true error", points: clip(&run.profile) },
            Series { label: "objective", points: clip(&theta) },
        ],
    );
    write_svg(&dir.join("error.svg"), &svg)?;
    print!("{summary}");
    Ok(())
}

fn load_env(kind: EnvKind, path: Option<&Path>) -> Result<EpisodicEnv, Failure> {
    Ok(match (kind, path) {
        (k, Some(p)) => EpisodicEnv::from_file(k, p)?,
        (EnvKind::Pendulum, None) => pendulum_env(),
        (EnvKind::MountainCar, None) => mountain_car_env(),
    })
}

pub fn bench_pendulum(a: &PendulumBench) -> Result<(), Failure> {
    if a.episodes == 0 || a.points == 0 || a.runs == 0 {
        return Err(Failure::Input("--episodes, --points and --runs must be positive".into()));
    }
    let env = load_env(EnvKind::Pendulum, a.config.as_deref())?;
    let mut sizes: Vec<usize> = (1..=a.points).map(|k| ((a.episodes * k) as f64 / a.points as f64).round().max(1.0) as usize).collect();
    sizes.dedup();
    let mut table = String::from("episodes,samples,nonzero_weights,median_steps,mean_steps\n");
    let mut curve = Vec::new();
    for n in sizes {
        let setup = KernelSetup { episodes: n, centers: a.features, psi: a.psi, ..KernelSetup::default() };
        let trained = train_kernel_ralp(&env, &setup, a.seed)?;
        let policy = GreedyPolicy::simulated(trained.value.clone(), &env, a.lookahead)?;
        let stats = rollout_evaluate(&env, &policy, env.max_steps(), a.runs, a.seed.wrapping_add(1))?;
        write_with_header(&a.out.join(format!("rollouts_{n}.csv")), &stats.to_csv())?;
        let _ = writeln!(table, "{n},{},{},{:?},{:?}", trained.samples.len(), trained.nonzero, stats.median, stats.mean);
        eprintln!("{n} episodes: median {} steps over {} runs", stats.median, a.runs);
        curve.push((n as f64, stats.median));
    }
    write_with_header(&a.out.join("steps.csv"), &table)?;
    let svg = line_plot("Pendulum balance steps", "training episodes", "median steps", &[Series { label: "RALP", points: curve }]);
    write_svg(&a.out.join("steps.svg"), &svg)?;
    print!("{table}");
    Ok(())
}

pub fn bench_mountain_car(a: &MountainCarBench) -> Result<(), Failure> {
    check_budget("--psi-max", a.psi_max)?;
    if a.solves == 0 {
        return Err(Failure::Input("--solves must be positive".into()));
    }
    let env = load_env(EnvKind::MountainCar, a.config.as_deref())?;
    let samples = match a.episodes {
        Some(n) => collect_samples(&env, n, true, a.seed)?,
        None => uniform_samples(&env, a.samples, a.seed)?,
    };
    let basis = Arc::new(hinge_grid(&env, a.features)?);
    let lp = to_standard_form(&RalpProblem::from_samples(&samples, basis, 0.0, env.discount())?);

    let t = Instant::now();
    let path = trace_path(&lp, a.psi_max)?;
    let trace_time = t.elapsed();
    let mut table = String::from("psi,homotopy_objective,simplex_objective,abs_diff\n");
    let t = Instant::now();
    for k in 1..=a.solves {
        let psi = a.psi_max * k as f64 / a.solves as f64;
        let sol = solve_lp(&lp.with_psi(psi)?)?;
        if sol.status != LpStatus::Optimal {
            return Err(Failure::Solver(format!("simplex ended with status {:?} at psi {psi}", sol.status)));
        }
        let h = path.objective_at(psi)?;
        let _ = writeln!(table, "{psi:?},{h:?},{:?},{:?}", sol.objective, (h - sol.objective).abs());
    }
    let simplex_time = t.elapsed();

    write_with_header(&a.out.join("path.csv"), &path.to_csv())?;
    write_with_header(&a.out.join("compare.csv"), &table)?;
    let timing = format!(
        "samples = {}\nvariables = {}\nbreakpoints = {}\ntrace_seconds = {:.6}\nsimplex_solves = {}\nsimplex_seconds = {:.6}\n",
        samples.len(),
        lp.num_vars(),
        path.vertices.len(),
        trace_time.as_secs_f64(),
        a.solves,
        simplex_time.as_secs_f64()
    );
    write_with_header(&a.out.join("timing.txt"), &timing)?;
    let svg = line_plot("Mountain car: optimal objective", "psi", "theta(psi)", &[Series { label: "theta", points: theta_series(&path) }]);
    write_svg(&a.out.join("theta.svg"), &svg)?;
    print!("{timing}");
    Ok(())
}
