mod common;

use nalgebra::DMatrix;
use rand::Rng;

use common::{random_ralp, rng};
use ralp::lp::StandardLP;
use ralp::simplex::{kkt_residuals, solve_lp, LpStatus};

/// Minimum over all basic feasible points of `{Ax ≥ b, eᵀx ≤ ψ, x ≥ 0}`.
fn enumerate_vertices(lp: &StandardLP) -> Option<f64> {
    let (m, n) = (lp.num_rows(), lp.num_vars());
    // Every inequality as `g·x ≥ h`.
    let mut rows: Vec<(Vec<f64>, f64)> = (0..m).map(|j| (lp.a.row(j).iter().copied().collect(), lp.b[j])).collect();
    rows.push((lp.e.iter().map(|v| -v).collect(), -lp.psi));
    for i in 0..n {
        let mut g = vec![0.0; n];
        g[i] = 1.0;
        rows.push((g, 0.0));
    }
    let total = rows.len();
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn next(pick: &mut [usize], total: usize) -> bool {
        let n = pick.len();
        let mut i = n;
        while i > 0 {
            i -= 1;
            if pick[i] < total - (n - i) {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, p) in pick.iter_mut().enumerate() {
        *p = i;
    }
    loop {
        let g = DMatrix::from_fn(n, n, |r, c| rows[pick[r]].0[c]);
        let h = nalgebra::DVector::from_fn(n, |r, _| rows[pick[r]].1);
        if let Some(x) = g.clone().lu().solve(&h) {
            if (&g * &x - &h).amax() < 1e-9 {
                let feasible = rows.iter().all(|(gr, hr)| gr.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() >= hr - 1e-9);
                if feasible {
                    let obj: f64 = lp.c.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                }
            }
        }
        if !next(&mut pick, total) {
            return best;
        }
    }
}

#[test]
fn agrees_with_vertex_enumeration() {
    let mut optimal = 0;
    for seed in 0..100 {
        let mut r = rng(seed);
        let n = r.random_range(1..=4);
        let m = r.random_range(1..=5);
        let a = DMatrix::from_fn(m, n, |_, _| r.random_range(-2.0..2.0));
        let b = (0..m).map(|_| r.random_range(-1.5..1.0)).collect();
        let c = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let e = (0..n).map(|_| r.random_range(0.2..1.5)).collect();
        let lp = StandardLP::new(c, a, b, e, r.random_range(0.0..3.0)).unwrap();
        let sol = solve_lp(&lp).unwrap();
        match enumerate_vertices(&lp) {
            Some(best) => {
                assert_eq!(sol.status, LpStatus::Optimal, "seed {seed}");
                assert!((sol.objective - best).abs() <= 1e-9 * (1.0 + best.abs()), "seed {seed}: {} vs {best}", sol.objective);
                optimal += 1;
            }
            None => assert_eq!(sol.status, LpStatus::Infeasible, "seed {seed}"),
        }
    }
    assert!(optimal >= 50, "only {optimal} feasible instances");
}

#[test]
fn optimal_solutions_are_certified() {
    for seed in 0..60 {
        let lp = random_ralp(seed).with_psi(seed as f64 * 0.1).unwrap();
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(kkt_residuals(&lp, &sol.x, &sol.y, sol.lambda).max() <= 1e-8, "seed {seed}");
    }
}

#[test]
fn zero_budget_gives_the_constant_solution() {
    for seed in 0..40 {
        let lp = random_ralp(seed).with_psi(0.0).unwrap();
        let sol = solve_lp(&lp).unwrap();
        // Only the constant weight is free; its coefficient is 1 − γ = 0.1.
        let expected = lp.b.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) / 0.1;
        assert!((sol.objective - expected).abs() < 1e-9 * (1.0 + expected.abs()), "seed {seed}");
    }
}
