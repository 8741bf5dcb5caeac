use fcw_redteam_core::qp::{kkt_residual, solve_default, QpProblem, QpStatus};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Strictly convex problem with `m` rows and optional boxes, feasible by
/// construction around a random point.
fn problem(n: usize, m: usize) -> impl Strategy<Value = QpProblem> {
    (
        prop::collection::vec(-1.0..1.0f64, n * n),
        prop::collection::vec(-3.0..3.0f64, n),
        prop::collection::vec(-1.0..1.0f64, m * n),
        prop::collection::vec(-1.0..1.0f64, n),
        prop::collection::vec(0.0..1.0f64, m),
        prop::collection::vec(prop::option::of(0.1..1.0f64), n),
    )
        .prop_map(move |(l, q, g, z0, slack, boxes)| {
            let l = DMatrix::from_vec(n, n, l);
            let p = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
            let g = DMatrix::from_vec(m, n, g);
            let z0 = DVector::from_vec(z0);
            let h = &g * &z0 + DVector::from_vec(slack);
            let mut lb = DVector::from_element(n, f64::NEG_INFINITY);
            let mut ub = DVector::from_element(n, f64::INFINITY);
            for (i, b) in boxes.iter().enumerate().take(2) {
                if let Some(w) = b {
                    lb[i] = z0[i] - w;
                    ub[i] = z0[i] + w;
                }
            }
            QpProblem::unconstrained(p, DVector::from_vec(q)).with_rows(g, h).with_bounds(lb, ub)
        })
}

/// Every constraint as a row `a·z ≤ b`.
fn all_rows(p: &QpProblem) -> Vec<(DVector<f64>, f64)> {
    let n = p.n();
    let mut rows: Vec<(DVector<f64>, f64)> = (0..p.m()).map(|i| (p.g.row(i).transpose(), p.h[i])).collect();
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        if p.ub[i].is_finite() {
            rows.push((e.clone(), p.ub[i]));
        }
        if p.lb[i].is_finite() {
            rows.push((-e, -p.lb[i]));
        }
    }
    rows
}

/// Best feasible point over all equality-constrained subproblems.
fn brute_force(p: &QpProblem) -> f64 {
    let n = p.n();
    let rows = all_rows(p);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << rows.len()) {
        let act: Vec<usize> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
        if act.len() > n {
            continue;
        }
        let k = act.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.p);
        for i in 0..n {
            rhs[i] = -p.q[i];
        }
        for (j, &r) in act.iter().enumerate() {
            for i in 0..n {
                kkt[(i, n + j)] = rows[r].0[i];
                kkt[(n + j, i)] = rows[r].0[i];
            }
            rhs[n + j] = rows[r].1;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let z = sol.rows(0, n).into_owned();
        if rows.iter().all(|(a, b)| a.dot(&z) <= b + 1e-9) {
            best = best.min(p.objective(&z));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_active_set_enumeration(p in (1usize..5, 0usize..4).prop_flat_map(|(n, m)| problem(n, m))) {
        let sol = solve_default(&p).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let want = brute_force(&p);
        prop_assert!((sol.objective - want).abs() <= 1e-7 * (1.0 + want.abs()), "{} vs {}", sol.objective, want);
        prop_assert!(kkt_residual(&p, &sol.z) <= 1e-7);
    }

    #[test]
    fn scaling_the_objective_keeps_the_minimiser(p in problem(4, 3), c in 0.01..100.0f64) {
        let a = solve_default(&p).unwrap();
        let scaled = QpProblem { p: &p.p * c, q: &p.q * c, ..p.clone() };
        let b = solve_default(&scaled).unwrap();
        prop_assert!((&a.z - &b.z).amax() <= 1e-6 * (1.0 + a.z.amax()));
    }

    #[test]
    fn extra_constraints_never_lower_the_optimum(p in problem(4, 3), a in prop::collection::vec(-1.0..1.0f64, 4), b in 0.0..2.0f64) {
        let base = solve_default(&p).unwrap();
        let mut g = p.g.clone().insert_row(p.m(), 0.0);
        for j in 0..4 {
            g[(p.m(), j)] = a[j];
        }
        // The new row may cut off every point; only optimal solves are compared.
        let h = p.h.clone().insert_row(p.m(), b);
        let tighter = QpProblem { g, h, ..p.clone() };
        if let Ok(sol) = solve_default(&tighter) {
            if sol.status == QpStatus::Optimal {
                prop_assert!(sol.objective >= base.objective - 1e-9 * (1.0 + base.objective.abs()));
            }
        }
    }
}

#[test]
fn clipped_quadratic_example() {
    // min (x-2)² + (y-2)² subject to x + y ≤ 2.
    let p = QpProblem::unconstrained(DMatrix::identity(2, 2) * 2.0, DVector::from_vec(vec![-4.0, -4.0]))
        .with_rows(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![2.0]));
    let sol = solve_default(&p).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!((sol.z[0] - 1.0).abs() < 1e-9 && (sol.z[1] - 1.0).abs() < 1e-9);
    assert!((sol.multipliers.rows[0] - 2.0).abs() < 1e-9);
}

#[test]
fn infeasible_problem_is_reported() {
    let p = QpProblem::unconstrained(DMatrix::identity(1, 1), DVector::zeros(1))
        .with_rows(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![-1.0, -1.0]));
    let sol = solve_default(&p).unwrap();
    assert_eq!(sol.status, QpStatus::Infeasible);
    assert!(sol.violation.is_some());
}

#[test]
fn solving_is_deterministic() {
    let n = 30;
    let p = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 + i as f64 * 0.1 } else { 0.01 / (1.0 + (i + j) as f64) });
    let q = DVector::from_fn(n, |i, _| (i as f64).sin());
    let g = DMatrix::from_fn(10, n, |i, j| ((i * 7 + j * 3) as f64).cos());
    let h = DVector::from_element(10, -0.5);
    let prob = QpProblem::unconstrained(p, q).with_rows(g, h);
    let a = solve_default(&prob).unwrap();
    let b = solve_default(&prob).unwrap();
    assert_eq!(a.z, b.z);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn large_diagonal_problem_solves_quickly() {
    let n = 1500;
    let p = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| 2.0 + (i % 7) as f64));
    let q = DVector::from_fn(n, |i, _| ((i * 13) % 11) as f64 - 5.0);
    let g = DMatrix::from_fn(40, n, |i, j| if j % 40 == i { 1.0 } else { 0.0 });
    let h = DVector::from_element(40, -1.0);
    let prob = QpProblem::unconstrained(p, q).with_rows(g, h);
    let start = std::time::Instant::now();
    let sol = solve_default(&prob).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!(start.elapsed().as_secs_f64() < 10.0);
}
