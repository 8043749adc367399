//! The simplex solver against brute-force vertex enumeration.

use nalgebra::{DMatrix, DVector};
use optql_core::lp::{solve_with, LpModel, LpStatus, Route, Row, Sense, SolverOptions};
use proptest::prelude::*;

/// Best objective over all basic feasible solutions, or `None` when there is
/// none. Only valid for bounded feasible regions.
fn vertex_oracle(model: &LpModel) -> Option<f64> {
    let n = model.num_vars;
    // every constraint as (coefs dense, rhs, is_equality); a·x <= b or = b
    let mut cons: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    let dense = |r: &Row| {
        let mut v = vec![0.0; n];
        for &(j, a) in &r.coefs {
            v[j] += a;
        }
        v
    };
    for r in &model.eq_rows {
        cons.push((dense(r), r.rhs, true));
    }
    for r in &model.le_rows {
        cons.push((dense(r), r.rhs, false));
    }
    for j in 0..n {
        if let Some(l) = model.lower_bounds[j] {
            let mut v = vec![0.0; n];
            v[j] = -1.0;
            cons.push((v, -l, false));
        }
        if let Some(Some(u)) = model.upper_bounds.as_ref().map(|b| b[j]) {
            let mut v = vec![0.0; n];
            v[j] = 1.0;
            cons.push((v, u, false));
        }
    }
    let n_eq = model.eq_rows.len();
    let optional: Vec<usize> = (n_eq..cons.len()).collect();
    if n_eq > n {
        return None;
    }
    let need = n - n_eq;
    let mut best: Option<f64> = None;
    let mut pick = Vec::new();
    combinations(&optional, need, 0, &mut pick, &mut |chosen| {
        let active: Vec<usize> = (0..n_eq).chain(chosen.iter().copied()).collect();
        let a = DMatrix::from_fn(n, n, |i, j| cons[active[i]].0[j]);
        let b = DVector::from_fn(n, |i, _| cons[active[i]].1);
        let Some(x) = a.lu().solve(&b) else {
            return;
        };
        let feasible = cons.iter().all(|(row, rhs, eq)| {
            let v: f64 = row.iter().zip(x.iter()).map(|(a, x)| a * x).sum();
            if *eq {
                (v - rhs).abs() <= 1e-9 * (1.0 + rhs.abs())
            } else {
                v <= rhs + 1e-9 * (1.0 + rhs.abs())
            }
        });
        if !feasible {
            return;
        }
        let xs: Vec<f64> = x.iter().copied().collect();
        let obj = model.objective_value(&xs);
        let better = match (best, model.sense) {
            (None, _) => true,
            (Some(b), Sense::Minimize) => obj < b,
            (Some(b), Sense::Maximize) => obj > b,
        };
        if better {
            best = Some(obj);
        }
    });
    best
}

fn combinations(items: &[usize], k: usize, start: usize, acc: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if acc.len() == k {
        f(acc);
        return;
    }
    for i in start..items.len() {
        acc.push(items[i]);
        combinations(items, k, i + 1, acc, f);
        acc.pop();
    }
}

fn coef() -> impl Strategy<Value = f64> {
    prop_oneof![
        2 => Just(0.0),
        5 => (-5i32..=5).prop_map(f64::from),
        3 => -4.0..4.0f64,
    ]
}

prop_compose! {
    fn bounded_lp()(n in 1usize..=6)(
        n in Just(n),
        obj in prop::collection::vec(coef(), n),
        le in prop::collection::vec((prop::collection::vec(coef(), n), -3.0..10.0f64), 0..4),
        eq in prop::collection::vec((prop::collection::vec(coef(), n), 0.0..6.0f64), 0..=2),
        lower in prop::collection::vec(prop_oneof![3 => Just(0.0), 1 => -2.0..0.0f64], n),
        upper in prop::collection::vec(1.0..6.0f64, n),
        maximize in any::<bool>(),
    ) -> LpModel {
        let sparse = |v: &[f64]| v.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (j, *a)).collect::<Vec<_>>();
        let mut m = LpModel::new(n);
        m.sense = if maximize { Sense::Maximize } else { Sense::Minimize };
        m.objective = sparse(&obj);
        m.le_rows = le.iter().map(|(c, b)| Row::new(sparse(c), *b)).collect();
        m.eq_rows = eq.iter().map(|(c, b)| Row::new(sparse(c), *b)).collect();
        m.lower_bounds = lower.into_iter().map(Some).collect();
        m.upper_bounds = Some(upper.into_iter().map(Some).collect());
        m
    }
}

fn check(model: &LpModel, route: Route) -> Result<(), TestCaseError> {
    let opts = SolverOptions { route, ..SolverOptions::default() };
    let sol = solve_with(model, &opts).map_err(|e| TestCaseError::fail(e.to_string()))?;
    match vertex_oracle(model) {
        None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        Some(best) => {
            prop_assert_eq!(sol.status, LpStatus::Optimal);
            prop_assert!(
                (sol.objective_value - best).abs() <= 1e-7 * (1.0 + best.abs()),
                "solver {} oracle {}",
                sol.objective_value,
                best
            );
            prop_assert!(model.max_row_violation(&sol.values) <= 1e-7);
            prop_assert!(model.max_bound_violation(&sol.values) <= 1e-9);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn primal_route_matches_oracle(model in bounded_lp()) {
        check(&model, Route::Primal)?;
    }

    #[test]
    fn dual_route_matches_oracle(model in bounded_lp()) {
        check(&model, Route::Dual)?;
    }

    #[test]
    fn solves_are_deterministic(model in bounded_lp()) {
        let a = solve_with(&model, &SolverOptions::default()).unwrap();
        let b = solve_with(&model, &SolverOptions::default()).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.iterations, b.iterations);
        prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn two_point_closed_form_matches_oracle() {
    let e = std::f64::consts::E;
    let mut m = LpModel::new(4);
    m.objective = vec![(1, 0.5), (2, 0.5)];
    m.le_rows = vec![
        Row::new(vec![(0, 1.0), (2, -e)], 0.0),
        Row::new(vec![(1, 1.0), (3, -e)], 0.0),
        Row::new(vec![(2, 1.0), (0, -e)], 0.0),
        Row::new(vec![(3, 1.0), (1, -e)], 0.0),
    ];
    m.eq_rows = vec![
        Row::new(vec![(0, 1.0), (1, 1.0)], 1.0),
        Row::new(vec![(2, 1.0), (3, 1.0)], 1.0),
    ];
    let oracle = vertex_oracle(&m).unwrap();
    assert!((oracle - 1.0 / (1.0 + e)).abs() < 1e-12);
    for route in [Route::Primal, Route::Dual] {
        let opts = SolverOptions { route, ..SolverOptions::default() };
        let sol = solve_with(&m, &opts).unwrap();
        assert!((sol.objective_value - oracle).abs() < 1e-9);
    }
}

#[test]
fn model_json_round_trip_preserves_solution() {
    let mut m = LpModel::new(2);
    m.objective = vec![(0, -1.0), (1, -2.0)];
    m.le_rows = vec![Row::new(vec![(0, 1.0), (1, 1.0)], 4.0)];
    m.upper_bounds = Some(vec![None, Some(3.0)]);
    let back = LpModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back, m);
    let sol = optql_core::lp::solve(&back).unwrap();
    assert!((sol.objective_value + 7.0).abs() < 1e-9);
}

#[test]
fn beale_cycling_example_terminates() {
    let mut m = LpModel::new(4);
    m.objective = vec![(0, -0.75), (1, 20.0), (2, -0.5), (3, 6.0)];
    m.le_rows = vec![
        Row::new(vec![(0, 0.25), (1, -8.0), (2, -1.0), (3, 9.0)], 0.0),
        Row::new(vec![(0, 0.5), (1, -12.0), (2, -0.5), (3, 3.0)], 0.0),
        Row::new(vec![(2, 1.0)], 1.0),
    ];
    for route in [Route::Primal, Route::Dual] {
        let opts = SolverOptions { route, ..SolverOptions::default() };
        let sol = solve_with(&m, &opts).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value + 1.25).abs() < 1e-9, "{}", sol.objective_value);
    }
}
