use fracwave::analysis::{norms, read_csv, write_csv, ConvergenceReport, Direction, ErrorNorm, LadderEntry};
use fracwave::grid::{Grid1D, GridFunction};
use fracwave::problems::{custom_problem, CustomExpressions};
use fracwave::scheme::{run_solver, Backend, Discretization, EpsRule};
use fracwave::sigma::{solve_sigma, MultiTermOrders};
use fracwave::soe::SoeApprox;
use fracwave::tridiag::{thomas_solve, TridiagonalSystem};
use fracwave::CoefficientEngine;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn interior_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

fn zero_boundary(interior: &[f64]) -> GridFunction {
    GridFunction::from_interior(interior)
}

/// Three strictly decreasing orders in (1, 2) with positive weights.
fn orders3() -> impl Strategy<Value = MultiTermOrders> {
    (
        1.05..1.95f64,
        0.02..0.4f64,
        0.02..0.4f64,
        prop::array::uniform3(0.1..5.0f64),
    )
        .prop_filter_map("orders must stay above 1", |(a0, d1, d2, lam)| {
            let a1 = a0 - d1;
            let a2 = a1 - d2;
            (a2 > 1.01).then(|| MultiTermOrders::new(vec![a0, a1, a2], lam.to_vec()).unwrap())
        })
}

fn linear_run(orders: &MultiTermOrders, p: &str, phi: &str, psi: &str, backend: Backend) -> Vec<f64> {
    let exprs = CustomExpressions {
        p: p.into(),
        phi: phi.into(),
        psi: psi.into(),
        ..Default::default()
    };
    let prob = custom_problem(orders, &exprs, (0.0, 1.0), 1.0).unwrap();
    let mut disc = Discretization::new(12, 10, backend);
    disc.eps_rule = EpsRule::Fixed(1e-12);
    run_solver(&prob, &disc).unwrap().final_u.values
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norms_are_homogeneous(v in interior_values(15), c in -5.0..5.0f64) {
        let grid = Grid1D::new(0.0, 1.0, 16).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let (a, b) = (norms(&grid, &zero_boundary(&v)), norms(&grid, &zero_boundary(&scaled)));
        let tol = 1e-12 * (1.0 + a.h1 * c.abs());
        prop_assert!((b.l2 - c.abs() * a.l2).abs() <= tol);
        prop_assert!((b.semi_h1 - c.abs() * a.semi_h1).abs() <= tol);
        prop_assert!((b.h1 - c.abs() * a.h1).abs() <= tol);
    }

    #[test]
    fn norms_satisfy_triangle_inequality(u in interior_values(15), v in interior_values(15)) {
        let grid = Grid1D::new(0.0, 1.0, 16).unwrap();
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let (nu, nv, ns) = (
            norms(&grid, &zero_boundary(&u)),
            norms(&grid, &zero_boundary(&v)),
            norms(&grid, &zero_boundary(&sum)),
        );
        prop_assert!(ns.l2 <= nu.l2 + nv.l2 + 1e-12);
        prop_assert!(ns.semi_h1 <= nu.semi_h1 + nv.semi_h1 + 1e-12);
        prop_assert!(ns.h1 <= nu.h1 + nv.h1 + 1e-12);
    }

    #[test]
    fn l2_is_bounded_by_seminorm(v in interior_values(23), a in -2.0..0.0f64, len in 0.5..3.0f64) {
        let grid = Grid1D::new(a, a + len, 24).unwrap();
        let n = norms(&grid, &zero_boundary(&v));
        prop_assert!(n.l2 <= len / 6f64.sqrt() * n.semi_h1 + 1e-12);
    }

    #[test]
    fn thomas_matches_dense_lu(
        n in 2usize..50,
        seed in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 50),
    ) {
        let rows = &seed[..n];
        let sub: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let sup: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.5 + sub[i].abs() + sup[i].abs()).collect();
        let rhs: Vec<f64> = rows.iter().map(|r| 10.0 * r.2).collect();
        let sys = TridiagonalSystem { sub: sub.clone(), diag: diag.clone(), sup: sup.clone(), rhs: rhs.clone() };
        let x = thomas_solve(&sys).unwrap();
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] = diag[i];
            if i > 0 { dense[(i, i - 1)] = sub[i]; }
            if i + 1 < n { dense[(i, i + 1)] = sup[i]; }
        }
        let y = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for i in 0..n {
            prop_assert!((x[i] - y[i]).abs() <= 1e-12 * (1.0 + y[i].abs()));
        }
    }

    #[test]
    fn sigma_lies_in_bracket_with_small_residual(orders in orders3(), n in 10usize..2000) {
        let sv = solve_sigma(&orders, 1.0 / n as f64).unwrap();
        let (lo, hi) = orders.sigma_bracket();
        prop_assert!(sv.sigma >= lo && sv.sigma <= hi);
        prop_assert!(sv.sigma > 0.5 && sv.sigma <= 1.0);
        prop_assert!(sv.residual.abs() < 1e-12);
    }

    #[test]
    fn direct_coefficients_satisfy_structure(orders in orders3(), n in 20usize..400) {
        let engine = CoefficientEngine::direct(&orders, 1.0 / n as f64, n).unwrap();
        let report = engine.coeff_property_check(n).unwrap();
        prop_assert!(report.passed(), "{:?}", report.rows.first());
    }

    #[test]
    fn soe_meets_target(beta in 0.1..0.95f64, k in 6i32..11, n in 50usize..5000) {
        let eps = 10f64.powi(-k);
        let tau = 1.0 / n as f64;
        let soe = SoeApprox::build(beta, eps, 0.5 * tau, 1.0).unwrap();
        prop_assert!(soe.weights.iter().all(|w| *w > 0.0));
        prop_assert!(soe.nodes.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(soe.error_scan(10 * soe.n_exp().max(200)).max_abs_error <= eps);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_problems_superpose(
        orders in orders3(),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        c in -2.0..2.0f64,
        fast in any::<bool>(),
    ) {
        let backend = if fast { Backend::Fast } else { Backend::Direct };
        let p1 = format!("{a}*sin(pi*x)*t");
        let phi = format!("{b}*x*(1-x)");
        let psi = format!("{c}*sin(2*pi*x)");
        let u1 = linear_run(&orders, &p1, "0", "0", backend);
        let u2 = linear_run(&orders, "0", &phi, &psi, backend);
        let u12 = linear_run(&orders, &p1, &phi, &psi, backend);
        for i in 0..u12.len() {
            prop_assert!((u12[i] - u1[i] - u2[i]).abs() <= 1e-11 * (1.0 + u12[i].abs()));
        }
    }

    #[test]
    fn dirichlet_boundary_is_preserved(orders in orders3(), amp in 0.1..3.0f64, fast in any::<bool>()) {
        let backend = if fast { Backend::Fast } else { Backend::Direct };
        let exprs = CustomExpressions {
            f: "sin(u)".into(),
            p: format!("{amp}*exp(t)*(1+x)"),
            phi: "x*(1-x)".into(),
            ..Default::default()
        };
        let prob = custom_problem(&orders, &exprs, (0.0, 1.0), 1.0).unwrap();
        let mut disc = Discretization::new(10, 8, backend);
        disc.keep_trajectory = true;
        let out = run_solver(&prob, &disc).unwrap();
        for u in out.trajectory.unwrap() {
            prop_assert_eq!(u.values[0], 0.0);
            prop_assert_eq!(*u.values.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn csv_round_trip_preserves_rates(e0 in 1e-4..1e-1f64, ratios in prop::collection::vec(3.0..5.0f64, 3)) {
        let mut e = e0;
        let mut entries = Vec::new();
        for (k, r) in std::iter::once(1.0).chain(ratios).enumerate() {
            e /= r;
            entries.push(LadderEntry {
                tau: 1.0 / (20usize << k) as f64,
                h: 1e-3,
                e1: e,
                rate: None,
                n_exp_total: 0,
                stored_reals: 0,
                wall_ms: 0.0,
            });
        }
        let mut report = ConvergenceReport {
            direction: Direction::Temporal,
            case: "case1".into(),
            alphas: vec![1.9, 1.5, 1.2],
            lambdas: vec![3.0, 2.0, 1.0],
            eps_rule: "table1".into(),
            backend: Backend::Fast,
            norm: ErrorNorm::L2,
            entries,
        };
        report.compute_rates().unwrap();
        let mut buf = Vec::new();
        write_csv(&report.rows(), &mut buf, false).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        let errs: Vec<f64> = back.iter().map(|r| r.e1).collect();
        let recomputed = fracwave::analysis::rate_ladder(&errs).unwrap();
        let stored: Vec<f64> = back.iter().skip(1).map(|r| r.rate.unwrap()).collect();
        prop_assert_eq!(recomputed.len(), stored.len());
        for (x, y) in recomputed.iter().zip(&stored) {
            prop_assert!((x - y).abs() <= 5e-5, "{x} vs {y}");
        }
        prop_assert!(back[0].rate.is_none());
    }
}
