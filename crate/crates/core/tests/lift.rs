use std::f64::consts::PI;

use proptest::prelude::*;
use vsoliton_core::diff::observed_orders;
use vsoliton_core::lift::*;
use vsoliton_core::ricci::*;
use vsoliton_core::Error;

fn torus_profile(n: usize) -> QuotientMetricProfile {
    QuotientMetricProfile::flat_circle(n, 2.0 * PI, |x| 1.0 + 0.2 * x.cos() + 0.05 * (2.0 * x).sin()).unwrap()
}

fn torus_lift(n_tau: usize, lambda: f64, c: f64, tau_max: f64, strategy: FStrategy) -> (FlowTrajectory, LiftedMetric) {
    let q = torus_profile(32);
    let times = lift_times(c, lambda, tau_max, n_tau);
    let dt = 0.5 * stability_bound(&q);
    let traj = krf_integrate_at(&q, lambda, &times, dt).unwrap();
    let f = choose_f(&traj, c, strategy).unwrap();
    let lifted = lift(&traj, &f, c).unwrap();
    (traj, lifted)
}

proptest! {
    #[test]
    fn reparametrization_round_trips(c in 0.1f64..5.0, lambda in -1.0f64..2.0, t in 0.0f64..1.0) {
        let tau = tau_reparam(c, lambda, t);
        prop_assert!((t_of_tau(c, lambda, tau) - t).abs() <= 1e-12 * (1.0 + t));
    }

    #[test]
    fn reparametrization_is_continuous_in_lambda(c in 0.1f64..5.0, t in 0.0f64..2.0) {
        let near = tau_reparam(c, 1e-10, t);
        prop_assert!((near - c * t).abs() <= 1e-8 * (1.0 + c * t));
        prop_assert_eq!(tau_reparam(c, 0.0, t), c * t);
    }
}

#[test]
fn lifted_torus_flow_solves_the_soliton_system_at_second_order() {
    // the moment-end stencils are pre-asymptotic below ~65 levels
    let mut parts = Vec::new();
    let mut closed = Vec::new();
    for n_tau in [65, 129, 257] {
        let (_, lifted) = torus_lift(n_tau, 1.0, 1.0, 1.0, FStrategy::FanoDefault);
        parts.push(vsoliton_residual(&lifted).unwrap().parts);
        closed.push(closedness_residual(&lifted).unwrap().sup_norm());
    }
    for part in 0..4 {
        let errs: Vec<f64> = parts.iter().map(|p| p[part]).collect();
        for p in observed_orders(&errs, 2.0) {
            assert!(p > 1.8, "part {part}: {errs:?}");
        }
    }
    for p in observed_orders(&closed, 2.0) {
        assert!(p > 1.8, "{closed:?}");
    }
}

#[test]
fn descent_recovers_the_flow() {
    let mut errs = Vec::new();
    let mut spreads = Vec::new();
    for n_tau in [17, 33, 65] {
        let (traj, lifted) = torus_lift(n_tau, 1.0, 1.0, 1.0, FStrategy::FanoDefault);
        let ja = (n_tau - 1) / 4;
        let a = lifted.chart.grid.tau_nodes[ja];
        let d = descend(&lifted, a).unwrap();
        assert!(!d.static_branch);
        // c_k = c e^{lambda t_a} = c + lambda a
        assert!((d.c_k - (1.0 + a)).abs() < 1e-2, "{}", d.c_k);
        assert_eq!(d.trajectory.times.len(), n_tau - ja);
        errs.push(round_trip_error(&traj, &d, traj.times[ja]).unwrap());
        spreads.push(d.c_spread);
        assert!(d.flow_residual < 1e-2 && d.identity_residual < 1e-2);
    }
    for p in observed_orders(&errs, 2.0) {
        assert!(p > 1.8, "{errs:?}");
    }
    for p in observed_orders(&spreads, 2.0) {
        assert!(p > 1.8, "{spreads:?}");
    }
}

#[test]
fn positivity_is_a_sum_of_squares() {
    let mut res = Vec::new();
    for n_tau in [17, 33, 65] {
        let (_, lifted) = torus_lift(n_tau, 1.0, 1.0, 1.0, FStrategy::Margin(0.5));
        let d = descend(&lifted, 0.0).unwrap();
        let rep = positivity_check(&d, 1e-8).unwrap();
        assert!(rep.min_margin > 0.4, "{}", rep.min_margin);
        assert!(rep.equality.is_empty());
        res.push(rep.sos_residual);
    }
    for p in observed_orders(&res, 2.0) {
        assert!(p > 1.8, "{res:?}");
    }
}

#[test]
fn mean_flow_matches_moment_velocity() {
    let mut res = Vec::new();
    for n_tau in [65, 129, 257] {
        let (_, lifted) = torus_lift(n_tau, 1.0, 1.0, 1.0, FStrategy::FanoDefault);
        let rep = mean_flow_check(&lifted).unwrap();
        assert!(rep.consistency < 1e-2);
        res.push(rep.residual);
    }
    for p in observed_orders(&res, 2.0) {
        assert!(p > 1.8, "{res:?}");
    }
}

#[test]
fn margin_strategy_attains_its_margin() {
    let q = torus_profile(32);
    let times = lift_times(1.0, 1.0, 1.0, 9);
    let traj = krf_integrate_at(&q, 1.0, &times, 0.01).unwrap();
    let f = choose_f(&traj, 1.0, FStrategy::Margin(0.25)).unwrap();
    for (k, t) in traj.times.iter().enumerate() {
        let m = traj.scalar_curvature[k]
            .iter()
            .map(|r| r - 1.0 + t.exp() * f.df[k])
            .fold(f64::INFINITY, f64::min);
        assert!((m - 0.25).abs() < 1e-12, "{m}");
    }
}

#[test]
fn violated_constraint_is_reported() {
    let q = torus_profile(32);
    let times = lift_times(1.0, 1.0, 0.5, 9);
    let traj = krf_integrate_at(&q, 1.0, &times, 0.01).unwrap();
    match choose_f(&traj, 1.0, FStrategy::Linear(0.0)) {
        Err(Error::Constraint { worst, .. }) => assert!(worst < 0.0),
        other => panic!("{other:?}"),
    }
    let f = choose_f(&traj, 1.0, FStrategy::FanoDefault).unwrap();
    assert!(matches!(lift(&traj, &f, -1.0), Err(Error::InvalidInput(_))));
}

#[test]
fn nonuniform_sampling_is_rejected() {
    let q = torus_profile(32);
    let times: Vec<f64> = (0..9).map(|k| 0.1 * k as f64).collect();
    let traj = krf_integrate_at(&q, 1.0, &times, 0.01).unwrap();
    let f = choose_f(&traj, 1.0, FStrategy::FanoDefault).unwrap();
    match lift(&traj, &f, 1.0) {
        Err(Error::InvalidGrid(m)) => assert!(m.contains("lift_times")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn ke_product_over_the_sphere() {
    let mut part_one = Vec::new();
    for n in [64, 128, 256] {
        let ke = QuotientMetricProfile::round_sphere(n + 1, 3.0, 1.0).unwrap();
        let lifted = ke_product_lift(&ke, 1.0, 1.0, 17, 1e-2).unwrap();
        let r = vsoliton_residual(&lifted).unwrap();
        for part in 1..4 {
            assert!(r.parts[part] <= 1e-12, "{:?}", r.parts);
        }
        part_one.push(r.parts[0]);
        assert!(closedness_residual(&lifted).unwrap().sup_norm() <= 1e-12);
    }
    for p in observed_orders(&part_one, 2.0) {
        assert!((p - 2.0).abs() < 0.3, "{part_one:?}");
    }
    let wrong = QuotientMetricProfile::round_sphere(65, 3.0, 2.0).unwrap();
    assert!(matches!(ke_product_lift(&wrong, 1.0, 1.0, 17, 1e-2), Err(Error::InvalidInput(_))));
}

#[test]
fn static_descent_has_zero_margin_exactly_on_ke() {
    // flat torus, lambda = 0: R - n lambda + df/dt vanishes identically
    let flat = QuotientMetricProfile::flat_circle(32, 2.0 * PI, |_| 1.0).unwrap();
    let lifted = ke_product_lift(&flat, 0.0, 1.0, 17, 1e-12).unwrap();
    let a = lifted.chart.grid.tau_nodes[1];
    let d = descend(&lifted, a).unwrap();
    assert!(d.static_branch);
    assert!(d.c_k.abs() < 1e-12);
    let rep = positivity_check(&d, 1e-8).unwrap();
    assert!(rep.min_margin.abs() <= 1e-8);
    assert_eq!(rep.equality.len(), d.trajectory.times.len());
    assert!(rep.equality.iter().all(|(_, ke)| *ke < 1e-12));
    let mf = mean_flow_check(&lifted).unwrap();
    assert!(mf.residual < 1e-12 && mf.consistency < 1e-12, "{mf:?}");
}

#[test]
fn static_sphere_margin_is_the_fiber_square() {
    let ke = ke_sphere_profile(65, 3.0, 1.0).unwrap();
    let lifted = ke_product_lift(&ke, 1.0, 1.0, 17, 1e-10).unwrap();
    let a = lifted.chart.grid.tau_nodes[1];
    let d = descend(&lifted, a).unwrap();
    assert!(d.static_branch);
    assert!((d.c_k - a).abs() < 1e-12);
    assert!(d.flow_residual < 1e-10);
    // margin = 2 lambda² tau = ¼ w_inv f'²: positive although the base is KE
    let rep = positivity_check(&d, 1e-8).unwrap();
    assert!(rep.sos_residual < 1e-9, "{}", rep.sos_residual);
    assert!((rep.min_margin - 2.0 * a).abs() < 1e-9);
    assert!(rep.equality.is_empty());
}

#[test]
fn descent_rejects_fixed_point_levels() {
    let ke = QuotientMetricProfile::round_sphere(33, 3.0, 1.0).unwrap();
    let lifted = ke_product_lift(&ke, 1.0, 1.0, 17, 1e-2).unwrap();
    assert!(matches!(descend(&lifted, 0.0), Err(Error::InvalidInput(_))));
    assert!(matches!(descend(&lifted, 0.03), Err(Error::InvalidInput(_))));
}

#[test]
fn both_fiber_readings_solve_the_system_but_only_one_is_smooth() {
    let ke = ke_sphere_profile(65, 3.0, 0.5).unwrap();
    for reading in [FiberReading::Linear, FiberReading::Quadratic] {
        // Q = -4 lambda tau in both readings
        let lifted = product_lift(&ke, 0.5, 1.0, 33, 1e-10, reading).unwrap();
        let r = vsoliton_residual(&lifted).unwrap();
        assert!(r.parts[1..].iter().all(|v| *v < 1e-10), "{reading:?}: {:?}", r.parts);
        // the chart's one-sided end stencil differs from the flow's ghost stencil
        assert!(r.parts[0] < 1e-3, "{reading:?}: {:?}", r.parts);
    }
    assert_eq!(fixed_point_slope(FiberReading::Linear), 2.0);
    assert_eq!(fixed_point_slope(FiberReading::Quadratic), 0.0);
}

#[test]
fn hermite_interpolation_hits_the_nodes() {
    let q = torus_profile(16);
    let traj = krf_integrate_at(&q, 1.0, &[0.0, 0.1, 0.2], 0.01).unwrap();
    let p = interpolate_profile(&traj, 0.1).unwrap();
    assert_eq!(p, traj.profiles[1]);
    assert!(interpolate_profile(&traj, 0.3).is_err());
}
