//! One function per subcommand. Each composes library operations and turns
//! their residuals into report checks.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;
use vsoliton_core::calculus::{
    dtheta_components, exterior_derivative, hessian_invariant, integrability_residuals, laplacian_invariant,
    mean_curvature, trace, hamiltonian_laplacian_residual,
};
use vsoliton_core::diff::sup_norm;
use vsoliton_core::flip::{
    flip_descend, flip_residual, ode_integrate, ode_series_seed, series_overlap, FlipDescent, FlipOptions,
};
use vsoliton_core::lift::{
    choose_f, closedness_residual, descend, fixed_point_slope, ke_product_lift, lift, lift_times, mean_flow_check,
    positivity_check, product_lift, round_trip_error, vsoliton_residual, FiberReading,
};
use vsoliton_core::ma::{
    continuity_solve, cp1_closed_form, hessian_bound_check, jv_bound, newton_solve, path_target, round_chart,
    torus_round_chart, MAProblem, NewtonReport, PotentialField,
};
use vsoliton_core::ricci::{
    ke_residual, ke_sphere_profile, krf_integrate_at, stability_bound, FlowTrajectory, QuotientMetricProfile,
};
use vsoliton_core::{BaseKind, ChartGrid, EndKind, InvariantMetricChart, InvariantScalar};

use crate::config::*;
use crate::error::CliResult;
use crate::report::{write_json, write_table, Check, RunReport};

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

// ---------------------------------------------------------------- verify

type Field = Box<dyn Fn(f64, f64) -> f64>;

fn verify_chart(kind: ChartKind, n: usize, corrupt: bool) -> vsoliton_core::Result<InvariantMetricChart> {
    let ends = (EndKind::Free, EndKind::Free);
    let (range, h, w): (_, Field, Field) = match kind {
        ChartKind::Flat => ((0.0, 1.0), Box::new(|_, _| 1.0), Box::new(|_, _| 1.0)),
        ChartKind::Harmonic => {
            let f = |x: f64, t: f64| 2.0 + 0.3 * x.cos() * t.cosh();
            ((-0.5, 0.5), Box::new(f), Box::new(move |x, t| 1.0 / f(x, t)))
        }
    };
    // n + 1 moment levels so that doubling n halves both spacings
    let g = ChartGrid::uniform(BaseKind::Circle, (0.0, 2.0 * PI), n, range, n + 1, ends)?;
    let bump = move |x: f64, t: f64| if corrupt { 1.0 + 0.05 * x.sin() * t * t } else { 1.0 };
    InvariantMetricChart::from_fns(&g, move |x, t| h(x, t) * bump(x, t), w, 0.0)
}

const VERIFY_CHECKS: [&str; 5] = ["dtheta_closed", "hamiltonian_laplacian", "hessian_trace", "integrability", "mean_curvature"];

fn verify_measure(m: &InvariantMetricChart) -> vsoliton_core::Result<[f64; 5]> {
    let dd = exterior_derivative(&dtheta_components(m)?)?;
    let closed = dd.iter().fold(0.0_f64, |a, c| a.max(c.norm()));
    let ham = hamiltonian_laplacian_residual(m)?.sup_norm();
    let phi = InvariantScalar::from_fn(&m.grid, |x, t| 0.7 * x.sin() - 0.4 * (2.0 * x).cos() * t + 1.1 * (1.5 * t).sin() + 0.5 * x.cos() * t * t)?;
    let lap = laplacian_invariant(m, &phi)?;
    let tr = trace(m, &hessian_invariant(m, &phi)?);
    let integ = integrability_residuals(m)?.iter().map(|r| r.sup_norm()).fold(0.0, f64::max);
    // the quarter level; the middle one is a symmetry level and superconverges
    let mean = sup_norm(&mean_curvature(m, (m.grid.n_tau() - 1) / 4)?.residual);
    Ok([closed, ham, sup_diff(&lap.values, &tr), integ, mean])
}

pub fn verify(cfg: &VerifyConfig, _out: &Path) -> CliResult<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::new("verify");
    let grids = [cfg.grid, 2 * cfg.grid];
    let label = format!("{}/{}", grids[0], grids[1]);
    for &kind in &cfg.charts {
        let prefix = match kind {
            ChartKind::Flat => "flat",
            ChartKind::Harmonic => "harmonic",
        };
        let rows = report.timed(prefix, || -> vsoliton_core::Result<Vec<[f64; 5]>> {
            grids.iter().map(|&n| verify_measure(&verify_chart(kind, n, cfg.corrupt)?)).collect()
        });
        for (i, name) in VERIFY_CHECKS.iter().enumerate() {
            let full = format!("{prefix}.{name}");
            report.push(match &rows {
                Ok(r) => Check::order2(&full, r[0][i], r[1][i], cfg.tol, cfg.exact_tol, false, label.clone()),
                Err(e) => Check::failed(&full, e),
            });
        }
    }
    Ok(report)
}

// ------------------------------------------------------------------ flow

fn flow_start(cfg: &FlowConfig) -> vsoliton_core::Result<QuotientMetricProfile> {
    match cfg.model {
        FlowModel::FlatCircle => {
            let a = cfg.amplitude;
            QuotientMetricProfile::flat_circle(cfg.n, 2.0 * PI, move |x| 1.0 + a * x.cos())
        }
        FlowModel::RoundSphere => {
            let ke = ke_sphere_profile(cfg.n, cfg.half_width, cfg.lambda)?;
            if cfg.amplitude == 0.0 {
                return Ok(ke);
            }
            // p + ¼ psi'' with psi = a exp(-2 s²) stays in the Kähler class
            let a = cfg.amplitude;
            let p = ke.nodes.iter().zip(&ke.profile).map(|(s, p)| p + 0.25 * a * (16.0 * s * s - 4.0) * (-2.0 * s * s).exp()).collect();
            ke.with_profile(p)
        }
    }
}

fn write_trajectory(dir: &Path, traj: &FlowTrajectory) -> CliResult<()> {
    write_json(&dir.join("trajectory.json"), traj)?;
    let rows = traj.times.iter().enumerate().flat_map(|(k, t)| {
        traj.nodes
            .iter()
            .enumerate()
            .map(move |(i, s)| vec![*t, *s, traj.profiles[k][i], traj.scalar_curvature[k][i]])
    });
    write_table(&dir.join("trajectory.csv"), &["t", "s", "p", "R"], rows)
}

pub fn flow(cfg: &FlowConfig, out: &Path) -> CliResult<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::new("flow");
    let start = match flow_start(cfg) {
        Ok(q) => q,
        Err(e) => {
            report.push(Check::failed("integration", e));
            return Ok(report);
        }
    };
    let dt = cfg.dt.unwrap_or_else(|| 0.5 * stability_bound(&start));
    let times = linspace(0.0, cfg.t_end, cfg.n_out);
    let grid = format!("n={} dt={dt:.3e}", cfg.n);
    let traj = match report.timed("integrate", || krf_integrate_at(&start, cfg.lambda, &times, dt)) {
        Ok(t) => t,
        Err(e) => {
            report.push(Check::failed("integration", e));
            return Ok(report);
        }
    };
    write_trajectory(out, &traj)?;
    match &traj.termination {
        Some(reason) => report.push(Check::failed("integration", reason)),
        None => report.push(Check::bound("integration", 0.0, 0.0, grid.clone()).with_detail(format!("{} outputs", traj.times.len()))),
    }
    let last = traj.times.len() - 1;
    let gap = |k: usize| {
        let r = &traj.scalar_curvature[k];
        r[1..r.len() - 1].iter().map(|r| (r - cfg.lambda).abs()).fold(0.0, f64::max)
    };
    let ke_end = ke_residual(&traj.profile_at(last), cfg.lambda)?;
    let ke_start = ke_residual(&traj.profile_at(0), cfg.lambda)?;
    if cfg.amplitude == 0.0 {
        let drift = sup_diff(&traj.profiles[last], &traj.profiles[0]);
        report.push(Check::bound("static_drift", drift, cfg.tol, grid.clone()));
        report.push(Check::bound("ke_residual_end", ke_end, cfg.tol, grid));
    } else {
        report.push(
            Check::bound("r_gap_decay", gap(last) / gap(0), cfg.decay, grid).with_detail(format!(
                "interior sup|R-lambda| {:.3e} -> {:.3e}; KE residual {:.3e} -> {:.3e}",
                gap(0),
                gap(last),
                ke_start,
                ke_end
            )),
        );
    }
    Ok(report)
}

// ---------------------------------------------------------- lift-descend

struct LiftRun {
    parts: [f64; 4],
    closed: f64,
    mean: f64,
    round_trip: f64,
    c_spread: f64,
    min_margin: f64,
    sos: f64,
}

fn lift_run(cfg: &LiftDescendConfig, n_tau: usize) -> vsoliton_core::Result<LiftRun> {
    let a = cfg.amplitude;
    let q = QuotientMetricProfile::flat_circle(cfg.n_base, 2.0 * PI, move |x| 1.0 + a * x.cos() + 0.25 * a * (2.0 * x).sin())?;
    let times = lift_times(cfg.c, cfg.lambda, cfg.tau_max, n_tau);
    let traj = krf_integrate_at(&q, cfg.lambda, &times, 0.5 * stability_bound(&q))?;
    let f = choose_f(&traj, cfg.c, cfg.f)?;
    let mut lifted = lift(&traj, &f, cfg.c)?;
    if cfg.corrupt_f {
        for (df, tau) in lifted.f.df.iter_mut().zip(&lifted.f.tau) {
            *df += 0.05 * (1.0 + tau);
        }
    }
    let parts = vsoliton_residual(&lifted)?.parts;
    let closed = closedness_residual(&lifted)?.sup_norm();
    let mean = mean_flow_check(&lifted)?.residual;
    let j = (cfg.descend_at * (n_tau - 1) as f64).round() as usize;
    let d = descend(&lifted, lifted.chart.grid.tau_nodes[j])?;
    let round_trip = round_trip_error(&traj, &d, traj.times[j])?;
    let pos = positivity_check(&d, 1e-8)?;
    Ok(LiftRun { parts, closed, mean, round_trip, c_spread: d.c_spread, min_margin: pos.min_margin, sos: pos.sos_residual })
}

pub fn lift_descend(cfg: &LiftDescendConfig, _out: &Path) -> CliResult<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::new("lift-descend");
    let grids = [cfg.n_tau, 2 * cfg.n_tau - 1];
    let label = format!("n_tau {}/{}", grids[0], grids[1]);
    let runs = report.timed("flowing", || -> vsoliton_core::Result<Vec<LiftRun>> {
        grids.iter().map(|&n| lift_run(cfg, n)).collect()
    });
    match runs {
        Ok(r) => {
            let (c, f) = (&r[0], &r[1]);
            let ord = |name: &str, a: f64, b: f64| Check::order2(name, a, b, cfg.tol, 1e-12, true, label.clone());
            for (p, (a, b)) in c.parts.iter().zip(&f.parts).enumerate() {
                report.push(ord(&format!("vsoliton.part{}", p + 1), *a, *b));
            }
            report.push(ord("closedness", c.closed, f.closed));
            report.push(ord("mean_flow", c.mean, f.mean));
            report.push(ord("round_trip", c.round_trip, f.round_trip));
            report.push(ord("positivity.sum_of_squares", c.sos, f.sos));
            report.push(Check::bound("descent.c_spread", f.c_spread, cfg.c_spread_tol, label.clone()));
            report.push(
                Check::bound("positivity.margin", (-f.min_margin).max(0.0), 1e-8, label.clone())
                    .with_detail(format!("min margin {:.6e}", f.min_margin)),
            );
        }
        Err(e) => {
            let name = match e {
                vsoliton_core::Error::Constraint { .. } => "choose_f",
                _ => "flowing",
            };
            report.push(Check::failed(name, e));
        }
    }

    let pc = &cfg.product;
    let base = if pc.lambda == 0.0 {
        QuotientMetricProfile::flat_circle(pc.n, 2.0 * PI, |_| 1.0)
    } else {
        ke_sphere_profile(pc.n, pc.half_width, pc.lambda)
    };
    let grid = format!("n={} n_tau={}", pc.n, pc.n_tau);
    for (reading, name) in [(FiberReading::Linear, "product.linear"), (FiberReading::Quadratic, "product.quadratic")] {
        let r = base
            .clone()
            .and_then(|b| product_lift(&b, pc.lambda, cfg.tau_max, pc.n_tau, 1e-8, reading))
            .and_then(|l| vsoliton_residual(&l));
        report.push(match r {
            Ok(r) => {
                // part (i) carries the chart's end-stencil difference and is reported only
                let worst = r.parts[1..].iter().cloned().fold(0.0, f64::max);
                Check::bound(name, worst, pc.tol, grid.clone()).with_detail(format!(
                    "parts {:.3e} {:.3e} {:.3e} {:.3e}; fixed-point slope {}",
                    r.parts[0],
                    r.parts[1],
                    r.parts[2],
                    r.parts[3],
                    fixed_point_slope(reading)
                ))
            }
            Err(e) => Check::failed(name, e),
        });
    }
    let slope = fixed_point_slope(FiberReading::Linear);
    report.push(
        Check::bound("product.smooth_reading", (slope - 2.0).abs(), 0.0, grid.clone())
            .with_detail("w_inv = 2 tau has slope 2 at the fixed point; 2 tau^2 has slope 0"),
    );
    let ke = base.and_then(|b| ke_product_lift(&b, pc.lambda, cfg.tau_max, pc.n_tau, 1e-8)).and_then(|l| {
        Ok((vsoliton_residual(&l)?, closedness_residual(&l)?.sup_norm()))
    });
    report.push(match ke {
        Ok((r, closed)) => Check::bound("product.closedness", closed, pc.tol, grid)
            .with_detail(format!("parts {:.3e} {:.3e} {:.3e} {:.3e}", r.parts[0], r.parts[1], r.parts[2], r.parts[3])),
        Err(e) => Check::failed("product.closedness", e),
    });
    Ok(report)
}

// ----------------------------------------------------------------- solve

#[derive(Serialize)]
struct SolutionFile<'a> {
    chart: SolveChart,
    base_nodes: &'a [f64],
    tau_nodes: &'a [f64],
    epsilon: f64,
    lambda: f64,
    /// Normalization constant `c_eps` added to F.
    c_eps: f64,
    /// Constant absorbed by the bordered Newton system.
    kappa: f64,
    u: &'a [f64],
}

fn solve_problem(cfg: &SolveConfig) -> vsoliton_core::Result<MAProblem> {
    let chart = match cfg.chart {
        SolveChart::Round => round_chart(cfg.n_tau)?,
        SolveChart::Torus => torus_round_chart(cfg.n_x, cfg.n_tau)?,
    };
    let f = match &cfg.f {
        FSpec::Zero => InvariantScalar::constant(&chart.grid, 0.0),
        FSpec::Trig { ax, at } => {
            let (ax, at) = (*ax, *at);
            InvariantScalar::from_fn(&chart.grid, move |x, t| ax * x.cos() * (PI * t).sin() + at * t)?
        }
        FSpec::Samples { values } => InvariantScalar::new(chart.grid.clone(), values.clone())?,
    };
    MAProblem::new(chart, f, cfg.epsilon, cfg.lambda, cfg.allow_negative_lambda)
}

fn write_newton_csv(path: &Path, rep: &NewtonReport) -> CliResult<()> {
    // damping and JV slack belong to the step that produced the iterate
    let rows = rep.residuals.iter().enumerate().map(|(k, r)| {
        let damping = if k == 0 { 0.0 } else { rep.dampings.get(k - 1).cloned().unwrap_or(f64::NAN) };
        let slack = if k == 0 { f64::NAN } else { rep.jv_slack.get(k - 1).cloned().unwrap_or(f64::NAN) };
        vec![k as f64, *r, damping, slack]
    });
    write_table(path, &["iter", "residual", "damping", "jv_slack"], rows)
}

pub fn solve(cfg: &SolveConfig, out: &Path) -> CliResult<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::new("solve");
    let p = match solve_problem(cfg) {
        Ok(p) => p,
        Err(e) => {
            report.push(Check::failed("problem", e));
            return Ok(report);
        }
    };
    let grid = match cfg.chart {
        SolveChart::Round => format!("n_tau={}", cfg.n_tau),
        SolveChart::Torus => format!("{}x{}", cfg.n_x, cfg.n_tau),
    };
    let zero = PotentialField::zero(&p.chart);

    let start = path_target(&p, 0.0).and_then(|t| newton_solve(&p, &t, &zero, &cfg.newton).map_err(Into::into));
    report.push(match start {
        Ok((u, _)) => Check::bound("start_endpoint", sup_norm(u.values()), 1e-12, grid.clone()),
        Err(e) => Check::failed("start_endpoint", e),
    });

    let cs = report.timed("continuity", || continuity_solve(&p, &cfg.path, &cfg.newton));
    let cs = match cs {
        Ok(cs) => cs,
        Err(e) => {
            report.push(Check::failed("continuity", e));
            return Ok(report);
        }
    };
    let fin = cs.final_report();
    report.push(
        Check::bound("continuity", fin.final_residual, cfg.newton.tol, grid.clone())
            .with_detail(format!("{} path steps, kappa {:.6e}", cs.s_values.len(), fin.kappa)),
    );
    write_json(
        &out.join("solution.json"),
        &SolutionFile {
            chart: cfg.chart,
            base_nodes: &p.chart.grid.base_nodes,
            tau_nodes: &p.chart.grid.tau_nodes,
            epsilon: p.epsilon,
            lambda: p.lambda,
            c_eps: p.c_eps,
            kappa: fin.kappa,
            u: cs.u.values(),
        },
    )?;

    let direct = report.timed("newton", || newton_solve(&p, &p.target(), &zero, &cfg.newton));
    match direct {
        Ok((u, rep)) => {
            write_newton_csv(&out.join("newton_report.csv"), &rep)?;
            report.push(Check::bound("newton.final_residual", rep.final_residual, cfg.newton.tol, grid.clone()));
            let ratios: Vec<f64> = rep.residuals.windows(2).filter(|w| w[0] < 1e-2 && w[1] > 1e-12).map(|w| w[1] / (w[0] * w[0])).collect();
            let worst = ratios.iter().cloned().fold(0.0, f64::max);
            report.push(
                Check::bound("newton.quadratic", worst, 50.0, grid.clone())
                    .with_detail(format!("r_(k+1)/r_k^2 over {} steps near the root", ratios.len())),
            );
            report.push(Check::bound("newton.agrees_with_path", sup_diff(u.values(), cs.u.values()), cfg.dual_tol, grid.clone()));
            let slack = rep.jv_slack.iter().cloned().fold(f64::INFINITY, f64::min);
            let bound = jv_bound(&u, &p.chart, 1e-10).map(|b| b.bound).unwrap_or(f64::NAN);
            report.push(
                Check::bound("jv_bound", (-slack).max(0.0), 0.0, grid.clone())
                    .with_detail(format!("bound {bound}, min slack over iterates {slack:.6e}")),
            );
            report.push(match hessian_bound_check(&u, &p.chart) {
                Ok(h) => Check::bound("hessian_bound", (-h.min_slack).max(0.0), 0.0, grid.clone())
                    .with_detail(format!("min slack {:.6e} at node {}", h.min_slack, h.worst_node)),
                Err(e) => Check::failed("hessian_bound", e),
            });
            if cfg.dual_seed {
                let g = &p.chart.grid;
                let seed = PotentialField::normalized(&p.chart, g.sample(|x, t| 0.05 * (2.0 * x).cos() * t * t * (1.0 - t) * (1.0 - t)));
                let second = seed.and_then(|s| newton_solve(&p, &p.target(), &s, &cfg.newton).map_err(Into::into));
                report.push(match second {
                    Ok((u2, _)) => Check::bound("dual_seed", sup_diff(u.values(), u2.values()), cfg.dual_tol, grid.clone()),
                    Err(e) => Check::failed("dual_seed", e),
                });
            }
        }
        Err(e) => report.push(Check::failed("newton.final_residual", e)),
    }

    if cfg.chart == SolveChart::Round {
        report.push(match cp1_closed_form(&p) {
            Ok(cf) => Check::bound("closed_form", sup_diff(cs.u.values(), cf.u.values()), cfg.oracle_tol, grid),
            Err(e) => Check::failed("closed_form", e),
        });
    }
    Ok(report)
}

// ------------------------------------------------------------------ flip

pub fn flip(cfg: &FlipConfig, out: &Path) -> CliResult<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::new("flip");
    let seed = ode_series_seed(cfg.m, cfg.order)?;
    write_table(
        &out.join("series.csv"),
        &["k", "a_k"],
        seed.coefficients.iter().enumerate().map(|(k, a)| vec![k as f64, *a]),
    )?;
    let expected = -((cfg.m - 1) as f64) / 4.0;
    report.push(
        Check::bound("series.a2", (seed.coefficients[2] - expected).abs(), 0.0, format!("K={}", cfg.order))
            .with_detail(format!("a2 = {}", seed.coefficients[2])),
    );

    let opts = FlipOptions { r0: cfg.r0, rtol: cfg.rtol, atol: cfg.atol };
    let profile = match report.timed("integrate", || ode_integrate(cfg.m, cfg.r_max, cfg.n_r, &seed, opts)) {
        Ok(p) => p,
        Err(e) => {
            report.push(Check::failed("integration", e));
            return Ok(report);
        }
    };
    let rows = (0..profile.r.len()).map(|k| vec![profile.r[k], profile.h[k], profile.dh[k], profile.d2h[k]]);
    write_table(&out.join("profile.csv"), &["r", "h", "dh", "d2h"], rows)?;
    let grid = format!("n_r={}", cfg.n_r);
    report.push(Check::bound("series_overlap", series_overlap(&profile, &seed)?, cfg.overlap_tol, grid.clone()));
    report.push(Check::bound("ode_residual", profile.ode_residual, cfg.ode_tol, grid.clone()));
    report.push(match flip_residual(&profile, cfg.residual_r_max, &cfg.rho) {
        Ok(r) => Check::bound("flip_residual", r.sup, cfg.tol, grid.clone()),
        Err(e) => Check::failed("flip_residual", e),
    });

    let coarse = (cfg.n_tau, cfg.n_s);
    let fine = (2 * cfg.n_tau - 1, 2 * cfg.n_s - 1);
    let runs = report.timed("descend", || -> vsoliton_core::Result<Vec<FlipDescent>> {
        [coarse, fine].iter().map(|&(nt, ns)| flip_descend(&profile, cfg.tau_range, nt, cfg.s_range, ns)).collect()
    });
    match runs {
        Ok(d) => {
            let label = format!("tau x s {}x{} / {}x{}", coarse.0, coarse.1, fine.0, fine.1);
            write_json(&out.join("descent.json"), &d[1])?;
            report.push(
                Check::bound("descent.c_constancy", d[1].c_spread.max(d[1].c_drift), cfg.c_tol, label.clone())
                    .with_detail(format!("dtau/dt = {:.12}", d[1].c)),
            );
            report.push(Check::order2(
                "descent.krf_residual",
                d[0].krf_residual,
                d[1].krf_residual,
                cfg.order_tol,
                1e-12,
                true,
                label,
            ));
        }
        Err(e) => report.push(Check::failed("descent", e)),
    }
    Ok(report)
}
