//! Perturbed scalar V-soliton Monge-Ampère equation
//!
//! `log(omega_u^{n+1} / omega_0^{n+1}) - log(eps + |V|²_u) = F_eps`
//!
//! on an invariant chart, with `omega_u = omega_0 + (i/2)∂∂̄u` and
//! `|V|²_u = |V|²_0 (1 + ¼ (|V|²_0 u_tau)_tau)`. On a chart with a
//! one-dimensional base the volume ratio is `det M / h` for the block
//!
//! ```text
//! M = [ h + ¼u_xx + ¼A h_tau    ¼A_x/|V| ]      A = |V|²_0 u_tau
//!     [ ¼A_x/|V|                1 + ¼A_tau ]
//! ```
//!
//! and on a point base it is `1 + ¼A_tau`. `A_tau` uses the conservative flux
//! stencil so that the operator is symmetric for the trapezoid weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::{InvariantMetricChart, InvariantScalar};
use crate::diff::{d2_base, d_base, d_tau, div_flux_tau_conservative, sup_norm, trapezoid_weights};
use crate::error::{Error, Result};
use crate::grid::{BaseKind, ChartGrid, EndKind};
use crate::ode::{integrate, OdeOptions};

/// Point base over `tau ∈ [0, 1]` with `|V|² = 2 tau (1 - tau)`: the sphere
/// with its rotation.
pub fn round_chart(n_tau: usize) -> Result<InvariantMetricChart> {
    let grid = ChartGrid::moment_interval((0.0, 1.0), n_tau, (EndKind::FixedPoint, EndKind::FixedPoint))?;
    InvariantMetricChart::from_fns(&grid, |_, _| 1.0, |_, t| 2.0 * t * (1.0 - t), 0.0)
}

/// Flat periodic base `x ∈ [0, 2 pi)` times the round fiber.
pub fn torus_round_chart(n_x: usize, n_tau: usize) -> Result<InvariantMetricChart> {
    let grid = ChartGrid::uniform(
        BaseKind::Circle,
        (0.0, 2.0 * std::f64::consts::PI),
        n_x,
        (0.0, 1.0),
        n_tau,
        (EndKind::FixedPoint, EndKind::FixedPoint),
    )?;
    InvariantMetricChart::from_fns(&grid, |_, _| 1.0, |_, t| 2.0 * t * (1.0 - t), 0.0)
}

/// Quadrature weights of `omega_0^{n+1}` (up to the constant fiber factor).
pub fn volume_weights(chart: &InvariantMetricChart) -> Vec<f64> {
    let g = &chart.grid;
    let wt = trapezoid_weights(g.n_tau(), g.dtau());
    let wx: Vec<f64> = match g.base_kind {
        BaseKind::Point => vec![1.0],
        k if k.is_periodic() => vec![g.dx().unwrap_or(1.0); g.n_base()],
        _ => trapezoid_weights(g.n_base(), g.dx().unwrap_or(1.0)),
    };
    (0..g.len())
        .map(|k| {
            let (i, j) = g.split(k);
            let h = if chart.n_base() == 1 { chart.h[k] } else { 1.0 };
            h * wx[i] * wt[j]
        })
        .collect()
}

/// `c` with `∫ ((eps + |V|²_0) e^{F + c} - 1) omega_0^n = 0`: `c = log(B/A)`.
pub fn normalize_c_eps(chart: &InvariantMetricChart, f: &[f64], epsilon: f64) -> Result<f64> {
    if f.len() != chart.grid.len() {
        return Err(Error::GridMismatch("F does not match the chart".into()));
    }
    let q = volume_weights(chart);
    let b: f64 = q.iter().sum();
    let a: f64 = (0..q.len())
        .map(|k| q[k] * (epsilon + chart.w_inv[k]) * f[k].exp())
        .sum();
    if !(a > 0.0) || !a.is_finite() || !(b > 0.0) {
        return Err(Error::InvalidInput(format!("normalization quadrature failed: A = {a}, B = {b}")));
    }
    Ok((b / a).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MAProblem {
    pub chart: InvariantMetricChart,
    /// `F` samples before normalization.
    pub f: Vec<f64>,
    pub epsilon: f64,
    pub lambda: f64,
    pub c_eps: f64,
}

impl MAProblem {
    /// `lambda = 0` is the supported case; `lambda = -1` needs
    /// `allow_negative_lambda`, and anything else is rejected.
    pub fn new(
        chart: InvariantMetricChart,
        f: InvariantScalar,
        epsilon: f64,
        lambda: f64,
        allow_negative_lambda: bool,
    ) -> Result<Self> {
        chart.grid.ensure_same(&f.grid, "F")?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if lambda != 0.0 && !(lambda == -1.0 && allow_negative_lambda) {
            return Err(Error::InvalidInput(format!(
                "lambda = {lambda} is not supported (0, or -1 when explicitly allowed)"
            )));
        }
        let c_eps = normalize_c_eps(&chart, &f.values, epsilon)?;
        Ok(Self { chart, f: f.values, epsilon, lambda, c_eps })
    }

    /// `F_eps = F + c_eps`.
    pub fn target(&self) -> Vec<f64> {
        self.f.iter().map(|v| v + self.c_eps).collect()
    }

    /// `F_{eps,0} = -log(eps + |V|²_0)`, solved by `u = 0`.
    pub fn start_target(&self) -> Vec<f64> {
        self.chart.w_inv.iter().map(|w| -(self.epsilon + w).ln()).collect()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let f = InvariantScalar::new(self.chart.grid.clone(), self.f.clone())?;
        Self::new(self.chart.clone(), f, epsilon, self.lambda, self.lambda == -1.0)
    }

    pub fn len(&self) -> usize {
        self.chart.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Potential with `∫ u omega_0^n = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub u: InvariantScalar,
}

impl PotentialField {
    pub fn zero(chart: &InvariantMetricChart) -> Self {
        Self { u: InvariantScalar::constant(&chart.grid, 0.0) }
    }

    /// Subtracts the weighted mean.
    pub fn normalized(chart: &InvariantMetricChart, values: Vec<f64>) -> Result<Self> {
        let q = volume_weights(chart);
        let vol: f64 = q.iter().sum();
        let mean = values.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / vol;
        let v = values.into_iter().map(|a| a - mean).collect();
        Ok(Self { u: InvariantScalar::new(chart.grid.clone(), v)? })
    }

    pub fn values(&self) -> &[f64] {
        &self.u.values
    }
}

/// Pointwise pieces of `omega_u` in the reduced chart.
struct Block {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    det: Vec<f64>,
}

fn inv_sqrt_w(w: f64) -> f64 {
    if w > 0.0 {
        1.0 / w.sqrt()
    } else {
        0.0
    }
}

fn block_linear(chart: &InvariantMetricChart, u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = &chart.grid;
    let w = &chart.w_inv;
    let n = g.len();
    let a_tau = div_flux_tau_conservative(g, w, u);
    let b: Vec<f64> = a_tau.iter().map(|v| 0.25 * v).collect();
    if chart.n_base() == 0 {
        return (vec![0.0; n], b, vec![0.0; n]);
    }
    let u_t = d_tau(g, u);
    let big_a: Vec<f64> = (0..n).map(|k| w[k] * u_t[k]).collect();
    let a_x = d_base(g, &big_a);
    let u_xx = d2_base(g, u);
    let h_t = d_tau(g, &chart.h);
    let a = (0..n).map(|k| 0.25 * u_xx[k] + 0.25 * big_a[k] * h_t[k]).collect();
    let c = (0..n).map(|k| 0.25 * a_x[k] * inv_sqrt_w(w[k])).collect();
    (a, b, c)
}

fn block(chart: &InvariantMetricChart, u: &[f64]) -> Block {
    let (da, db, c) = block_linear(chart, u);
    let n = u.len();
    let a: Vec<f64> = (0..n)
        .map(|k| if chart.n_base() == 1 { chart.h[k] + da[k] } else { 1.0 })
        .collect();
    let b: Vec<f64> = db.iter().map(|v| 1.0 + v).collect();
    let det = (0..n).map(|k| a[k] * b[k] - c[k] * c[k]).collect();
    Block { a, b, c, det }
}

fn check_admissible(chart: &InvariantMetricChart, blk: &Block, epsilon: f64) -> Result<()> {
    let mut worst: Option<(&str, usize, f64)> = None;
    let mut note = |what: &'static str, k: usize, v: f64| {
        if v <= 0.0 || !v.is_finite() {
            match worst {
                Some((_, _, w)) if w <= v => {}
                _ => worst = Some((what, k, v)),
            }
        }
    };
    for k in 0..blk.b.len() {
        note("1 + ¼(|V|² u_tau)_tau", k, blk.b[k]);
        if chart.n_base() == 1 {
            note("h + ¼u_xx + ¼A h_tau", k, blk.a[k]);
            note("det of the reduced block", k, blk.det[k]);
        }
    }
    if let Some((what, node, value)) = worst {
        return Err(Error::Admissibility { what: what.into(), node, value });
    }
    for k in 0..blk.b.len() {
        let s = epsilon + chart.w_inv[k] * blk.b[k];
        if !(s > 0.0) {
            let (base, tau) = chart.grid.split(k);
            return Err(Error::Degenerate { base, tau });
        }
    }
    Ok(())
}

/// `|V|²_u = |V|²_0 + ¼ JV(JV(u))`.
pub fn v_norm_sq(chart: &InvariantMetricChart, u: &[f64]) -> Vec<f64> {
    let (_, db, _) = block_linear(chart, u);
    (0..u.len()).map(|k| chart.w_inv[k] * (1.0 + db[k])).collect()
}

/// Volume ratio `omega_u^{n+1} / omega_0^{n+1}`.
pub fn volume_ratio_u(chart: &InvariantMetricChart, u: &[f64]) -> Vec<f64> {
    let blk = block(chart, u);
    (0..u.len())
        .map(|k| if chart.n_base() == 1 { blk.det[k] / chart.h[k] } else { blk.b[k] })
        .collect()
}

fn phi_values(problem: &MAProblem, u: &[f64]) -> Result<Vec<f64>> {
    let chart = &problem.chart;
    if u.len() != chart.grid.len() {
        return Err(Error::GridMismatch("potential does not match the chart".into()));
    }
    let blk = block(chart, u);
    check_admissible(chart, &blk, problem.epsilon)?;
    Ok((0..u.len())
        .map(|k| {
            let ratio = if chart.n_base() == 1 { blk.det[k] / chart.h[k] } else { blk.b[k] };
            ratio.ln() - (problem.epsilon + chart.w_inv[k] * blk.b[k]).ln()
        })
        .collect())
}

/// `log(omega_u^n / omega_0^n) - log(eps + |V|²_u)`.
pub fn phi_eps(u: &PotentialField, problem: &MAProblem) -> Result<InvariantScalar> {
    problem.chart.grid.ensure_same(&u.u.grid, "potential")?;
    InvariantScalar::new(problem.chart.grid.clone(), phi_values(problem, u.values())?)
}

fn dphi_values(problem: &MAProblem, u: &[f64], udot: &[f64]) -> Result<Vec<f64>> {
    let chart = &problem.chart;
    let blk = block(chart, u);
    check_admissible(chart, &blk, problem.epsilon)?;
    let (da, db, dc) = block_linear(chart, udot);
    Ok((0..u.len())
        .map(|k| {
            let s = problem.epsilon + chart.w_inv[k] * blk.b[k];
            let vol = if chart.n_base() == 1 {
                (da[k] * blk.b[k] + blk.a[k] * db[k] - 2.0 * blk.c[k] * dc[k]) / blk.det[k]
            } else {
                db[k] / blk.b[k]
            };
            vol - chart.w_inv[k] * db[k] / s
        })
        .collect())
}

/// Directional derivative of [`phi_eps`] at `u` along `udot`: the linearized
/// operator `Delta_u udot - (i/2)∂∂̄udot(V, JV) / (eps + |V|²_u)`.
pub fn dphi_eps(u: &PotentialField, udot: &InvariantScalar, problem: &MAProblem) -> Result<InvariantScalar> {
    problem.chart.grid.ensure_same(&u.u.grid, "potential")?;
    problem.chart.grid.ensure_same(&udot.grid, "direction")?;
    InvariantScalar::new(problem.chart.grid.clone(), dphi_values(problem, u.values(), &udot.values)?)
}

/// Weight of the inner product in which [`dphi_eps`] is symmetric:
/// `(eps + |V|²_u) omega_u^n`, relative to the quadrature of `omega_0^n`.
pub fn self_adjoint_weights(problem: &MAProblem, u: &PotentialField) -> Result<Vec<f64>> {
    let chart = &problem.chart;
    let q = volume_weights(chart);
    let ratio = volume_ratio_u(chart, u.values());
    let v2 = v_norm_sq(chart, u.values());
    Ok((0..q.len()).map(|k| q[k] * ratio[k] * (problem.epsilon + v2[k])).collect())
}

/// Jacobian of `phi_eps` at `u`. The operator couples a node only to nodes
/// within `STENCIL_TAU` moment steps and `stencil_x` base steps, so columns
/// spaced further apart are probed together.
pub fn jacobian(problem: &MAProblem, u: &[f64]) -> Result<DMatrix<f64>> {
    const STENCIL_TAU: usize = 4;
    let g = &problem.chart.grid;
    let n = u.len();
    let (nb, nt) = (g.n_base(), g.n_tau());
    let periodic = g.base_kind.is_periodic();
    let rx = if periodic { 1 } else { 4 };
    let mut sx = (2 * rx + 1).min(nb);
    if periodic && nb % sx != 0 {
        sx = nb;
    }
    let st = (2 * STENCIL_TAU + 1).min(nt);
    let mut jac = DMatrix::zeros(n, n);
    for cx in 0..sx {
        for ct in 0..st {
            let mut e = vec![0.0; n];
            for i in (cx..nb).step_by(sx) {
                for j in (ct..nt).step_by(st) {
                    e[g.idx(i, j)] = 1.0;
                }
            }
            let column = dphi_values(problem, u, &e)?;
            for (row, v) in column.into_iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let (i, j) = g.split(row);
                // the probed node nearest to this row in the same color class
                let ci = if sx == nb {
                    cx
                } else {
                    let base = i - (i % sx) + cx;
                    let cands = [base as isize - sx as isize, base as isize, (base + sx) as isize];
                    let dist = |c: isize| {
                        let d = (c - i as isize).unsigned_abs();
                        if periodic { d.min(nb - d.min(nb)) } else { d }
                    };
                    let best = cands
                        .iter()
                        .map(|c| if periodic { c.rem_euclid(nb as isize) } else { *c })
                        .filter(|c| *c >= 0 && (*c as usize) < nb)
                        .min_by_key(|c| dist(*c))
                        .unwrap_or(cx as isize);
                    best as usize
                };
                let cj = {
                    let base = j - (j % st) + ct;
                    [base as isize - st as isize, base as isize, (base + st) as isize]
                        .iter()
                        .cloned()
                        .filter(|c| *c >= 0 && (*c as usize) < nt)
                        .min_by_key(|c| (c - j as isize).unsigned_abs())
                        .unwrap_or(ct as isize) as usize
                };
                jac[(row, g.idx(ci, cj))] = v;
            }
        }
    }
    Ok(jac)
}

/// Column-by-column Jacobian, for checking [`jacobian`].
pub fn jacobian_dense(problem: &MAProblem, u: &[f64]) -> Result<DMatrix<f64>> {
    let n = u.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for col in 0..n {
        e[col] = 1.0;
        let column = dphi_values(problem, u, &e)?;
        for (row, v) in column.into_iter().enumerate() {
            jac[(row, col)] = v;
        }
        e[col] = 0.0;
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, armijo: 1e-4, min_damping: 1.0 / (1u64 << 30) as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    /// Sup-residual of every iterate, starting with the initial guess.
    pub residuals: Vec<f64>,
    /// Damping factor of every accepted step.
    pub dampings: Vec<f64>,
    pub final_residual: f64,
    /// Constant absorbed by the bordered system: `phi_eps(u) = target + lambda u + kappa`.
    pub kappa: f64,
    /// Smallest eigenvalue of the reduced block of `omega_u` over the chart.
    pub positivity_margin: f64,
    /// `4 (tau_max - tau_min) - sup |JV(u)|` for every accepted iterate.
    pub jv_slack: Vec<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Last admissible iterate when the solve fails.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_good: Option<Vec<f64>>,
}

impl NewtonReport {
    /// `r_{k+1} / r_k²` for consecutive iterates.
    pub fn quadratic_ratios(&self) -> Vec<f64> {
        self.residuals.windows(2).map(|w| w[1] / (w[0] * w[0])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonFailure {
    pub reason: String,
    pub report: NewtonReport,
}

impl std::fmt::Display for NewtonFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Newton did not converge: {} (residuals {:?})", self.reason, self.report.residuals)
    }
}

impl std::error::Error for NewtonFailure {}

impl From<NewtonFailure> for Error {
    fn from(e: NewtonFailure) -> Self {
        Error::NoSolution(e.to_string())
    }
}

fn min_block_eigen(chart: &InvariantMetricChart, u: &[f64]) -> f64 {
    let blk = block(chart, u);
    (0..u.len())
        .map(|k| {
            if chart.n_base() == 1 {
                let (p, q, r) = (blk.a[k], blk.c[k], blk.b[k]);
                let m = 0.5 * (p + r);
                m - (0.25 * (p - r) * (p - r) + q * q).sqrt()
            } else {
                blk.b[k]
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn residual_vec(problem: &MAProblem, target: &[f64], u: &[f64], kappa: f64) -> Result<Vec<f64>> {
    let phi = phi_values(problem, u)?;
    Ok((0..u.len())
        .map(|k| phi[k] - problem.lambda * u[k] - kappa - target[k])
        .collect())
}

/// Damped Newton on `phi_eps(u) - lambda u - kappa = target` with
/// `∫ u omega_0^n = 0`, solved as a bordered system in `(u, kappa)`.
pub fn newton_solve(
    problem: &MAProblem,
    target: &[f64],
    u0: &PotentialField,
    opts: &NewtonOptions,
) -> std::result::Result<(PotentialField, NewtonReport), NewtonFailure> {
    let chart = &problem.chart;
    let n = problem.len();
    let bound = jv_bound_value(chart);
    let mut report = NewtonReport {
        residuals: Vec::new(),
        dampings: Vec::new(),
        final_residual: f64::NAN,
        kappa: 0.0,
        positivity_margin: f64::NAN,
        jv_slack: Vec::new(),
        converged: false,
        failure: None,
        last_good: None,
    };
    let fail = |mut report: NewtonReport, reason: String, last: Option<Vec<f64>>| {
        report.failure = Some(reason.clone());
        report.last_good = last;
        NewtonFailure { reason, report }
    };
    if !(problem.epsilon > 0.0) {
        return Err(fail(report, "the iterative solver requires eps > 0".into(), None));
    }
    if target.len() != n || u0.values().len() != n {
        return Err(fail(report, "target or initial guess does not match the chart".into(), None));
    }
    let q = volume_weights(chart);
    let vol: f64 = q.iter().sum();
    let mut u = u0.values().to_vec();
    let mean = u.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / vol;
    u.iter_mut().for_each(|v| *v -= mean);
    // warm start for kappa: the mean residual
    let mut kappa = match phi_values(problem, &u) {
        Ok(phi) => {
            (0..n).map(|k| q[k] * (phi[k] - problem.lambda * u[k] - target[k])).sum::<f64>() / vol
        }
        Err(e) => return Err(fail(report, format!("initial guess: {e}"), None)),
    };
    let mut res = residual_vec(problem, target, &u, kappa).map_err(|e| fail(report.clone(), e.to_string(), None))?;
    let mut r = sup_norm(&res);
    report.residuals.push(r);
    for _ in 0..opts.max_iter {
        if r <= opts.tol {
            break;
        }
        let jac = jacobian(problem, &u).map_err(|e| fail(report.clone(), e.to_string(), Some(u.clone())))?;
        let mut big = DMatrix::zeros(n + 1, n + 1);
        big.view_mut((0, 0), (n, n)).copy_from(&jac);
        for k in 0..n {
            big[(k, k)] -= problem.lambda;
            big[(k, n)] = -1.0;
            big[(n, k)] = q[k] / vol;
        }
        let mut rhs = DVector::zeros(n + 1);
        for k in 0..n {
            rhs[k] = -res[k];
        }
        let step = match big.lu().solve(&rhs) {
            Some(s) => s,
            None => return Err(fail(report, "singular bordered Jacobian".into(), Some(u))),
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= opts.min_damping {
            let trial: Vec<f64> = (0..n).map(|k| u[k] + alpha * step[k]).collect();
            let tk = kappa + alpha * step[n];
            if let Ok(tres) = residual_vec(problem, target, &trial, tk) {
                let tr = sup_norm(&tres);
                if tr <= (1.0 - opts.armijo * alpha) * r {
                    accepted = Some((trial, tk, tres, tr));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((nu, nk, nres, nr)) => {
                u = nu;
                kappa = nk;
                res = nres;
                r = nr;
                report.dampings.push(alpha);
                report.residuals.push(r);
                let jv = sup_norm(&jv_field(chart, &u));
                report.jv_slack.push(bound - jv);
            }
            None => {
                return Err(fail(report, "line search exhausted the damping range".into(), Some(u)));
            }
        }
    }
    report.final_residual = r;
    report.kappa = kappa;
    report.positivity_margin = min_block_eigen(chart, &u);
    if r > opts.tol {
        let reason = format!("no convergence after {} iterations (residual {r})", opts.max_iter);
        return Err(fail(report, reason, Some(u)));
    }
    report.converged = true;
    let field = PotentialField::normalized(chart, u).map_err(|e| fail(report.clone(), e.to_string(), None))?;
    Ok((field, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSpec {
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self { ds_init: 0.25, ds_min: 1e-6, ds_max: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuitySolution {
    pub u: PotentialField,
    pub s_values: Vec<f64>,
    pub reports: Vec<NewtonReport>,
    /// Residual of `u = 0` at `s = 0`.
    pub start_residual: f64,
}

impl ContinuitySolution {
    pub fn final_report(&self) -> &NewtonReport {
        self.reports.last().expect("at least one Newton solve")
    }
}

/// `F_{eps,s} = (1 - s) F_{eps,0} + s F_eps`, re-normalized.
pub fn path_target(problem: &MAProblem, s: f64) -> Result<Vec<f64>> {
    let f0 = problem.start_target();
    let f1 = problem.target();
    let fs: Vec<f64> = f0.iter().zip(&f1).map(|(a, b)| (1.0 - s) * a + s * b).collect();
    let c = normalize_c_eps(&problem.chart, &fs, problem.epsilon)?;
    Ok(fs.into_iter().map(|v| v + c).collect())
}

/// Continuity method along the linear path from `F_{eps,0}` to `F_eps`,
/// warm-starting Newton from the previous `s` and halving `ds` on failure.
pub fn continuity_solve(problem: &MAProblem, path: &PathSpec, opts: &NewtonOptions) -> Result<ContinuitySolution> {
    if !(problem.epsilon > 0.0) {
        return Err(Error::InvalidInput("the continuity method requires eps > 0".into()));
    }
    let zero = PotentialField::zero(&problem.chart);
    let t0 = path_target(problem, 0.0)?;
    let phi0 = phi_values(problem, zero.values())?;
    let start_residual = (0..t0.len()).map(|k| (phi0[k] - t0[k]).abs()).fold(0.0, f64::max);
    if start_residual > opts.tol {
        return Err(Error::Invariant(format!("u = 0 does not solve the s = 0 equation: {start_residual}")));
    }
    let mut u = zero;
    let mut s = 0.0;
    let mut ds = path.ds_init.min(path.ds_max);
    let mut s_values = vec![0.0];
    let mut reports = Vec::new();
    while s < 1.0 {
        let next = (s + ds).min(1.0);
        let target = path_target(problem, next)?;
        match newton_solve(problem, &target, &u, opts) {
            Ok((nu, rep)) => {
                u = nu;
                s = next;
                s_values.push(s);
                reports.push(rep);
                ds = (2.0 * ds).min(path.ds_max);
            }
            Err(_) => {
                ds *= 0.5;
                if ds < path.ds_min {
                    return Err(Error::NoSolution(format!("continuation stalled at s = {s}")));
                }
            }
        }
    }
    Ok(ContinuitySolution { u, s_values, reports, start_residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonStep {
    pub epsilon: f64,
    pub c_eps: f64,
    pub kappa: f64,
    pub u: PotentialField,
    pub sup_u: f64,
    /// `min (eps + |V|²_u)`, which tends to zero at the fixed points.
    pub min_v_norm: f64,
    pub report: NewtonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonContinuation {
    pub steps: Vec<EpsilonStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<String>,
}

/// Solve for each `eps` of a decreasing schedule, warm-starting from the
/// previous solution and falling back to the continuity method.
pub fn epsilon_continuation(
    problem: &MAProblem,
    schedule: &[f64],
    path: &PathSpec,
    opts: &NewtonOptions,
) -> Result<EpsilonContinuation> {
    if schedule.iter().any(|e| !(*e > 0.0)) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("eps schedule must be positive and strictly decreasing".into()));
    }
    let mut steps: Vec<EpsilonStep> = Vec::new();
    let mut truncated = None;
    for &eps in schedule {
        let p = problem.with_epsilon(eps)?;
        let target = p.target();
        let warm = steps.last().map(|s| newton_solve(&p, &target, &s.u, opts));
        let solved = match warm {
            Some(Ok(ok)) => Ok(ok),
            _ => continuity_solve(&p, path, opts).map(|c| {
                let rep = c.final_report().clone();
                (c.u, rep)
            }),
        };
        match solved {
            Ok((u, report)) => {
                let v2 = v_norm_sq(&p.chart, u.values());
                steps.push(EpsilonStep {
                    epsilon: eps,
                    c_eps: p.c_eps,
                    kappa: report.kappa,
                    sup_u: sup_norm(u.values()),
                    min_v_norm: v2.iter().map(|v| eps + v).fold(f64::INFINITY, f64::min),
                    u,
                    report,
                });
            }
            Err(e) => {
                truncated = Some(format!("eps = {eps}: {e}"));
                break;
            }
        }
    }
    Ok(EpsilonContinuation { steps, truncated })
}

/// `JV(u) = |V|²_0 du/dtau`.
pub fn jv_field(chart: &InvariantMetricChart, u: &[f64]) -> Vec<f64> {
    let u_t = d_tau(&chart.grid, u);
    (0..u.len()).map(|k| chart.w_inv[k] * u_t[k]).collect()
}

fn jv_bound_value(chart: &InvariantMetricChart) -> f64 {
    4.0 * (chart.grid.tau_max() - chart.grid.tau_min())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JvBound {
    pub sup: f64,
    pub bound: f64,
}

/// `sup |JV(u)| <= 4 (tau_max - tau_min)` up to `tolerance`.
pub fn jv_bound(u: &PotentialField, chart: &InvariantMetricChart, tolerance: f64) -> Result<JvBound> {
    chart.grid.ensure_same(&u.u.grid, "potential")?;
    let sup = sup_norm(&jv_field(chart, u.values()));
    let bound = jv_bound_value(chart);
    if sup > bound + tolerance {
        return Err(Error::Invariant(format!("sup |JV(u)| = {sup} exceeds {bound}")));
    }
    Ok(JvBound { sup, bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianBound {
    pub min_slack: f64,
    pub worst_node: usize,
}

/// Slack of `|∂∂̄u| <= max(m + Delta u, m)` with `m` the complex dimension of
/// the total space, using the eigenvalues of `∂∂̄u` relative to `omega_0`.
pub fn hessian_bound_check(u: &PotentialField, chart: &InvariantMetricChart) -> Result<HessianBound> {
    chart.grid.ensure_same(&u.u.grid, "potential")?;
    let (da, db, c) = block_linear(chart, u.values());
    let m = (chart.n_base() + 1) as f64;
    let mut best = HessianBound { min_slack: f64::INFINITY, worst_node: 0 };
    for k in 0..da.len() {
        let (l1, l2) = if chart.n_base() == 1 {
            let h = chart.h[k];
            let (p, q, r) = (da[k] / h, c[k] / h.sqrt(), db[k]);
            let mid = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            (mid - rad, mid + rad)
        } else {
            (db[k], db[k])
        };
        let trace = if chart.n_base() == 1 { l1 + l2 } else { l1 };
        let norm = l1.abs().max(l2.abs());
        let slack = (m + trace).max(m) - norm;
        if slack < best.min_slack {
            best = HessianBound { min_slack: slack, worst_node: k };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub u: PotentialField,
    /// Bordering constant (`eps > 0` only).
    pub kappa: Option<f64>,
    /// `¼ (|V|²_0 u')'` at the nodes (`eps > 0` only).
    pub phi: Vec<f64>,
    /// Moment value where the `eps = 0` limit concentrates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
}

/// Node-by-node solution of the point-base equation. For `eps > 0`,
/// `1 + phi = eps e^{F_eps + kappa} / (1 - |V|²_0 e^{F_eps + kappa})` with
/// `kappa` fixed by `∑ phi = 0`, then two discrete integrations. For
/// `eps = 0` the limit `1 + phi = L delta(tau - tau*)` with `tau*` the
/// maximizer of `|V|²_0 e^F` is integrated on the interior.
pub fn cp1_closed_form(problem: &MAProblem) -> Result<ClosedForm> {
    let chart = &problem.chart;
    if chart.n_base() != 0 {
        return Err(Error::InvalidInput("the closed form needs a point base".into()));
    }
    if problem.lambda != 0.0 {
        return Err(Error::InvalidInput("the closed form assumes lambda = 0".into()));
    }
    let g = &chart.grid;
    let n = g.n_tau();
    let dt = g.dtau();
    let w = &chart.w_inv;
    let target = problem.target();
    if problem.epsilon == 0.0 {
        return limit_closed_form(problem);
    }
    let eps = problem.epsilon;
    let wt = trapezoid_weights(n, dt);
    let total: f64 = wt.iter().sum();
    let kappa_max = (0..n)
        .filter(|k| w[*k] > 0.0)
        .map(|k| -target[k] - w[k].ln())
        .fold(f64::INFINITY, f64::min);
    let mass = |kappa: f64| -> f64 {
        (0..n)
            .map(|k| {
                let e = (target[k] + kappa).exp();
                let den = 1.0 - w[k] * e;
                if den <= 0.0 {
                    f64::INFINITY
                } else {
                    wt[k] * eps * e / den
                }
            })
            .sum::<f64>()
            - total
    };
    let mut hi = kappa_max;
    let mut lo = kappa_max - 1.0;
    let mut guard = 0;
    while mass(lo) > 0.0 {
        lo -= (kappa_max - lo).max(1.0);
        guard += 1;
        if guard > 200 {
            return Err(Error::NoSolution("no admissible kappa below the pole".into()));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let kappa = 0.5 * (lo + hi);
    let phi: Vec<f64> = (0..n)
        .map(|k| {
            let e = (target[k] + kappa).exp();
            eps * e / (1.0 - w[k] * e) - 1.0
        })
        .collect();
    if phi.iter().any(|p| !p.is_finite() || *p <= -1.0) {
        return Err(Error::NoSolution("denominator sign failure in the reduced equation".into()));
    }
    // ¼ D(w u') = phi with the conservative stencil: fluxes then potentials
    let h2 = dt * dt;
    let mut flux = vec![0.0; n - 1];
    flux[0] = 2.0 * h2 * phi[0];
    for j in 1..n - 1 {
        flux[j] = flux[j - 1] + 4.0 * h2 * phi[j];
    }
    let mut u = vec![0.0; n];
    for j in 0..n - 1 {
        let wm = 0.5 * (w[j] + w[j + 1]);
        u[j + 1] = u[j] + flux[j] / wm;
    }
    Ok(ClosedForm { u: PotentialField::normalized(chart, u)?, kappa: Some(kappa), phi, concentration: None })
}

fn limit_closed_form(problem: &MAProblem) -> Result<ClosedForm> {
    let chart = &problem.chart;
    let g = &chart.grid;
    let (t0, t1) = (g.tau_min(), g.tau_max());
    let len = t1 - t0;
    // maximizer of w e^F, refined by a parabola through the best node
    let score: Vec<f64> = (0..g.n_tau()).map(|k| chart.w_inv[k] * problem.f[k].exp()).collect();
    let best = (0..score.len())
        .max_by(|a, b| score[*a].total_cmp(&score[*b]))
        .unwrap_or(0);
    if best == 0 || best + 1 == score.len() {
        return Err(Error::NoSolution("|V|² e^F has no interior maximum".into()));
    }
    let (sm, s0, sp) = (score[best - 1], score[best], score[best + 1]);
    let curv = sm - 2.0 * s0 + sp;
    let shift = if curv < 0.0 { 0.5 * (sm - sp) / curv } else { 0.0 };
    let star = g.tau_nodes[best] + shift * g.dtau();
    // u' = 4 (L H(tau - tau*) - (tau - tau_min)) / |V|²_0, with |V|²_0
    // interpolated from the chart by cubic Lagrange through nearby nodes
    let nodes = &g.tau_nodes;
    let w = &chart.w_inv;
    let interp = move |t: f64| -> f64 {
        let n = nodes.len();
        let s = ((t - nodes[0]) / (nodes[1] - nodes[0])).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).saturating_sub(1).min(n - 4);
        let mut acc = 0.0;
        for a in i..i + 4 {
            let mut l = 1.0;
            for b in i..i + 4 {
                if a != b {
                    l *= (t - nodes[b]) / (nodes[a] - nodes[b]);
                }
            }
            acc += l * w[a];
        }
        acc
    };
    let slope = |t: f64| -> f64 {
        let heavy = if t > star { len } else { 0.0 };
        4.0 * (heavy - (t - t0)) / interp(t).max(1e-300)
    };
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() };
    let mut u = vec![0.0; g.n_tau()];
    let interior: Vec<usize> = (1..g.n_tau() - 1).collect();
    let right: Vec<f64> = interior.iter().map(|k| nodes[*k]).filter(|t| *t >= star).collect();
    let left: Vec<f64> = interior.iter().rev().map(|k| nodes[*k]).filter(|t| *t < star).collect();
    let run = |outs: &[f64]| -> Result<Vec<f64>> {
        if outs.is_empty() {
            return Ok(Vec::new());
        }
        let sol = integrate(|t, _| Ok(vec![slope(t)]), star, &[0.0], outs, opts, |_, _| None)?;
        Ok(sol.into_iter().map(|y| y[0]).collect())
    };
    let r_vals = run(&right)?;
    let l_vals = run(&left)?;
    for (t, v) in right.iter().zip(r_vals).chain(left.iter().zip(l_vals)) {
        let k = ((t - t0) / g.dtau()).round() as usize;
        u[k] = v;
    }
    // the ends are limits of the interior values
    let n = u.len();
    u[0] = 2.0 * u[1] - u[2];
    u[n - 1] = 2.0 * u[n - 2] - u[n - 3];
    Ok(ClosedForm {
        u: PotentialField::normalized(chart, u)?,
        kappa: None,
        phi: Vec::new(),
        concentration: Some(star),
    })
}
