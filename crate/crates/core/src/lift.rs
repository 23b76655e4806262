//! Lifting a Kähler-Ricci flow trajectory to a V-soliton metric on the total
//! space of a circle bundle, and descending such a metric back to a flow.
//!
//! Along a lift the moment coordinate and the flow time are related by
//! `tau(t) = c (e^{lambda t} - 1)/lambda` (`c t` when `lambda = 0`), the base
//! metric is `h(x, tau(t)) = p(x, t)` and
//! `w = e^{-2 lambda t} (R - n lambda + c e^{lambda t} f'(tau)) / (4 c²)`.

use serde::{Deserialize, Serialize};

use crate::calculus::{dtheta_components, laplacian_invariant, FormComponents, InvariantMetricChart, InvariantScalar};
use crate::diff::{d2_base, d2_tau, d_base, d_tau, sup_norm};
use crate::error::{Error, Result};
use crate::grid::{BaseKind, ChartGrid, EndKind};
use crate::ricci::{ke_residual, scalar_curvature, FlowTrajectory, QuotientMetricProfile, QuotientModel};

/// `tau(t) = c (e^{lambda t} - 1) / lambda`, and `c t` for `lambda = 0`.
pub fn tau_reparam(c: f64, lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        c * t
    } else {
        c * (lambda * t).exp_m1() / lambda
    }
}

/// Inverse of [`tau_reparam`].
pub fn t_of_tau(c: f64, lambda: f64, tau: f64) -> f64 {
    if lambda == 0.0 {
        tau / c
    } else {
        (lambda * tau / c).ln_1p() / lambda
    }
}

/// Flow times at which a trajectory must be sampled so that its lift lands
/// on the uniform moment grid `tau_k = k tau_max / (n_tau - 1)`.
pub fn lift_times(c: f64, lambda: f64, tau_max: f64, n_tau: usize) -> Vec<f64> {
    crate::grid::linspace(0.0, tau_max, n_tau)
        .into_iter()
        .map(|tau| t_of_tau(c, lambda, tau))
        .collect()
}

/// `f(tau)` and `f'(tau)` tabulated on the moment nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTable {
    pub tau: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
}

impl FTable {
    pub fn from_fn(tau: &[f64], f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Self {
        Self {
            tau: tau.to_vec(),
            f: tau.iter().map(|t| f(*t)).collect(),
            df: tau.iter().map(|t| df(*t)).collect(),
        }
    }

    /// Table from derivative samples, integrated by the trapezoid rule with
    /// `f(tau_0) = 0`.
    pub fn from_derivative(tau: &[f64], df: Vec<f64>) -> Self {
        let mut f = vec![0.0; tau.len()];
        for k in 1..tau.len() {
            f[k] = f[k - 1] + 0.5 * (tau[k] - tau[k - 1]) * (df[k] + df[k - 1]);
        }
        Self { tau: tau.to_vec(), f, df }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum FStrategy {
    /// `f = (n - c_low) log(1 + tau) + 2 (1 + tau)²` with `c_low = inf R`.
    FanoDefault,
    /// Smallest pointwise `f'` with `R - n lambda + df/dt >= delta`.
    Margin(f64),
    /// `f = slope * tau`.
    Linear(f64),
}

fn base_kind_for(model: QuotientModel) -> Result<BaseKind> {
    match model {
        QuotientModel::FlatCircle => Ok(BaseKind::Circle),
        QuotientModel::RoundSphere => Ok(BaseKind::RadialSphereChart),
        QuotientModel::RadialPlane { .. } => {
            Err(Error::InvalidInput("lifts are built over one-dimensional quotients".into()))
        }
    }
}

/// `R - n lambda + c e^{lambda t} f'(tau(t))` at every (time, node).
fn constraint_margin(traj: &FlowTrajectory, c: f64, df: &[f64]) -> Vec<Vec<f64>> {
    let n = traj.n_q() as f64;
    traj.times
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let rate = c * (traj.lambda * t).exp();
            traj.scalar_curvature[k]
                .iter()
                .map(|r| r - n * traj.lambda + rate * df[k])
                .collect()
        })
        .collect()
}

fn worst(margins: &[Vec<f64>]) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for (k, row) in margins.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            if *v < best.0 {
                best = (*v, i, k);
            }
        }
    }
    best
}

/// Choose `f(tau)` on the moment values `tau(t_k)` of the trajectory times so
/// that `-R + n lambda - df/dt < 0` everywhere.
pub fn choose_f(traj: &FlowTrajectory, c: f64, strategy: FStrategy) -> Result<FTable> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput("the lift constant c must be positive".into()));
    }
    let lambda = traj.lambda;
    let n = traj.n_q() as f64;
    let tau: Vec<f64> = traj.times.iter().map(|t| tau_reparam(c, lambda, *t)).collect();
    let table = match strategy {
        FStrategy::FanoDefault => {
            let c_low = traj
                .scalar_curvature
                .iter()
                .flatten()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let a = n - c_low;
            FTable::from_fn(
                &tau,
                |t| a * t.ln_1p() + 2.0 * (1.0 + t) * (1.0 + t),
                |t| a / (1.0 + t) + 4.0 * (1.0 + t),
            )
        }
        FStrategy::Margin(delta) => {
            let df = traj
                .times
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let need = traj.scalar_curvature[k]
                        .iter()
                        .map(|r| delta + n * lambda - r)
                        .fold(f64::NEG_INFINITY, f64::max);
                    need / (c * (lambda * t).exp())
                })
                .collect();
            FTable::from_derivative(&tau, df)
        }
        FStrategy::Linear(slope) => FTable::from_fn(&tau, |t| slope * t, |_| slope),
    };
    let margins = constraint_margin(traj, c, &table.df);
    let (value, base, k) = worst(&margins);
    let strict = match strategy {
        FStrategy::Margin(delta) => value >= delta * (1.0 - 1e-12) && value > 0.0,
        _ => value > 0.0,
    };
    if !strict {
        return Err(Error::Constraint {
            what: format!("R - n lambda + df/dt > 0 fails for {strategy:?} at t = {}", traj.times[k]),
            worst: value,
            base,
            tau: k,
        });
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedMetric {
    pub chart: InvariantMetricChart,
    pub f: FTable,
    pub lambda: f64,
    /// Lift constant; `None` for the static product over a Kähler-Einstein base.
    pub c: Option<f64>,
    /// Flow time of every moment node (empty for the static product).
    pub t_of_tau: Vec<f64>,
    pub model: QuotientModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_slopes: Option<[f64; 2]>,
}

impl LiftedMetric {
    pub fn n_base(&self) -> usize {
        self.chart.n_base()
    }

    /// Base profile at moment index `j`.
    pub fn profile_at(&self, j: usize) -> QuotientMetricProfile {
        let g = &self.chart.grid;
        QuotientMetricProfile {
            model: self.model,
            nodes: g.base_nodes.clone(),
            profile: (0..g.n_base()).map(|i| self.chart.h[g.idx(i, j)]).collect(),
            period: g.base_period,
            end_slopes: self.end_slopes,
        }
    }
}

/// Build the lifted chart over a trajectory sampled at `lift_times(c, ...)`.
pub fn lift(traj: &FlowTrajectory, f: &FTable, c: f64) -> Result<LiftedMetric> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput("tau(t) must be increasing: the lift constant c must be positive".into()));
    }
    if let Some(reason) = &traj.termination {
        return Err(Error::InvalidInput(format!("trajectory terminated early: {reason}")));
    }
    let lambda = traj.lambda;
    let tau: Vec<f64> = traj.times.iter().map(|t| tau_reparam(c, lambda, *t)).collect();
    if f.tau.len() != tau.len() || f.tau.iter().zip(&tau).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1.0)) {
        return Err(Error::GridMismatch("f table is not tabulated on tau(t_k)".into()));
    }
    let kind = base_kind_for(traj.model)?;
    let grid = ChartGrid::new(
        kind,
        traj.nodes.clone(),
        tau.clone(),
        EndKind::Free,
        EndKind::Free,
        traj.period,
    )
    .map_err(|e| match e {
        Error::InvalidGrid(m) => Error::InvalidGrid(format!(
            "{m}; sample the trajectory at the times returned by lift_times"
        )),
        other => other,
    })?;
    let margins = constraint_margin(traj, c, &f.df);
    let (value, base, k) = worst(&margins);
    if value <= 0.0 {
        return Err(Error::Constraint {
            what: "w > 0 requires R - n lambda + df/dt > 0".into(),
            worst: value,
            base,
            tau: k,
        });
    }
    let mut h = vec![0.0; grid.len()];
    let mut w_inv = vec![0.0; grid.len()];
    for (j, t) in traj.times.iter().enumerate() {
        let scale = (-2.0 * lambda * t).exp() / (4.0 * c * c);
        for i in 0..grid.n_base() {
            let kk = grid.idx(i, j);
            h[kk] = traj.profiles[j][i];
            w_inv[kk] = 1.0 / (scale * margins[j][i]);
        }
    }
    Ok(LiftedMetric {
        chart: InvariantMetricChart::new(grid, h, w_inv, lambda)?,
        f: f.clone(),
        lambda,
        c: Some(c),
        t_of_tau: traj.times.clone(),
        model: traj.model,
        end_slopes: traj.end_slopes,
    })
}

/// Reading of the fiber moment data in the product lift: `|V|² = |z|²` with
/// `mu = |z|²/2` gives `w_inv = 2 tau`; the alternative reading is `2 tau²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiberReading {
    Linear,
    Quadratic,
}

/// Static product `X x C` over a Kähler-Einstein base with the rotation of
/// `C`: `h(x, tau) = p(x)`, `w_inv = 2 tau`, `f = 2 lambda tau`.
pub fn ke_product_lift(
    ke: &QuotientMetricProfile,
    lambda: f64,
    tau_max: f64,
    n_tau: usize,
    ke_tol: f64,
) -> Result<LiftedMetric> {
    product_lift(ke, lambda, tau_max, n_tau, ke_tol, FiberReading::Linear)
}

/// Product lift under either fiber reading. `f' = 4 lambda tau w` gives
/// `f = 2 lambda tau` (linear) or `f = 2 lambda log tau` (quadratic, which is
/// singular at the fixed point, so that chart starts one step off it).
pub fn product_lift(
    ke: &QuotientMetricProfile,
    lambda: f64,
    tau_max: f64,
    n_tau: usize,
    ke_tol: f64,
    reading: FiberReading,
) -> Result<LiftedMetric> {
    let r = ke_residual(ke, lambda)?;
    if r > ke_tol {
        return Err(Error::InvalidInput(format!(
            "base is not Kähler-Einstein for lambda = {lambda}: residual {r} > {ke_tol}"
        )));
    }
    let kind = base_kind_for(ke.model)?;
    let (range, start) = match reading {
        FiberReading::Linear => ((0.0, tau_max), EndKind::FixedPoint),
        FiberReading::Quadratic => ((tau_max / (n_tau as f64), tau_max), EndKind::Free),
    };
    let grid = ChartGrid::new(
        kind,
        ke.nodes.clone(),
        crate::grid::linspace(range.0, range.1, n_tau),
        start,
        EndKind::Free,
        ke.period,
    )?;
    let mut h = vec![0.0; grid.len()];
    let mut w_inv = vec![0.0; grid.len()];
    for i in 0..grid.n_base() {
        for (j, t) in grid.tau_nodes.iter().enumerate() {
            let k = grid.idx(i, j);
            h[k] = ke.profile[i];
            w_inv[k] = match reading {
                FiberReading::Linear => 2.0 * t,
                FiberReading::Quadratic => 2.0 * t * t,
            };
        }
    }
    let chart = InvariantMetricChart::new(grid.clone(), h, w_inv, lambda)?;
    let f = match reading {
        FiberReading::Linear => FTable::from_fn(&grid.tau_nodes, |t| 2.0 * lambda * t, |_| 2.0 * lambda),
        FiberReading::Quadratic => {
            FTable::from_fn(&grid.tau_nodes, |t| 2.0 * lambda * t.ln(), |t| 2.0 * lambda / t)
        }
    };
    Ok(LiftedMetric {
        chart,
        f,
        lambda,
        c: None,
        t_of_tau: Vec::new(),
        model: ke.model,
        end_slopes: ke.end_slopes,
    })
}

/// Slope of `w_inv` at the fixed point; smoothness of the rotation of `C`
/// with `mu = |z|²/2` forces 2.
pub fn fixed_point_slope(reading: FiberReading) -> f64 {
    match reading {
        FiberReading::Linear => 2.0,
        FiberReading::Quadratic => 0.0,
    }
}

/// `gamma = dtheta` of the lifted chart.
pub fn gamma(lifted: &LiftedMetric) -> Result<FormComponents> {
    dtheta_components(&lifted.chart)
}

/// `h_tau_tau + 4 w_zz̄`: vanishes iff `gamma` is closed.
pub fn closedness_residual(lifted: &LiftedMetric) -> Result<InvariantScalar> {
    let [_, _, third] = crate::calculus::integrability_residuals(&lifted.chart)?;
    Ok(third)
}

/// `Q = w_inv (d_tau log det h - f')`.
fn q_field(lifted: &LiftedMetric) -> Result<Vec<f64>> {
    let g = &lifted.chart.grid;
    let log_h: Vec<f64> = if lifted.n_base() == 1 {
        lifted.chart.h.iter().map(|v| v.ln()).collect()
    } else {
        vec![0.0; g.len()]
    };
    let dlog = d_tau(g, &log_h);
    let mut q = vec![0.0; g.len()];
    for k in 0..g.len() {
        let (_, j) = g.split(k);
        q[k] = lifted.chart.w_inv[k] * (dlog[k] - lifted.f.df[j]);
    }
    if let Some(k) = q.iter().position(|v| !v.is_finite()) {
        let (base, tau) = g.split(k);
        return Err(Error::NonFinite { what: "w_inv (d log h - f')".into(), base, tau });
    }
    Ok(q)
}

/// Sup-norms of the four parts of the reduced V-soliton system:
/// (i) `4 Ric - Q d_tau h - 4 lambda h`, (ii)/(iii) `d_z Q`, `d_z̄ Q`,
/// (iv) `d_tau Q + 4 lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VSolitonReport {
    pub parts: [f64; 4],
}

impl VSolitonReport {
    pub fn max(&self) -> f64 {
        self.parts.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn vsoliton_residual(lifted: &LiftedMetric) -> Result<VSolitonReport> {
    let g = &lifted.chart.grid;
    for k in 0..g.len() {
        let (base, tau) = g.split(k);
        if !g.is_fixed_point(tau) && lifted.chart.w_inv[k] <= 0.0 {
            return Err(Error::Degenerate { base, tau });
        }
    }
    let lambda = lifted.lambda;
    let q = q_field(lifted)?;
    let dq = d_tau(g, &q);
    let p4: Vec<f64> = dq.iter().map(|v| v + 4.0 * lambda).collect();
    let mut parts = [0.0, 0.0, 0.0, sup_norm(&p4)];
    if lifted.n_base() == 1 {
        let h = &lifted.chart.h;
        let log_h: Vec<f64> = h.iter().map(|v| v.ln()).collect();
        let ric: Vec<f64> = d2_base(g, &log_h).iter().map(|v| -0.25 * v).collect();
        let h_t = d_tau(g, h);
        let p1: Vec<f64> = (0..g.len())
            .map(|k| 4.0 * ric[k] - q[k] * h_t[k] - 4.0 * lambda * h[k])
            .collect();
        let qz: Vec<f64> = d_base(g, &q).iter().map(|v| 0.5 * v).collect();
        parts[0] = sup_norm(&p1);
        parts[1] = sup_norm(&qz);
        parts[2] = parts[1];
    }
    Ok(VSolitonReport { parts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentResult {
    pub trajectory: FlowTrajectory,
    /// Level `a` the descent starts from and its moment index.
    pub a: f64,
    pub a_index: usize,
    /// `c_k` averaged over the level set, with per-node values.
    pub c_k: f64,
    pub c_values: Vec<f64>,
    /// `(max - min) / |c_k|` over the level set (absolute spread when `c_k = 0`).
    pub c_spread: f64,
    pub static_branch: bool,
    /// Sup of `dh/dt + Ric - lambda h` (flowing) or the KE residual (static).
    pub flow_residual: f64,
    /// Sup of `¼ Q + lambda (tau - a) + c_k`.
    pub identity_residual: f64,
    pub vsoliton: VSolitonReport,
    pub f: FTable,
    pub lambda: f64,
    /// `w_inv` and `d_tau log h` on the descended range, for the positivity
    /// identity.
    pub w_inv: Vec<Vec<f64>>,
    pub dlog_h: Vec<Vec<f64>>,
}

/// `c_k = -¼ Delta tau + ¼ d_tau w_inv + ¼ w_inv f'` on the level `tau_j`.
pub fn c_on_level(lifted: &LiftedMetric, j: usize) -> Result<Vec<f64>> {
    let g = &lifted.chart.grid;
    let tau = InvariantScalar::from_fn(g, |_, t| t)?;
    let lap = laplacian_invariant(&lifted.chart, &tau)?;
    let dw = d_tau(g, &lifted.chart.w_inv);
    Ok((0..g.n_base())
        .map(|i| {
            let k = g.idx(i, j);
            -0.25 * lap.values[k] + 0.25 * dw[k] + 0.25 * lifted.chart.w_inv[k] * lifted.f.df[j]
        })
        .collect())
}

pub fn descend(lifted: &LiftedMetric, a: f64) -> Result<DescentResult> {
    let g = &lifted.chart.grid;
    let dt = g.dtau();
    let ja = ((a - g.tau_min()) / dt).round();
    if ja < 0.0 || ja as usize >= g.n_tau() || (g.tau_min() + ja * dt - a).abs() > 1e-9 * dt {
        return Err(Error::InvalidInput(format!("level {a} is not a moment node of the chart")));
    }
    let ja = ja as usize;
    for j in ja..g.n_tau() {
        if g.is_fixed_point(j) {
            return Err(Error::InvalidInput(format!(
                "descent range [{a}, {}] contains a fixed-point level",
                g.tau_max()
            )));
        }
    }
    if g.n_tau() - ja < 3 {
        return Err(Error::InvalidInput("descent needs at least three moment levels".into()));
    }
    let lambda = lifted.lambda;
    let c_values = c_on_level(lifted, ja)?;
    let c_k = c_values.iter().sum::<f64>() / c_values.len() as f64;
    let (lo, hi) = c_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let c_spread = if c_k != 0.0 { (hi - lo) / c_k.abs() } else { hi - lo };

    let h_t = d_tau(g, &lifted.chart.h);
    let h_scale = sup_norm(&lifted.chart.h).max(1e-300);
    let static_branch = lifted.n_base() == 0 || sup_norm(&h_t) <= 1e-12 * h_scale;

    let q = q_field(lifted)?;
    let log_h: Vec<f64> = if lifted.n_base() == 1 {
        lifted.chart.h.iter().map(|v| v.ln()).collect()
    } else {
        vec![0.0; g.len()]
    };
    let dlog = d_tau(g, &log_h);
    let ric: Vec<f64> = d2_base(g, &log_h).iter().map(|v| -0.25 * v).collect();

    let mut times = Vec::new();
    let mut profiles = Vec::new();
    let mut curv = Vec::new();
    let mut volumes = Vec::new();
    let mut flow_res = 0.0_f64;
    let mut ident = 0.0_f64;
    let mut w_inv = Vec::new();
    let mut dlog_h = Vec::new();
    let mut ke = 0.0_f64;
    for j in ja..g.n_tau() {
        let s = g.tau_nodes[j] - g.tau_nodes[ja];
        let rate = c_k + lambda * s;
        let t = if static_branch && c_k.abs() < 1e-12 {
            s
        } else {
            if !(rate > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "dtau/dt = c_k + lambda (tau - a) = {rate} is not positive at tau = {}",
                    g.tau_nodes[j]
                )));
            }
            t_of_tau(c_k, lambda, s)
        };
        let prof = lifted.profile_at(j);
        if lifted.n_base() == 1 {
            curv.push(scalar_curvature(&prof)?);
            if static_branch {
                ke = ke.max(ke_residual(&prof, lambda)?);
            }
        } else {
            curv.push(vec![0.0; g.n_base()]);
        }
        volumes.push(prof.volume());
        let mut wrow = Vec::new();
        let mut drow = Vec::new();
        for i in 0..g.n_base() {
            let k = g.idx(i, j);
            if lifted.n_base() == 1 && !static_branch {
                flow_res = flow_res.max((h_t[k] * rate + ric[k] - lambda * lifted.chart.h[k]).abs());
            }
            ident = ident.max((0.25 * q[k] + lambda * s + c_k).abs());
            wrow.push(lifted.chart.w_inv[k]);
            drow.push(dlog[k]);
        }
        w_inv.push(wrow);
        dlog_h.push(drow);
        times.push(t);
        profiles.push(prof.profile);
    }
    if static_branch {
        flow_res = ke;
    }
    let f = FTable {
        tau: lifted.f.tau[ja..].to_vec(),
        f: lifted.f.f[ja..].to_vec(),
        df: lifted.f.df[ja..].to_vec(),
    };
    Ok(DescentResult {
        trajectory: FlowTrajectory {
            model: lifted.model,
            nodes: g.base_nodes.clone(),
            period: g.base_period,
            end_slopes: lifted.end_slopes,
            lambda,
            times,
            profiles,
            scalar_curvature: curv,
            volumes,
            termination: None,
        },
        a,
        a_index: ja,
        c_k,
        c_values,
        c_spread,
        static_branch,
        flow_residual: flow_res,
        identity_residual: ident,
        vsoliton: vsoliton_residual(lifted)?,
        f,
        lambda,
        w_inv,
        dlog_h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    /// `min (R - n lambda + df/dt)` over the descended flow.
    pub min_margin: f64,
    /// `sup |margin - ¼ w_inv (f' - d_tau log h)²|`.
    pub sos_residual: f64,
    /// Time indices where the margin is within `equality_tol` of zero,
    /// with the KE residual of the profile there.
    pub equality: Vec<(usize, f64)>,
}

pub fn positivity_check(descent: &DescentResult, equality_tol: f64) -> Result<PositivityReport> {
    let traj = &descent.trajectory;
    let n = traj.n_q() as f64;
    let lambda = descent.lambda;
    let tau0 = descent.f.tau[0];
    let mut min_margin = f64::INFINITY;
    let mut sos_res = 0.0_f64;
    let mut equality = Vec::new();
    for (k, r_row) in traj.scalar_curvature.iter().enumerate() {
        let rate = descent.c_k + lambda * (descent.f.tau[k] - tau0);
        let df = descent.f.df[k];
        let mut row_min = f64::INFINITY;
        for (i, r) in r_row.iter().enumerate() {
            let margin = r - n * lambda + df * rate;
            let d = df - descent.dlog_h[k][i];
            let sos = 0.25 * descent.w_inv[k][i] * d * d;
            sos_res = sos_res.max((margin - sos).abs());
            row_min = row_min.min(margin);
        }
        min_margin = min_margin.min(row_min);
        if row_min.abs() <= equality_tol {
            let prof = traj.profile_at(k);
            equality.push((k, ke_residual(&prof, lambda)?));
        }
    }
    Ok(PositivityReport { min_margin, sos_residual: sos_res, equality })
}

/// Residuals of the mean-curvature form of the moment evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFlowReport {
    /// `sup |dtau/dt - (H |V|/4 + ⅛ d_tau w_inv + ¼ w_inv f')|`.
    pub residual: f64,
    /// `sup |(H |V|/4 + ⅛ d_tau w_inv + ¼ w_inv f') + ¼ Q|`.
    pub consistency: f64,
}

/// `H` is the geometric mean curvature of the levels computed from the
/// second fundamental form; `dtau/dt = c + lambda tau` along a lift
/// (`lambda tau` for the static product).
pub fn mean_flow_check(lifted: &LiftedMetric) -> Result<MeanFlowReport> {
    let g = &lifted.chart.grid;
    let q = q_field(lifted)?;
    let dw = d_tau(g, &lifted.chart.w_inv);
    let mut residual = 0.0_f64;
    let mut consistency = 0.0_f64;
    for j in 0..g.n_tau() {
        if g.is_fixed_point(j) {
            continue;
        }
        let h = crate::calculus::mean_curvature(&lifted.chart, j)?;
        let tau = g.tau_nodes[j];
        let rate = match lifted.c {
            Some(c) => c + lifted.lambda * tau,
            None => lifted.lambda * tau,
        };
        for i in 0..g.n_base() {
            let k = g.idx(i, j);
            let wi = lifted.chart.w_inv[k];
            let bracket =
                h.from_second_fundamental_form[i] * wi.sqrt() / 4.0 + dw[k] / 8.0 + wi * lifted.f.df[j] / 4.0;
            residual = residual.max((rate - bracket).abs());
            consistency = consistency.max((bracket + 0.25 * q[k]).abs());
        }
    }
    Ok(MeanFlowReport { residual, consistency })
}

/// Cubic Hermite interpolation of a trajectory in time, using
/// `dp/dt = (lambda - R) p` for the slopes.
pub fn interpolate_profile(traj: &FlowTrajectory, t: f64) -> Result<Vec<f64>> {
    let times = &traj.times;
    let n = times.len();
    if n < 2 || t < times[0] - 1e-12 || t > times[n - 1] + 1e-12 {
        return Err(Error::InvalidInput(format!("time {t} outside the trajectory")));
    }
    let k = match times.iter().position(|s| *s > t) {
        Some(0) => 0,
        Some(k) => k - 1,
        None => n - 2,
    };
    let (t0, t1) = (times[k], times[k + 1]);
    let hh = t1 - t0;
    let s = ((t - t0) / hh).clamp(0.0, 1.0);
    let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
    let h10 = s * s * s - 2.0 * s * s + s;
    let h01 = -2.0 * s * s * s + 3.0 * s * s;
    let h11 = s * s * s - s * s;
    let lambda = traj.lambda;
    let slope = |j: usize, i: usize| (lambda - traj.scalar_curvature[j][i]) * traj.profiles[j][i];
    Ok((0..traj.nodes.len())
        .map(|i| {
            h00 * traj.profiles[k][i]
                + h10 * hh * slope(k, i)
                + h01 * traj.profiles[k + 1][i]
                + h11 * hh * slope(k + 1, i)
        })
        .collect())
}

/// `sup |h_descended(t) - h_T(t_a + t)|` over the descended times.
pub fn round_trip_error(original: &FlowTrajectory, descent: &DescentResult, t_a: f64) -> Result<f64> {
    let mut err = 0.0_f64;
    for (k, t) in descent.trajectory.times.iter().enumerate() {
        let target = (t_a + t).min(*original.times.last().unwrap());
        let p = interpolate_profile(original, target)?;
        for (a, b) in p.iter().zip(&descent.trajectory.profiles[k]) {
            err = err.max((a - b).abs());
        }
    }
    Ok(err)
}

/// Second moment-derivative of `h`, exposed for refinement studies.
pub fn h_tau_tau(lifted: &LiftedMetric) -> Vec<f64> {
    d2_tau(&lifted.chart.grid, &lifted.chart.h)
}
