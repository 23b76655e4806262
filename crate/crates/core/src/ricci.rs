//! Normalized Kähler-Ricci flow `d omega/dt = -Ric + lambda omega` on
//! one-dimensional reductions of symmetric quotients.
//!
//! Curvature convention: for a Hermitian coefficient `p = h_{11̄}` in a
//! holomorphic coordinate `z = x + iy` (fields independent of `y`),
//! `Ric_{11̄} = -d_z d_z̄ log p = -¼ (log p)_xx` and `R = Ric_{11̄} / p`.
//! This is `K/2` for the Gaussian curvature `K` of `p |dz|²`; see
//! [`RIEMANNIAN_SCALAR_PER_R`]. With it, `d_t log det h = -R + n lambda`, so
//! the flow on a curve is `d_t p = (lambda - R) p = lambda p + ¼ (log p)_xx`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diff::{d1, d2};
use crate::error::{Error, Result};
use crate::grid::linspace;

/// Riemannian scalar curvature of `p |dz|²` divided by `R`.
pub const RIEMANNIAN_SCALAR_PER_R: f64 = 4.0;

/// RK4 real-axis stability radius.
const RK4_RADIUS: f64 = 2.785;
const STABILITY_SAFETY: f64 = 0.9;
const BLOW_UP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum QuotientModel {
    /// Rotationally symmetric sphere in the cylinder chart `s = log|zeta|`,
    /// truncated to `[-L, L]`. The slope of `log p` is prescribed at both
    /// ends (the flux through the cut circles), which keeps the discrete
    /// Kähler class fixed.
    RoundSphere,
    /// Periodic coordinate on a flat circle / torus slice.
    FlatCircle,
    /// `U(m)`-invariant metric on `C^m` with potential `U(s)`, `s = |w|²`;
    /// the profile is `U'(s)`.
    RadialPlane { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientMetricProfile {
    pub model: QuotientModel,
    pub nodes: Vec<f64>,
    pub profile: Vec<f64>,
    /// Period of the coordinate for [`QuotientModel::FlatCircle`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// Prescribed `(log p)'` at the two ends for [`QuotientModel::RoundSphere`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_slopes: Option<[f64; 2]>,
}

impl QuotientMetricProfile {
    pub fn new(model: QuotientModel, nodes: Vec<f64>, profile: Vec<f64>, period: Option<f64>) -> Result<Self> {
        if nodes.len() < 4 || nodes.len() != profile.len() {
            return Err(Error::InvalidGrid("profile needs at least 4 nodes matching its samples".into()));
        }
        let h = (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64;
        for (k, x) in nodes.iter().enumerate() {
            if h <= 0.0 || (x - nodes[0] - k as f64 * h).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::InvalidGrid("profile nodes must be uniform and increasing".into()));
            }
        }
        if let QuotientModel::FlatCircle = model {
            let p = period.ok_or_else(|| Error::InvalidGrid("flat circle requires a period".into()))?;
            if (p - h * nodes.len() as f64).abs() > 1e-9 * p {
                return Err(Error::InvalidGrid("period inconsistent with spacing".into()));
            }
        }
        if let QuotientModel::RadialPlane { m } = model {
            if m == 0 || nodes[0] < 0.0 {
                return Err(Error::InvalidInput("radial plane needs m >= 1 and s >= 0".into()));
            }
        }
        check_profile(&profile)?;
        let end_slopes = match model {
            QuotientModel::RoundSphere => {
                let logp: Vec<f64> = profile.iter().map(|p| p.ln()).collect();
                let d = d1(&logp, h, false);
                Some([d[0], d[d.len() - 1]])
            }
            _ => None,
        };
        Ok(Self { model, nodes, profile, period, end_slopes })
    }

    /// Uniform periodic samples of `f` on `[0, period)`.
    pub fn flat_circle(n: usize, period: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = period / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let profile = nodes.iter().map(|x| f(*x)).collect();
        Self::new(QuotientModel::FlatCircle, nodes, profile, Some(period))
    }

    /// Analytic Kähler-Einstein sphere `p = sech²(s) / (2 lambda)` (`R = lambda`).
    pub fn round_sphere(n: usize, half_width: f64, lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::InvalidInput("round sphere needs lambda > 0".into()));
        }
        let nodes = linspace(-half_width, half_width, n);
        let profile = nodes.iter().map(|s| round_profile(*s, lambda)).collect();
        let mut q = Self::new(QuotientModel::RoundSphere, nodes, profile, None)?;
        let t = half_width.tanh();
        q.end_slopes = Some([2.0 * t, -2.0 * t]);
        Ok(q)
    }

    pub fn n_q(&self) -> usize {
        match self.model {
            QuotientModel::RadialPlane { m } => m,
            _ => 1,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.model, QuotientModel::FlatCircle)
    }

    pub fn spacing(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    pub fn with_profile(&self, profile: Vec<f64>) -> Result<Self> {
        check_profile(&profile)?;
        if profile.len() != self.nodes.len() {
            return Err(Error::GridMismatch("profile length".into()));
        }
        Ok(Self { profile, ..self.clone() })
    }

    /// Total area `sum p dx` (trapezoid for bounded charts).
    pub fn volume(&self) -> f64 {
        let h = self.spacing();
        let n = self.profile.len();
        let s: f64 = self.profile.iter().sum();
        if self.is_periodic() {
            s * h
        } else {
            (s - 0.5 * (self.profile[0] + self.profile[n - 1])) * h
        }
    }
}

pub fn round_profile(s: f64, lambda: f64) -> f64 {
    let c = s.cosh();
    1.0 / (2.0 * lambda * c * c)
}

fn check_profile(p: &[f64]) -> Result<()> {
    for (index, v) in p.iter().enumerate() {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::NonPositiveProfile { index, value: *v });
        }
    }
    Ok(())
}

/// Second difference of `log p` with the model's boundary treatment: periodic,
/// or a ghost-node stencil carrying the prescribed end slopes (conservative:
/// the trapezoid sum telescopes to the slope difference).
fn d2_log(q: &QuotientMetricProfile, p: &[f64]) -> Vec<f64> {
    let ell: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let h = q.spacing();
    let mut dd = d2(&ell, h, q.is_periodic());
    if let Some([g0, g1]) = q.end_slopes {
        let n = ell.len();
        dd[0] = (2.0 * (ell[1] - ell[0]) - 2.0 * h * g0) / (h * h);
        dd[n - 1] = (2.0 * (ell[n - 2] - ell[n - 1]) + 2.0 * h * g1) / (h * h);
    }
    dd
}

/// `R = -(log p)_xx / (4p)` for curves; the radial formula
/// `R = -(m-1) L'/p - (s L')'/(s p)'`, `L = log(p^{m-1} (s p)')`, on `C^m`.
pub fn scalar_curvature(q: &QuotientMetricProfile) -> Result<Vec<f64>> {
    check_profile(&q.profile)?;
    let h = q.spacing();
    match q.model {
        QuotientModel::RadialPlane { m } => {
            // L' = (m-1) p'/p + (sp)''/(sp)' and (sL')' = L' + s L'', written
            // in derivatives of p so no difference is nested more than once.
            let mf = m as f64 - 1.0;
            let p = &q.profile;
            let p1 = d1(p, h, false);
            let p2 = d2(p, h, false);
            let p3 = d1(&p2, h, false);
            let mut out = Vec::with_capacity(p.len());
            for (k, &s) in q.nodes.iter().enumerate() {
                let a1 = p[k] + s * p1[k];
                if a1 <= 0.0 {
                    return Err(Error::NonPositiveProfile { index: k, value: a1 });
                }
                let a2 = 2.0 * p1[k] + s * p2[k];
                let a3 = 3.0 * p2[k] + s * p3[k];
                let l1 = mf * p1[k] / p[k] + a2 / a1;
                let l2 = mf * (p2[k] / p[k] - (p1[k] / p[k]).powi(2)) + a3 / a1 - (a2 / a1).powi(2);
                out.push(-mf * l1 / p[k] - (l1 + s * l2) / a1);
            }
            Ok(out)
        }
        _ => {
            let dd = d2_log(q, &q.profile);
            Ok(dd.iter().zip(&q.profile).map(|(d, p)| -0.25 * d / p).collect())
        }
    }
}

/// `Ric_{11̄} - lambda p` per node.
pub fn ke_defect(q: &QuotientMetricProfile, lambda: f64) -> Result<Vec<f64>> {
    let r = scalar_curvature(q)?;
    Ok(r.iter().zip(&q.profile).map(|(r, p)| (r - lambda) * p).collect())
}

/// `sup |Ric - lambda omega|` in the reduced chart.
pub fn ke_residual(q: &QuotientMetricProfile, lambda: f64) -> Result<f64> {
    let d = ke_defect(q, lambda)?;
    Ok(d.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Discrete Kähler-Einstein sphere: solves `¼ D²(log p) + lambda p = 0` at
/// every node with the analytic end slopes, so the discrete flow is
/// stationary to solver precision.
pub fn ke_sphere_profile(n: usize, half_width: f64, lambda: f64) -> Result<QuotientMetricProfile> {
    let mut q = QuotientMetricProfile::round_sphere(n, half_width, lambda)?;
    let h = q.spacing();
    let h2 = h * h;
    for _ in 0..50 {
        let dd = d2_log(&q, &q.profile);
        let res: Vec<f64> = (0..n).map(|i| 0.25 * dd[i] + lambda * q.profile[i]).collect();
        let norm = res.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if norm < 1e-15 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            jac[(r, r)] = -0.5 / h2 + lambda * q.profile[r];
            if r > 0 {
                jac[(r, r - 1)] = if r + 1 == n { 0.5 / h2 } else { 0.25 / h2 };
            }
            if r + 1 < n {
                jac[(r, r + 1)] = if r == 0 { 0.5 / h2 } else { 0.25 / h2 };
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_vec(res))
            .ok_or_else(|| Error::LinearSolve("singular KE Jacobian".into()))?;
        for r in 0..n {
            q.profile[r] *= (-step[r]).exp();
        }
    }
    check_profile(&q.profile)?;
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub model: QuotientModel,
    pub nodes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_slopes: Option<[f64; 2]>,
    pub lambda: f64,
    pub times: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    pub scalar_curvature: Vec<Vec<f64>>,
    /// Total area at each recorded time.
    pub volumes: Vec<f64>,
    /// Set when the integration stopped early (blow-up or collapse).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
}

impl FlowTrajectory {
    pub fn profile_at(&self, k: usize) -> QuotientMetricProfile {
        QuotientMetricProfile {
            model: self.model,
            nodes: self.nodes.clone(),
            profile: self.profiles[k].clone(),
            period: self.period,
            end_slopes: self.end_slopes,
        }
    }

    pub fn n_q(&self) -> usize {
        self.profile_at(0).n_q()
    }

    /// Whether the total volume never increased between steps on which
    /// `R > 0` at every node.
    pub fn volume_monotone_where_positive(&self) -> bool {
        (1..self.times.len()).all(|k| {
            let positive = self.scalar_curvature[k - 1].iter().all(|r| *r > 0.0);
            !positive || self.volumes[k] <= self.volumes[k - 1] * (1.0 + 1e-12)
        })
    }
}

/// Maximum stable RK4 step for the profile.
pub fn stability_bound(q: &QuotientMetricProfile) -> f64 {
    let pmin = q.profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let h = q.spacing();
    STABILITY_SAFETY * RK4_RADIUS * pmin * h * h
}

fn flow_rhs(q: &QuotientMetricProfile, p: &[f64], lambda: f64) -> Vec<f64> {
    let dd = d2_log(q, p);
    p.iter().zip(&dd).map(|(p, d)| lambda * p + 0.25 * d).collect()
}

fn rk4_step(q: &QuotientMetricProfile, p: &[f64], lambda: f64, dt: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
    let k1 = flow_rhs(q, p, lambda);
    let k2 = flow_rhs(q, &add(p, &k1, 0.5 * dt), lambda);
    let k3 = flow_rhs(q, &add(p, &k2, 0.5 * dt), lambda);
    let k4 = flow_rhs(q, &add(p, &k3, dt), lambda);
    (0..p.len())
        .map(|i| p[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn blown_up(p: &[f64]) -> Option<String> {
    if let Some(k) = p.iter().position(|v| !v.is_finite()) {
        return Some(format!("non-finite profile at node {k}"));
    }
    if let Some(k) = p.iter().position(|v| *v <= 0.0) {
        return Some(format!("profile collapsed at node {k}"));
    }
    if let Some(k) = p.iter().position(|v| *v > BLOW_UP) {
        return Some(format!("profile blew up at node {k}"));
    }
    None
}

/// Integrate from `t = 0` and record the state at every entry of `times`
/// (increasing, first entry may be 0). Steps between outputs are uniform and
/// at most `dt_max`; `dt_max` must respect the stability bound of the initial
/// profile, and every step is re-checked against the current profile.
pub fn krf_integrate_at(
    initial: &QuotientMetricProfile,
    lambda: f64,
    times: &[f64],
    dt_max: f64,
) -> Result<FlowTrajectory> {
    if initial.n_q() != 1 {
        return Err(Error::InvalidInput("flow integration supports one-dimensional quotients only".into()));
    }
    if !(dt_max > 0.0) {
        return Err(Error::InvalidInput("time step must be positive".into()));
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("output times must be non-negative and increasing".into()));
    }
    let bound = stability_bound(initial);
    if dt_max > bound {
        return Err(Error::Stability { dt: dt_max, bound });
    }
    let mut traj = FlowTrajectory {
        model: initial.model,
        nodes: initial.nodes.clone(),
        period: initial.period,
        end_slopes: initial.end_slopes,
        lambda,
        times: Vec::new(),
        profiles: Vec::new(),
        scalar_curvature: Vec::new(),
        volumes: Vec::new(),
        termination: None,
    };
    let mut p = initial.profile.clone();
    let mut t = 0.0;
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / dt_max).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            for _ in 0..steps {
                let cur = initial.with_profile(p.clone());
                let bound = match &cur {
                    Ok(c) => stability_bound(c),
                    Err(_) => 0.0,
                };
                if dt > bound {
                    traj.termination = Some(format!("time step {dt} exceeds stability bound {bound} at t = {t}"));
                    return Ok(traj);
                }
                p = rk4_step(initial, &p, lambda, dt);
                t += dt;
                if let Some(reason) = blown_up(&p) {
                    traj.termination = Some(format!("{reason} at t = {t}"));
                    return Ok(traj);
                }
            }
        }
        t = target;
        let q = initial.with_profile(p.clone())?;
        traj.times.push(target);
        traj.scalar_curvature.push(scalar_curvature(&q)?);
        traj.volumes.push(q.volume());
        traj.profiles.push(p.clone());
    }
    Ok(traj)
}

/// Fixed-step integration to `t_end`, recording every step.
pub fn krf_integrate(initial: &QuotientMetricProfile, lambda: f64, t_end: f64, dt: f64) -> Result<FlowTrajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidInput("need dt > 0 and t_end >= 0".into()));
    }
    let steps = (t_end / dt).ceil() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| (k as f64 * dt).min(t_end)).collect();
    let mut times = times;
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    krf_integrate_at(initial, lambda, &times, dt)
}

/// Progress line `t=<..> sup|R-lambda n|=<..>` for each recorded time.
pub fn progress_lines(traj: &FlowTrajectory) -> Vec<String> {
    let n = traj.n_q() as f64;
    traj.times
        .iter()
        .zip(&traj.scalar_curvature)
        .map(|(t, r)| {
            let gap = r.iter().fold(0.0_f64, |m, v| m.max((v - traj.lambda * n).abs()));
            format!("t={t:.16e} sup|R-λn|={gap:.16e}")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_profile_has_zero_curvature() {
        let q = QuotientMetricProfile::flat_circle(16, 1.0, |_| 2.5).unwrap();
        assert!(scalar_curvature(&q).unwrap().iter().all(|r| *r == 0.0));
    }

    #[test]
    fn rejects_non_positive_profile() {
        let q = QuotientMetricProfile::flat_circle(8, 1.0, |x| x - 0.5);
        assert!(matches!(q, Err(Error::NonPositiveProfile { .. })));
    }

    #[test]
    fn discrete_ke_sphere_is_exact_on_interior() {
        let q = ke_sphere_profile(65, 3.0, 1.0).unwrap();
        assert!(ke_residual(&q, 1.0).unwrap() < 1e-12);
    }
}
