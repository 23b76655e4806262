//! Discrete calculus for circle-invariant Kähler metrics in moment-map
//! coordinates `(z, tau, theta)`:
//!
//! `g = h dz dz̄ + w dtau² + w⁻¹ theta²`, `omega = (i/2) h dz∧dz̄ - dtau∧theta`.
//!
//! Fields depend on `x = Re z` and `tau` only, so `d_z d_z̄ = ¼ d_xx` and
//! `d_z = d_z̄ = ½ d_x` on them. `w_inv = |V|²`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diff::{d2_base, d2_tau, d_base, d_tau, div_flux_tau};
use crate::error::{Error, Result};
use crate::grid::{BaseKind, ChartGrid};
use crate::ode::{integrate, OdeOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Metric data `(h, w_inv)` on a chart grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantMetricChart {
    pub grid: ChartGrid,
    /// Base coefficient `h_{11̄}`; identically 1 and unused when the base is a point.
    pub h: Vec<f64>,
    pub w_inv: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantScalar {
    pub grid: ChartGrid,
    pub values: Vec<f64>,
}

impl InvariantScalar {
    pub fn new(grid: ChartGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "scalar has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (base, tau) = grid.split(k);
            return Err(Error::NonFinite { what: "scalar samples".into(), base, tau });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &ChartGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::new(grid.clone(), grid.sample(f))
    }

    pub fn constant(grid: &ChartGrid, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn sup_norm(&self) -> f64 {
        crate::diff::sup_norm(&self.values)
    }

    pub fn at(&self, base: usize, tau: usize) -> f64 {
        self.values[self.grid.idx(base, tau)]
    }
}

/// Frame elements for 2-forms on an invariant chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis2 {
    DzDzbar,
    DtauDz,
    DtauDzbar,
    DtauTheta,
    DzTheta,
    DzbarTheta,
}

/// Complex coefficients of a 2-form in the [`Basis2`] frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FormComponents {
    pub grid: ChartGrid,
    pub terms: BTreeMap<Basis2, Vec<Complex64>>,
    /// Tau indices whose values were extrapolated from the interior because
    /// `w` is infinite there.
    pub extrapolated_tau: Vec<usize>,
}

impl FormComponents {
    pub fn get(&self, b: Basis2) -> Option<&[Complex64]> {
        self.terms.get(&b).map(|v| v.as_slice())
    }

    /// Coefficient array, zeros if the term is absent.
    pub fn coeff(&self, b: Basis2) -> Vec<Complex64> {
        self.terms
            .get(&b)
            .cloned()
            .unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); self.grid.len()])
    }

    pub fn sup_norm(&self) -> f64 {
        self.terms
            .values()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, c| m.max(c.norm()))
    }
}

impl InvariantMetricChart {
    /// Validates positivity of `h`, `w_inv > 0` off fixed points, and
    /// `w_inv = 0` (to 1e-12, then snapped) at flagged fixed-point ends.
    pub fn new(grid: ChartGrid, h: Vec<f64>, mut w_inv: Vec<f64>, lambda: f64) -> Result<Self> {
        if h.len() != grid.len() || w_inv.len() != grid.len() {
            return Err(Error::GridMismatch("metric samples do not match the grid".into()));
        }
        for k in 0..grid.len() {
            let (base, tau) = grid.split(k);
            if !h[k].is_finite() {
                return Err(Error::NonFinite { what: "h".into(), base, tau });
            }
            if !w_inv[k].is_finite() {
                return Err(Error::NonFinite { what: "w_inv".into(), base, tau });
            }
            if grid.base_kind != BaseKind::Point && h[k] <= 0.0 {
                return Err(Error::NonPositiveProfile { index: k, value: h[k] });
            }
            if grid.is_fixed_point(tau) {
                if w_inv[k].abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "w_inv must vanish at the fixed-point end (base {base}, tau {tau}), got {}",
                        w_inv[k]
                    )));
                }
                w_inv[k] = 0.0;
            } else if w_inv[k] <= 0.0 {
                return Err(Error::Degenerate { base, tau });
            }
        }
        Ok(Self { grid, h, w_inv, lambda })
    }

    pub fn from_fns(
        grid: &ChartGrid,
        h: impl Fn(f64, f64) -> f64,
        w_inv: impl Fn(f64, f64) -> f64,
        lambda: f64,
    ) -> Result<Self> {
        let h = if grid.base_kind == BaseKind::Point {
            vec![1.0; grid.len()]
        } else {
            grid.sample(h)
        };
        Self::new(grid.clone(), h, grid.sample(w_inv), lambda)
    }

    pub fn n_base(&self) -> usize {
        self.grid.base_kind.complex_dim()
    }

    /// `w = 1/w_inv` off fixed points (left as 0 there) and the fixed-point tau
    /// indices, which callers fill by extrapolation.
    fn w_checked(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        let g = &self.grid;
        let mut w = vec![0.0; g.len()];
        let mut skipped = Vec::new();
        for j in 0..g.n_tau() {
            if g.is_fixed_point(j) {
                skipped.push(j);
            }
        }
        for k in 0..g.len() {
            let (base, tau) = g.split(k);
            if g.is_fixed_point(tau) {
                continue;
            }
            if self.w_inv[k] <= 0.0 {
                return Err(Error::Degenerate { base, tau });
            }
            w[k] = 1.0 / self.w_inv[k];
        }
        Ok((w, skipped))
    }

    fn check_scalar(&self, phi: &InvariantScalar) -> Result<()> {
        self.grid.ensure_same(&phi.grid, "scalar not sampled on the metric grid")
    }
}

/// Replace the values at the listed tau ends by quadratic extrapolation from
/// the three nearest nodes of the same base line.
fn extrapolate_ends<T>(grid: &ChartGrid, f: &mut [T], ends: &[usize])
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
{
    let nt = grid.n_tau();
    for &j in ends {
        for i in 0..grid.n_base() {
            let at = |k: usize| f[grid.idx(i, k)];
            let v = if j == 0 {
                at(1) * 3.0 - at(2) * 3.0 + at(3)
            } else {
                at(nt - 2) * 3.0 - at(nt - 3) * 3.0 + at(nt - 4)
            };
            f[grid.idx(i, j)] = v;
        }
    }
}

fn check_finite_c(grid: &ChartGrid, v: &[Complex64], what: &str) -> Result<()> {
    if let Some(k) = v.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
        let (base, tau) = grid.split(k);
        return Err(Error::NonFinite { what: what.into(), base, tau });
    }
    Ok(())
}

fn check_finite(grid: &ChartGrid, v: &[f64], what: &str) -> Result<()> {
    if let Some(k) = v.iter().position(|c| !c.is_finite()) {
        let (base, tau) = grid.split(k);
        return Err(Error::NonFinite { what: what.into(), base, tau });
    }
    Ok(())
}

fn real(v: &[f64], scale: Complex64) -> Vec<Complex64> {
    v.iter().map(|x| scale * *x).collect()
}

/// `∂∂̄phi` decomposed in the chart frame. With `A = w_inv phi_tau`:
///
/// `(phi_zz̄ + ¼ A h_tau) dz∧dz̄ + ½ A_z dz∧(w dtau + i theta)
///  - ½ A_z̄ dz̄∧(w dtau - i theta) + (i/2) A_tau dtau∧theta`.
pub fn hessian_invariant(metric: &InvariantMetricChart, phi: &InvariantScalar) -> Result<FormComponents> {
    metric.check_scalar(phi)?;
    let g = &metric.grid;
    let phi_t = d_tau(g, &phi.values);
    let phi_tt = d2_tau(g, &phi.values);
    let w_inv_t = d_tau(g, &metric.w_inv);
    let a: Vec<f64> = metric.w_inv.iter().zip(&phi_t).map(|(w, p)| w * p).collect();
    let a_t: Vec<f64> = (0..g.len())
        .map(|k| w_inv_t[k] * phi_t[k] + metric.w_inv[k] * phi_tt[k])
        .collect();
    let mut terms = BTreeMap::new();
    terms.insert(Basis2::DtauTheta, real(&a_t, 0.5 * I));
    let mut extrapolated = Vec::new();
    if metric.n_base() == 1 {
        let (w, skipped) = metric.w_checked()?;
        let phi_xx = d2_base(g, &phi.values);
        let h_t = d_tau(g, &metric.h);
        let a_x = d_base(g, &a);
        let zz: Vec<f64> = (0..g.len()).map(|k| 0.25 * phi_xx[k] + 0.25 * a[k] * h_t[k]).collect();
        let mut wa_x: Vec<f64> = (0..g.len()).map(|k| w[k] * a_x[k]).collect();
        extrapolate_ends(g, &mut wa_x, &skipped);
        terms.insert(Basis2::DzDzbar, real(&zz, Complex64::new(1.0, 0.0)));
        terms.insert(Basis2::DtauDz, real(&wa_x, Complex64::new(-0.25, 0.0)));
        terms.insert(Basis2::DtauDzbar, real(&wa_x, Complex64::new(0.25, 0.0)));
        terms.insert(Basis2::DzTheta, real(&a_x, 0.25 * I));
        terms.insert(Basis2::DzbarTheta, real(&a_x, 0.25 * I));
        extrapolated = skipped;
    }
    for v in terms.values() {
        check_finite_c(g, v, "hessian")?;
    }
    Ok(FormComponents { grid: g.clone(), terms, extrapolated_tau: extrapolated })
}

/// Metric trace of a Hessian form: `4 C_zz̄ / h - 2i C_tau_theta`.
pub fn trace(metric: &InvariantMetricChart, form: &FormComponents) -> Vec<f64> {
    let tt = form.coeff(Basis2::DtauTheta);
    let zz = form.coeff(Basis2::DzDzbar);
    (0..metric.grid.len())
        .map(|k| {
            let mut v = (-2.0 * I * tt[k]).re;
            if metric.n_base() == 1 {
                v += 4.0 * zz[k].re / metric.h[k];
            }
            v
        })
        .collect()
}

/// Real Laplacian `h⁻¹(phi_xx + w_inv phi_tau h_tau) + d_tau(w_inv phi_tau)`;
/// the last term is evaluated in flux form.
pub fn laplacian_invariant(metric: &InvariantMetricChart, phi: &InvariantScalar) -> Result<InvariantScalar> {
    metric.check_scalar(phi)?;
    let g = &metric.grid;
    let mut out = div_flux_tau(g, &metric.w_inv, &phi.values);
    if metric.n_base() == 1 {
        let phi_xx = d2_base(g, &phi.values);
        let phi_t = d_tau(g, &phi.values);
        let h_t = d_tau(g, &metric.h);
        for k in 0..g.len() {
            out[k] += (phi_xx[k] + metric.w_inv[k] * phi_t[k] * h_t[k]) / metric.h[k];
        }
    }
    check_finite(g, &out, "laplacian")?;
    InvariantScalar::new(g.clone(), out)
}

/// `dtheta = i(-½ h_tau dz∧dz̄ - w_z dtau∧dz + w_z̄ dtau∧dz̄)`.
pub fn dtheta_components(metric: &InvariantMetricChart) -> Result<FormComponents> {
    let g = &metric.grid;
    let (w, skipped) = metric.w_checked()?;
    let h_t = if metric.n_base() == 1 { d_tau(g, &metric.h) } else { vec![0.0; g.len()] };
    let mut w_x = d_base(g, &w);
    extrapolate_ends(g, &mut w_x, &skipped);
    let mut terms = BTreeMap::new();
    terms.insert(Basis2::DzDzbar, real(&h_t, -0.5 * I));
    terms.insert(Basis2::DtauDz, real(&w_x, -0.5 * I));
    terms.insert(Basis2::DtauDzbar, real(&w_x, 0.5 * I));
    for v in terms.values() {
        check_finite_c(g, v, "dtheta")?;
    }
    Ok(FormComponents { grid: g.clone(), terms, extrapolated_tau: skipped })
}

/// Coefficient of `dtau∧dz∧dz̄` in the exterior derivative of a theta-free
/// 2-form `a dz∧dz̄ + b dtau∧dz + c dtau∧dz̄`: `a_tau + b_z̄ - c_z`.
pub fn exterior_derivative(form: &FormComponents) -> Result<Vec<Complex64>> {
    for b in [Basis2::DtauTheta, Basis2::DzTheta, Basis2::DzbarTheta] {
        if form.get(b).is_some() {
            return Err(Error::InvalidInput("exterior derivative supports theta-free forms only".into()));
        }
    }
    let g = &form.grid;
    let split = |v: &[Complex64]| -> (Vec<f64>, Vec<f64>) {
        (v.iter().map(|c| c.re).collect(), v.iter().map(|c| c.im).collect())
    };
    let join = |re: Vec<f64>, im: Vec<f64>| -> Vec<Complex64> {
        re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect()
    };
    let (are, aim) = split(&form.coeff(Basis2::DzDzbar));
    let (bre, bim) = split(&form.coeff(Basis2::DtauDz));
    let (cre, cim) = split(&form.coeff(Basis2::DtauDzbar));
    let a_t = join(d_tau(g, &are), d_tau(g, &aim));
    let b_x = join(d_base(g, &bre), d_base(g, &bim));
    let c_x = join(d_base(g, &cre), d_base(g, &cim));
    Ok((0..g.len()).map(|k| a_t[k] + 0.5 * b_x[k] - 0.5 * c_x[k]).collect())
}

/// The three integrability conditions of the holomorphic frame with a single
/// circle factor. The first two reduce to symmetry identities and are exact
/// zeros; the third is `4 w_zz̄ + h_tau_tau = w_xx + h_tau_tau`.
pub fn integrability_residuals(metric: &InvariantMetricChart) -> Result<[InvariantScalar; 3]> {
    let g = &metric.grid;
    let zero = InvariantScalar::constant(g, 0.0);
    let (w, skipped) = metric.w_checked()?;
    let mut third = if metric.n_base() == 1 {
        let h_tt = d2_tau(g, &metric.h);
        let w_xx = d2_base(g, &w);
        (0..g.len()).map(|k| w_xx[k] + h_tt[k]).collect()
    } else {
        vec![0.0; g.len()]
    };
    extrapolate_ends(g, &mut third, &skipped);
    check_finite(g, &third, "integrability")?;
    Ok([zero.clone(), zero, InvariantScalar::new(g.clone(), third)?])
}

/// `w_inv d_tau log det h - Delta tau + d_tau w_inv`, using this module's
/// Laplacian.
pub fn hamiltonian_laplacian_residual(metric: &InvariantMetricChart) -> Result<InvariantScalar> {
    let g = &metric.grid;
    let tau = InvariantScalar::from_fn(g, |_, t| t)?;
    let lap = laplacian_invariant(metric, &tau)?;
    let dw = d_tau(g, &metric.w_inv);
    let log_h: Vec<f64> = if metric.n_base() == 1 {
        metric.h.iter().map(|v| v.ln()).collect()
    } else {
        vec![0.0; g.len()]
    };
    let dlog = d_tau(g, &log_h);
    let r: Vec<f64> = (0..g.len())
        .map(|k| metric.w_inv[k] * dlog[k] - lap.values[k] + dw[k])
        .collect();
    InvariantScalar::new(g.clone(), r)
}

/// Mean curvature of a moment level along the base, computed two ways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMeanCurvature {
    pub tau: f64,
    /// `H = -(w_inv d_tau log det h + ½ d_tau w_inv) / |V|`.
    pub from_identity: Vec<f64>,
    /// `H = -div(grad tau / |grad tau|) = (½ d_tau w_inv - Delta tau) / |V|`.
    pub from_second_fundamental_form: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn mean_curvature(metric: &InvariantMetricChart, tau_index: usize) -> Result<LevelMeanCurvature> {
    let g = &metric.grid;
    if tau_index >= g.n_tau() {
        return Err(Error::InvalidInput(format!("tau index {tau_index} out of range")));
    }
    if g.is_fixed_point(tau_index) {
        return Err(Error::Degenerate { base: 0, tau: tau_index });
    }
    let tau = InvariantScalar::from_fn(g, |_, t| t)?;
    let lap = laplacian_invariant(metric, &tau)?;
    let dw = d_tau(g, &metric.w_inv);
    let log_h: Vec<f64> = if metric.n_base() == 1 {
        metric.h.iter().map(|v| v.ln()).collect()
    } else {
        vec![0.0; g.len()]
    };
    let dlog = d_tau(g, &log_h);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..g.n_base() {
        let k = g.idx(i, tau_index);
        if metric.w_inv[k] <= 0.0 {
            return Err(Error::Degenerate { base: i, tau: tau_index });
        }
        let v = metric.w_inv[k].sqrt();
        a.push(-(metric.w_inv[k] * dlog[k] + 0.5 * dw[k]) / v);
        b.push((0.5 * dw[k] - lap.values[k]) / v);
    }
    let residual = a.iter().zip(&b).map(|(p, q)| p - q).collect();
    Ok(LevelMeanCurvature {
        tau: g.tau_nodes[tau_index],
        from_identity: a,
        from_second_fundamental_form: b,
        residual,
    })
}

/// Moment map of `omega_u = omega_0 + (i/2)∂∂̄u`: `mu + ¼ w_inv_0 u_tau`.
pub fn hamiltonian_shift(
    u: &InvariantScalar,
    metric0: &InvariantMetricChart,
    mu: &InvariantScalar,
) -> Result<InvariantScalar> {
    metric0.check_scalar(u)?;
    metric0.check_scalar(mu)?;
    let u_t = d_tau(&metric0.grid, &u.values);
    let v = (0..u.values.len())
        .map(|k| mu.values[k] + 0.25 * metric0.w_inv[k] * u_t[k])
        .collect();
    InvariantScalar::new(metric0.grid.clone(), v)
}

/// Real components `(dx, dtau)` of the contraction `i_V` of
/// `omega_0 + (i/2) form`, where `form` is a Hessian decomposition.
pub fn contract_v_kahler(form: &FormComponents) -> (Vec<f64>, Vec<f64>) {
    let n = form.grid.len();
    let zt = form.coeff(Basis2::DzTheta);
    let zbt = form.coeff(Basis2::DzbarTheta);
    let tt = form.coeff(Basis2::DtauTheta);
    // i_V(alpha∧theta) = -alpha, i_V(-dtau∧theta) = dtau, dz + dz̄ = 2 dx
    let dx = (0..n).map(|k| (-0.5 * I * (zt[k] + zbt[k])).re).collect();
    let dt = (0..n).map(|k| 1.0 + (-0.5 * I * tt[k]).re).collect();
    (dx, dt)
}

/// `det(h) * w_inv`: the ratio of `omega^{n+1}/(n+1)!` to the holomorphic
/// reference volume.
pub fn volume_ratio(metric: &InvariantMetricChart) -> Result<InvariantScalar> {
    let v = if metric.n_base() == 1 {
        metric.h.iter().zip(&metric.w_inv).map(|(h, w)| h * w).collect()
    } else {
        metric.w_inv.clone()
    };
    InvariantScalar::new(metric.grid.clone(), v)
}

/// Samples of the flow of `JV/|V|²` through a chart point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentFlowSamples {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub tau: Vec<f64>,
}

fn bilinear(grid: &ChartGrid, f: &[f64], x: f64, tau: f64) -> Option<f64> {
    let locate = |nodes: &[f64], v: f64| -> Option<(usize, f64)> {
        let n = nodes.len();
        if n == 1 {
            return Some((0, 0.0));
        }
        let lo = nodes[0];
        let hi = nodes[n - 1];
        let tol = 1e-12 * (hi - lo).abs().max(1.0);
        if v < lo - tol || v > hi + tol {
            return None;
        }
        let h = (hi - lo) / (n - 1) as f64;
        let s = ((v - lo) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        Some((i, s - i as f64))
    };
    let (j, ft) = locate(&grid.tau_nodes, tau)?;
    let (i, fx) = if grid.base_kind.is_periodic() {
        let period = grid.base_period.unwrap_or(1.0);
        let h = period / grid.n_base() as f64;
        let s = (x - grid.base_nodes[0]).rem_euclid(period) / h;
        let i = s.floor() as usize % grid.n_base();
        (i, s - s.floor())
    } else {
        locate(&grid.base_nodes, x)?
    };
    let nb = grid.n_base();
    let i1 = if nb == 1 { 0 } else if grid.base_kind.is_periodic() { (i + 1) % nb } else { i + 1 };
    let j1 = j + 1;
    let v = |a: usize, b: usize| f[grid.idx(a, b)];
    Some(
        (1.0 - fx) * ((1.0 - ft) * v(i, j) + ft * v(i, j1))
            + fx * ((1.0 - ft) * v(i1, j) + ft * v(i1, j1)),
    )
}

/// Integrate `dp/dt = JV/|V|²` from `(x, start_tau)` for `t ∈ [0, delta_tau]`.
/// In the product chart `JV = grad tau` has components `(0, g^{tau tau}) =
/// (0, w_inv)`, so the velocity is `(0, 1)` wherever `|V| > 0`.
pub fn moment_flow(
    metric: &InvariantMetricChart,
    x: f64,
    start_tau: f64,
    delta_tau: f64,
    n_samples: usize,
) -> Result<MomentFlowSamples> {
    let g = &metric.grid;
    let n_samples = n_samples.max(2);
    let times: Vec<f64> = (0..n_samples)
        .map(|k| delta_tau * k as f64 / (n_samples - 1) as f64)
        .collect();
    if delta_tau == 0.0 {
        return Ok(MomentFlowSamples {
            t: times,
            x: vec![x; n_samples],
            tau: vec![start_tau; n_samples],
        });
    }
    let rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let wi = bilinear(g, &metric.w_inv, y[0], y[1]).ok_or_else(|| {
            Error::InvalidInput(format!("moment flow left the chart at tau = {}", y[1]))
        })?;
        if wi <= 1e-14 {
            let j = ((y[1] - g.tau_min()) / g.dtau()).round().max(0.0) as usize;
            return Err(Error::Degenerate { base: 0, tau: j.min(g.n_tau() - 1) });
        }
        let g_tt = wi;
        let v2 = wi;
        Ok(vec![0.0, g_tt / v2])
    };
    let (lo, hi) = (start_tau.min(start_tau + delta_tau), start_tau.max(start_tau + delta_tau));
    for j in 0..g.n_tau() {
        let t = g.tau_nodes[j];
        if g.is_fixed_point(j) && t >= lo - 1e-14 && t <= hi + 1e-14 {
            return Err(Error::Degenerate { base: 0, tau: j });
        }
    }
    let opts = OdeOptions { h_init: delta_tau.abs() / 16.0, ..OdeOptions::default() };
    let ys = integrate(rhs, 0.0, &[x, start_tau], &times, opts, |_, _| None)?;
    Ok(MomentFlowSamples {
        t: times,
        x: ys.iter().map(|y| y[0]).collect(),
        tau: ys.iter().map(|y| y[1]).collect(),
    })
}
