//! The radial flip model: the circle acting on ℂ^{1+m} with weight −1 on
//! `z₁` and +1 on `z₂..z_{m+1}`, with invariant potentials `u = ρ h(r)`
//! where `r = |z₁|²` and `ρ = Σ_{j≥2} |z_j|²`.
//!
//! For `u = ρ h(r)` the reduced equation is the ODE
//! `(r h h'' − r h'² + h h') h^{m−1} = r² h'' − r h' + h`, singular at
//! `r = 0`. A power series bridges the singular point and an adaptive
//! integrator continues it.
//!
//! Moment map convention: `μ = ¼ JV(u) = ½ ρ (h − r h')`, so that levels
//! `τ > 0` carry the blow-up of ℂ^m at the origin and `τ = 0` is the only
//! critical value.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diff::{d1, d2, sup_norm};
use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::ricci::{scalar_curvature, FlowTrajectory, QuotientMetricProfile, QuotientModel};

/// Power-series solution `h = Σ a_k r^k` around the singular point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSolution {
    pub m: usize,
    pub coefficients: Vec<f64>,
    /// Root-test estimate of the radius of convergence; `None` when the
    /// tail vanishes (the series is a polynomial).
    pub radius_of_trust: Option<f64>,
}

impl SeriesSolution {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `[h, h', h'']` at `r`.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, a) in self.coefficients.iter().enumerate() {
            let kf = k as f64;
            out[0] += a * r.powi(k as i32);
            if k >= 1 {
                out[1] += kf * a * r.powi(k as i32 - 1);
            }
            if k >= 2 {
                out[2] += kf * (kf - 1.0) * a * r.powi(k as i32 - 2);
            }
        }
        out
    }
}

fn mul_trunc(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n];
    for (i, x) in a.iter().enumerate().take(n) {
        for (j, y) in b.iter().enumerate().take(n - i) {
            c[i + j] += x * y;
        }
    }
    c
}

/// Coefficients of `LHS − RHS` of the flip ODE, truncated to `n` terms.
fn series_defect(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let len = a.len();
    let h: Vec<f64> = a.to_vec();
    let dh: Vec<f64> = (1..len).map(|k| k as f64 * a[k]).collect();
    let d2h: Vec<f64> = (2..len).map(|k| (k * (k - 1)) as f64 * a[k]).collect();
    let shift = |v: Vec<f64>| -> Vec<f64> {
        let mut s = vec![0.0];
        s.extend(v);
        s
    };
    let mut hm1 = vec![1.0];
    for _ in 1..m {
        hm1 = mul_trunc(&hm1, &h, n);
    }
    let t1 = shift(mul_trunc(&h, &d2h, n));
    let t2 = shift(mul_trunc(&dh, &dh, n));
    let t3 = mul_trunc(&h, &dh, n);
    let mut inner = vec![0.0; n];
    for k in 0..n {
        inner[k] = t1.get(k).unwrap_or(&0.0) - t2.get(k).unwrap_or(&0.0) + t3.get(k).unwrap_or(&0.0);
    }
    let lhs = mul_trunc(&inner, &hm1, n);
    let r2h2 = shift(shift(d2h));
    let rh1 = shift(dh);
    (0..n)
        .map(|k| {
            let rhs = r2h2.get(k).unwrap_or(&0.0) - rh1.get(k).unwrap_or(&0.0) + h.get(k).unwrap_or(&0.0);
            lhs[k] - rhs
        })
        .collect()
}

/// Series seed `a₀ = a₁ = 1` continued to order `order` by matching powers
/// of `r`. At order `k` the new coefficient enters with factor `(k+1)²`.
pub fn ode_series_seed(m: usize, order: usize) -> Result<SeriesSolution> {
    if m == 0 || order < 2 {
        return Err(Error::InvalidInput("series seed needs m >= 1 and order >= 2".into()));
    }
    let mut a = vec![1.0, 1.0];
    for k in 1..order {
        a.push(0.0);
        let defect = series_defect(&a, m, k + 1)[k];
        let pivot = ((k + 1) * (k + 1)) as f64;
        a[k + 1] = -defect / pivot;
        if !a[k + 1].is_finite() {
            return Err(Error::NoSolution(format!("series recursion singular at order {k}")));
        }
    }
    let tail: Vec<f64> = (order / 2..=order)
        .filter(|&k| k >= 2 && a[k].abs() > 1e-300)
        .map(|k| a[k].abs().powf(-1.0 / k as f64))
        .collect();
    let radius_of_trust = if tail.is_empty() { None } else { Some(tail.iter().cloned().fold(f64::INFINITY, f64::min)) };
    Ok(SeriesSolution { m, coefficients: a, radius_of_trust })
}

/// Coefficient of `h''` once the ODE is solved for it.
fn leading_coefficient(m: usize, r: f64, h: f64) -> f64 {
    r * (h.powi(m as i32) - r)
}

/// `h''` from the ODE at a regular point.
pub fn ode_second_derivative(m: usize, r: f64, h: f64, dh: f64) -> f64 {
    let hm1 = h.powi(m as i32 - 1);
    (r * dh * dh * hm1 - h * dh * hm1 - r * dh + h) / leading_coefficient(m, r, h)
}

/// `LHS − RHS` of the ODE at one point.
pub fn ode_defect(m: usize, r: f64, h: f64, dh: f64, d2h: f64) -> f64 {
    (r * h * d2h - r * dh * dh + h * dh) * h.powi(m as i32 - 1) - (r * r * d2h - r * dh + h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipOptions {
    /// Hand-over point from the series to the integrator.
    pub r0: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for FlipOptions {
    fn default() -> Self {
        Self { r0: 0.1, rtol: 1e-12, atol: 1e-14 }
    }
}

/// Samples of `h` on a uniform grid in `r` starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub m: usize,
    pub r: Vec<f64>,
    pub h: Vec<f64>,
    pub dh: Vec<f64>,
    /// `h''` from the ODE (series below `r0`); used for interpolation.
    pub d2h: Vec<f64>,
    /// Where the series hands over to the integrator; `None` for profiles
    /// built from closed-form samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    /// Sup of the ODE defect with `h''` differentiated from the `h'` samples.
    pub ode_residual: f64,
}

impl RadialProfile {
    /// Profile from closed-form `[h, h', h'']` on a uniform grid.
    pub fn from_fn(m: usize, r_max: f64, n: usize, f: impl Fn(f64) -> [f64; 3]) -> Result<Self> {
        if n < 5 || r_max <= 0.0 {
            return Err(Error::InvalidGrid("radial profile needs n >= 5 and r_max > 0".into()));
        }
        let r: Vec<f64> = (0..n).map(|k| r_max * k as f64 / (n - 1) as f64).collect();
        let vals: Vec<[f64; 3]> = r.iter().map(|&x| f(x)).collect();
        let mut p = RadialProfile {
            m,
            h: vals.iter().map(|v| v[0]).collect(),
            dh: vals.iter().map(|v| v[1]).collect(),
            d2h: vals.iter().map(|v| v[2]).collect(),
            r,
            r0: None,
            ode_residual: 0.0,
        };
        p.check_positive()?;
        p.ode_residual = sup_norm(&p.defects());
        Ok(p)
    }

    pub fn spacing(&self) -> f64 {
        self.r[1] - self.r[0]
    }

    fn check_positive(&self) -> Result<()> {
        match self.h.iter().position(|h| !(*h > 0.0)) {
            Some(k) => Err(Error::NonPositiveProfile { index: k, value: self.h[k] }),
            None => Ok(()),
        }
    }

    /// ODE defect per node with `h''` taken as a fourth-order difference of
    /// the `h'` samples, so the check does not reuse the ODE itself.
    pub fn defects(&self) -> Vec<f64> {
        let d2 = d1_fourth(&self.dh, self.spacing());
        (0..self.r.len()).map(|k| ode_defect(self.m, self.r[k], self.h[k], self.dh[k], d2[k])).collect()
    }

    /// Quintic Hermite interpolation of `[h, h', h'']`.
    pub fn eval(&self, r: f64) -> Result<[f64; 3]> {
        let n = self.r.len();
        let dr = self.spacing();
        let last = self.r[n - 1];
        if !(r >= 0.0 && r <= last * (1.0 + 1e-14)) {
            return Err(Error::InvalidInput(format!("r = {r} outside [0, {last}]")));
        }
        let i = ((r / dr).floor() as usize).min(n - 2);
        let t = (r - self.r[i]) / dr;
        let (b, db, ddb) = quintic_basis(t);
        let v = [
            self.h[i],
            dr * self.dh[i],
            dr * dr * self.d2h[i],
            self.h[i + 1],
            dr * self.dh[i + 1],
            dr * dr * self.d2h[i + 1],
        ];
        let dot = |w: &[f64; 6]| w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        Ok([dot(&b), dot(&db) / dr, dot(&ddb) / (dr * dr)])
    }
}

fn quintic_basis(t: f64) -> ([f64; 6], [f64; 6], [f64; 6]) {
    let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
    let b = [
        1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
        t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
        0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
        10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
        0.5 * t3 - t4 + 0.5 * t5,
    ];
    let db = [
        -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
        1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
        t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
        30.0 * t2 - 60.0 * t3 + 30.0 * t4,
        -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
        1.5 * t2 - 4.0 * t3 + 2.5 * t4,
    ];
    let ddb = [
        -60.0 * t + 180.0 * t2 - 120.0 * t3,
        -36.0 * t + 96.0 * t2 - 60.0 * t3,
        1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3,
        60.0 * t - 180.0 * t2 + 120.0 * t3,
        -24.0 * t + 84.0 * t2 - 60.0 * t3,
        3.0 * t - 12.0 * t2 + 10.0 * t3,
    ];
    (b, db, ddb)
}

/// Fourth-order first derivative on a uniform grid, one-sided at the ends.
fn d1_fourth(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let c = 12.0 * h;
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / c;
    }
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / c;
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / c;
    d[n - 1] = (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]) / c;
    d[n - 2] = (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]) / c;
    d
}

/// Continue the series seed past `opts.r0` with the adaptive integrator and
/// sample on `n` uniform nodes of `[0, r_max]`.
pub fn ode_integrate(
    m: usize,
    r_max: f64,
    n: usize,
    seed: &SeriesSolution,
    opts: FlipOptions,
) -> Result<RadialProfile> {
    if seed.m != m {
        return Err(Error::InvalidInput(format!("seed built for m = {}, asked for m = {m}", seed.m)));
    }
    let r0 = opts.r0;
    if let Some(rad) = seed.radius_of_trust {
        if r0 >= 0.5 * rad {
            return Err(Error::InvalidInput(format!("r0 = {r0} beyond half the series radius {rad}")));
        }
    }
    if r_max <= r0 {
        return Err(Error::InvalidInput("r_max must exceed the hand-over point".into()));
    }
    if n < 5 {
        return Err(Error::InvalidGrid("radial profile needs n >= 5".into()));
    }
    let r: Vec<f64> = (0..n).map(|k| r_max * k as f64 / (n - 1) as f64).collect();
    let split = r.partition_point(|x| *x <= r0);
    let mut h = Vec::with_capacity(n);
    let mut dh = Vec::with_capacity(n);
    let mut d2h = Vec::with_capacity(n);
    for &x in &r[..split] {
        let v = seed.eval(x);
        h.push(v[0]);
        dh.push(v[1]);
        d2h.push(v[2]);
    }
    let y0 = seed.eval(r0);
    if y0[0] <= 0.0 {
        return Err(Error::OdeStopped { at: r0, reason: "h reached zero".into() });
    }
    if leading_coefficient(m, r0, y0[0]) <= 0.0 {
        return Err(Error::OdeStopped { at: r0, reason: "coefficient of h'' vanished".into() });
    }
    let ode = OdeOptions { rtol: opts.rtol, atol: opts.atol, h_init: 1e-3, ..OdeOptions::default() };
    let states = integrate(
        |x, y| Ok(vec![y[1], ode_second_derivative(m, x, y[0], y[1])]),
        r0,
        &y0[..2],
        &r[split..],
        ode,
        |x, y| {
            if y[0] <= 0.0 {
                Some("h reached zero".into())
            } else if leading_coefficient(m, x, y[0]) <= 0.0 {
                Some("coefficient of h'' vanished".into())
            } else {
                None
            }
        },
    )?;
    for (k, y) in states.iter().enumerate() {
        h.push(y[0]);
        dh.push(y[1]);
        d2h.push(ode_second_derivative(m, r[split + k], y[0], y[1]));
    }
    let mut p = RadialProfile { m, r, h, dh, d2h, r0: Some(r0), ode_residual: 0.0 };
    p.check_positive()?;
    p.ode_residual = sup_norm(&p.defects());
    Ok(p)
}

/// Sup-difference between the series and the integrated profile on
/// `[r0, 2 r0]`.
pub fn series_overlap(profile: &RadialProfile, seed: &SeriesSolution) -> Result<f64> {
    let r0 = profile.r0.ok_or_else(|| Error::InvalidInput("profile has no series hand-over".into()))?;
    let mut worst = 0.0_f64;
    for (k, &x) in profile.r.iter().enumerate() {
        if x >= r0 && x <= 2.0 * r0 {
            let v = seed.eval(x);
            worst = worst.max((v[0] - profile.h[k]).abs()).max((v[1] - profile.dh[k]).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipResidual {
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    /// `values[k][l]` at `(r[k], rho[l])`.
    pub values: Vec<Vec<f64>>,
    pub sup: f64,
}

/// Complex Hessian `u_{ij̄}` of `u = ρ h(r)` at `z`.
fn hessian_at(z: &[Complex64], h: f64, dh: f64, d2h: f64) -> DMatrix<Complex64> {
    let n = z.len();
    let r = z[0].norm_sqr();
    let rho: f64 = z[1..].iter().map(|x| x.norm_sqr()).sum();
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    a[(0, 0)] = Complex64::new(rho * (dh + r * d2h), 0.0);
    for j in 1..n {
        a[(0, j)] = z[0].conj() * z[j] * dh;
        a[(j, 0)] = z[0] * z[j].conj() * dh;
        a[(j, j)] = Complex64::new(h, 0.0);
    }
    a
}

/// `det(u_{ij̄}) − [u_{11̄}|z₁|² − Σ(u_{1j̄} z₁ z̄_j + u_{j1̄} z_j z̄₁) + Σ u_{ij̄} z_i z̄_j]`
/// on the profile's `r` nodes up to `r_max` and the given `ρ` values.
/// `h''` is differentiated from the `h'` samples at second order.
pub fn flip_residual(profile: &RadialProfile, r_max: f64, rho: &[f64]) -> Result<FlipResidual> {
    profile.check_positive()?;
    let d2 = d1(&profile.dh, profile.spacing(), false);
    let m = profile.m;
    let mut rs = Vec::new();
    let mut values = Vec::new();
    let mut sup = 0.0_f64;
    for (k, &r) in profile.r.iter().enumerate() {
        if r > r_max * (1.0 + 1e-12) {
            break;
        }
        let mut row = Vec::with_capacity(rho.len());
        for &p in rho {
            // spread ρ over the m coordinates with distinct phases
            let mut z = vec![Complex64::from_polar(r.sqrt(), 0.3)];
            for j in 0..m {
                let share = p * (j + 1) as f64 / (m * (m + 1) / 2) as f64;
                z.push(Complex64::from_polar(share.sqrt(), 0.7 * (j + 1) as f64));
            }
            let a = hessian_at(&z, profile.h[k], profile.dh[k], d2[k]);
            let det = a.clone().determinant();
            if !det.re.is_finite() {
                return Err(Error::NonFinite { what: "det u_ij".into(), base: k, tau: 0 });
            }
            let mut rhs = a[(0, 0)] * z[0].norm_sqr();
            for j in 1..=m {
                rhs -= a[(0, j)] * z[0] * z[j].conj() + a[(j, 0)] * z[j] * z[0].conj();
                for i in 1..=m {
                    rhs += a[(i, j)] * z[i] * z[j].conj();
                }
            }
            let v = (det - rhs).norm();
            sup = sup.max(v);
            row.push(v);
        }
        rs.push(r);
        values.push(row);
    }
    if rs.is_empty() || rho.is_empty() {
        return Err(Error::InvalidGrid("empty (r, rho) sample".into()));
    }
    Ok(FlipResidual { r: rs, rho: rho.to_vec(), values, sup })
}

/// Moment map `½ ρ (h − r h')`.
pub fn moment_map(rho: f64, h: f64, dh: f64, r: f64) -> f64 {
    0.5 * rho * (h - r * dh)
}

/// `|V|² = ¼ JV(JV u) = ρ (h − r h' + r² h'')`.
pub fn v_norm_sq(rho: f64, h: f64, dh: f64, d2h: f64, r: f64) -> f64 {
    rho * (h - r * dh + r * r * d2h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipDescent {
    pub trajectory: FlowTrajectory,
    pub tau: Vec<f64>,
    /// Mean of `dτ/dt` per level.
    pub c_levels: Vec<f64>,
    pub c: f64,
    /// Largest spread of `dτ/dt` over a level set, relative to `|c|`.
    pub c_spread: f64,
    /// Largest spread between levels, relative to `|c|`.
    pub c_drift: f64,
    /// `sup |∂_t p − L'|` over interior levels.
    pub krf_residual: f64,
}

/// Reduce the flip metric to the level sets `μ = τ` for `n_tau` values in
/// `tau_range` and read the result as a radial metric on ℂ^m in the
/// invariant coordinates `w = z₁ (z₂, …)`, `s = |w|²`, profile
/// `p = h(r*)/r*` where `s = 2τ r*/(h − r* h')`.
pub fn flip_descend(
    profile: &RadialProfile,
    tau_range: (f64, f64),
    n_tau: usize,
    s_range: (f64, f64),
    n_s: usize,
) -> Result<FlipDescent> {
    let (t0, t1) = tau_range;
    if !(t0 < t1) {
        return Err(Error::InvalidInput("tau range must be increasing".into()));
    }
    if t0 <= 0.0 && t1 >= 0.0 {
        return Err(Error::CriticalValue(format!("[{t0}, {t1}] touches tau = 0")));
    }
    if t1 < 0.0 {
        return Err(Error::InvalidInput("levels tau < 0 are the C^m side; only the blow-up side is sampled".into()));
    }
    if n_tau < 3 {
        return Err(Error::InvalidGrid("flip descent needs at least 3 tau samples".into()));
    }
    let (s0, s1) = s_range;
    if !(s0 > 0.0 && s1 > s0) || n_s < 5 {
        return Err(Error::InvalidGrid("s range must be positive with n_s >= 5".into()));
    }
    let m = profile.m;
    let mf = m as f64 - 1.0;
    let taus: Vec<f64> = (0..n_tau).map(|k| t0 + (t1 - t0) * k as f64 / (n_tau - 1) as f64).collect();
    let s: Vec<f64> = (0..n_s).map(|k| s0 + (s1 - s0) * k as f64 / (n_s - 1) as f64).collect();
    let ds = s[1] - s[0];

    // s = τ r / g with g = ½(h − r h'); keep the initial stretch where
    // this is increasing in r so the level map is invertible
    let g: Vec<f64> = (0..profile.r.len()).map(|k| 0.5 * (profile.h[k] - profile.r[k] * profile.dh[k])).collect();
    if let Some(k) = g.iter().position(|v| *v <= 0.0) {
        return Err(Error::Invariant(format!("h − r h' ≤ 0 at r = {}", profile.r[k])));
    }
    let mut top = 1;
    while top + 1 < profile.r.len() && profile.r[top + 1] / g[top + 1] > profile.r[top] / g[top] {
        top += 1;
    }
    let r_top = profile.r[top];
    let s_of_r = |tau: f64, r: f64| -> Result<f64> {
        let v = profile.eval(r)?;
        Ok(2.0 * tau * r / (v[0] - r * v[1]))
    };

    let mut profiles = Vec::with_capacity(n_tau);
    let mut r_ends = Vec::with_capacity(n_tau);
    for &tau in &taus {
        let reach = s_of_r(tau, r_top)?;
        if reach < s1 {
            return Err(Error::InvalidInput(format!("profile reaches only s = {reach} at tau = {tau}; extend r_max")));
        }
        let mut p = Vec::with_capacity(n_s);
        let mut rs = Vec::with_capacity(n_s);
        for &target in &s {
            let (mut lo, mut hi) = (0.0, r_top);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if s_of_r(tau, mid)? < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-16 * hi {
                    break;
                }
            }
            let r = 0.5 * (lo + hi);
            p.push(profile.eval(r)?[0] / r);
            rs.push(r);
        }
        r_ends.push((rs[0], rs[n_s - 1]));
        profiles.push(p);
    }

    // In r the reduced determinant p^{m−1}(p + s p') is τ-free:
    // p + s p' = (h G − g²)/(r G) with g = h − r h', G = g + r² h'', and
    // dτ/dt = −¼ |V|² ∂_τ log det|_s collapses to ½ r D'(r), D = log det.
    let dr = profile.spacing();
    let n_r = profile.r.len();
    let log_det: Vec<f64> = (1..n_r)
        .map(|k| {
            let (r, h, dh, d2h) = (profile.r[k], profile.h[k], profile.dh[k], profile.d2h[k]);
            let gg = h - r * dh;
            let big = gg + r * r * d2h;
            let a = (h * big - gg * gg) / (r * big);
            if a > 0.0 && big > 0.0 {
                Ok(mf * (h / r).ln() + a.ln())
            } else {
                Err(Error::Degenerate { base: k, tau: 0 })
            }
        })
        .collect::<Result<_>>()?;
    let dd = d1_fourth(&log_det, dr);
    let c_r: Vec<f64> = (1..n_r).map(|k| 0.5 * profile.r[k] * dd[k - 1]).collect();

    let mut c_levels = Vec::with_capacity(n_tau);
    let mut spreads = Vec::with_capacity(n_tau);
    for &(lo, hi) in &r_ends {
        let vals: Vec<f64> = (1..n_r)
            .filter(|&k| profile.r[k] >= lo && profile.r[k] <= hi)
            .map(|k| c_r[k - 1])
            .collect();
        if vals.is_empty() {
            return Err(Error::InvalidGrid("r grid too coarse for the sampled level set".into()));
        }
        let lo_v = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi_v = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        c_levels.push(vals.iter().sum::<f64>() / vals.len() as f64);
        spreads.push(hi_v - lo_v);
    }
    let c = c_levels.iter().sum::<f64>() / n_tau as f64;
    if c == 0.0 || !c.is_finite() {
        return Err(Error::Degenerate { base: 0, tau: 0 });
    }
    let c_spread = spreads.iter().cloned().fold(0.0, f64::max) / c.abs();
    let lo_c = c_levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_c = c_levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c_drift = (hi_c - lo_c) / c.abs();

    // dτ/dt = c; time runs from the first level reached
    let order: Vec<usize> = if c < 0.0 { (0..n_tau).rev().collect() } else { (0..n_tau).collect() };
    let tau_start = taus[order[0]];
    let model = QuotientModel::RadialPlane { m };
    let mut traj = FlowTrajectory {
        model,
        nodes: s.clone(),
        period: None,
        end_slopes: None,
        lambda: 0.0,
        times: Vec::new(),
        profiles: Vec::new(),
        scalar_curvature: Vec::new(),
        volumes: Vec::new(),
        termination: None,
    };
    for &k in &order {
        let q = QuotientMetricProfile::new(model, s.clone(), profiles[k].clone(), None)?;
        traj.times.push((taus[k] - tau_start) / c);
        traj.scalar_curvature.push(scalar_curvature(&q)?);
        traj.volumes.push(q.volume());
        traj.profiles.push(profiles[k].clone());
    }

    // finite differences in t and s: ∂_t p = c ∂_τ p against
    // L' = (m−1) p'/p + (2p' + s p'')/(p + s p')
    let dl: Vec<Vec<f64>> = profiles
        .iter()
        .map(|p| {
            let p1 = d1(p, ds, false);
            let p2 = d2(p, ds, false);
            (0..n_s).map(|i| mf * p1[i] / p[i] + (2.0 * p1[i] + s[i] * p2[i]) / (p[i] + s[i] * p1[i])).collect()
        })
        .collect();
    let dtau = taus[1] - taus[0];
    let mut krf = 0.0_f64;
    for i in 0..n_s {
        let col: Vec<f64> = profiles.iter().map(|p| p[i]).collect();
        let dp_dtau = d1(&col, dtau, false);
        for k in 1..n_tau - 1 {
            krf = krf.max((c * dp_dtau[k] - dl[k][i]).abs());
        }
    }
    Ok(FlipDescent { trajectory: traj, tau: taus, c_levels, c, c_spread, c_drift, krf_residual: krf })
}
