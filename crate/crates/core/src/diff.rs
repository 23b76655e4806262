//! Second-order finite differences on uniform axes.
//!
//! Every stencil is written on differences `f[k] - f[j]`, so constants are
//! annihilated exactly in floating point.

use crate::grid::{BaseKind, ChartGrid};

/// First derivative along a line of samples. Centered in the interior and
/// one-sided second order at the ends unless `periodic`.
///
/// The one-sided stencils carry the same leading error term as the centered
/// ones (`h² f'''/6` here, `h² f''''/12` in [`d2`]), so the error is smooth up
/// to the boundary and nested differences stay second order.
pub fn d1(f: &[f64], h: f64, periodic: bool) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if periodic {
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            out[i] = (f[ip] - f[im]) / (2.0 * h);
        }
        return out;
    }
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    let end = |a: usize, s: isize| -> f64 {
        let at = |k: isize| f[(a as isize + s * k) as usize] - f[a];
        if n >= 4 {
            s as f64 * (3.5 * at(1) - 2.0 * at(2) + 0.5 * at(3)) / h
        } else {
            s as f64 * (4.0 * at(1) - at(2)) / (2.0 * h)
        }
    };
    out[0] = end(0, 1);
    out[n - 1] = end(n - 1, -1);
    out
}

/// Second derivative along a line of samples.
pub fn d2(f: &[f64], h: f64, periodic: bool) -> Vec<f64> {
    let n = f.len();
    let h2 = h * h;
    let mut out = vec![0.0; n];
    if periodic {
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            out[i] = ((f[ip] - f[i]) - (f[i] - f[im])) / h2;
        }
        return out;
    }
    for i in 1..n - 1 {
        out[i] = ((f[i + 1] - f[i]) - (f[i] - f[i - 1])) / h2;
    }
    let left = |a: usize, s: isize| -> f64 {
        let at = |k: isize| f[(a as isize + s * k) as usize] - f[a];
        if n >= 5 {
            (-9.0 * at(1) + 10.0 * at(2) - 5.0 * at(3) + at(4)) / h2
        } else {
            (-5.0 * at(1) + 4.0 * at(2) - at(3)) / h2
        }
    };
    out[0] = left(0, 1);
    out[n - 1] = left(n - 1, -1);
    out
}

/// `(c u')'` in flux form in the interior (half-point averages of `c`) and
/// expanded as `c' u' + c u''` with one-sided stencils at the ends.
pub fn div_flux(c: &[f64], u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let h2 = h * h;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let cp = 0.5 * (c[i] + c[i + 1]);
        let cm = 0.5 * (c[i] + c[i - 1]);
        out[i] = (cp * (u[i + 1] - u[i]) - cm * (u[i] - u[i - 1])) / h2;
    }
    let du = d1(u, h, false);
    let ddu = d2(u, h, false);
    let dc = d1(c, h, false);
    for i in [0, n - 1] {
        out[i] = dc[i] * du[i] + c[i] * ddu[i];
    }
    out
}

/// Conservative `(c u')'` with no-flux ends: `sum_i vol_i * out_i = 0` for the
/// trapezoid weights `vol`. Used where exact discrete conservation matters.
pub fn div_flux_conservative(c: &[f64], u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let h2 = h * h;
    let flux: Vec<f64> = (0..n - 1)
        .map(|i| 0.5 * (c[i] + c[i + 1]) * (u[i + 1] - u[i]))
        .collect();
    let mut out = vec![0.0; n];
    out[0] = 2.0 * flux[0] / h2;
    out[n - 1] = -2.0 * flux[n - 2] / h2;
    for i in 1..n - 1 {
        out[i] = (flux[i] - flux[i - 1]) / h2;
    }
    out
}

/// Trapezoid weights for a uniform axis.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

fn tau_line(grid: &ChartGrid, f: &[f64], i: usize) -> Vec<f64> {
    let nt = grid.n_tau();
    f[i * nt..(i + 1) * nt].to_vec()
}

fn base_line(grid: &ChartGrid, f: &[f64], j: usize) -> Vec<f64> {
    (0..grid.n_base()).map(|i| f[grid.idx(i, j)]).collect()
}

fn along_tau(grid: &ChartGrid, f: &[f64], op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.n_base() {
        out.extend(op(&tau_line(grid, f, i)));
    }
    out
}

fn along_base(grid: &ChartGrid, f: &[f64], op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    if grid.base_kind == BaseKind::Point {
        return vec![0.0; f.len()];
    }
    let mut out = vec![0.0; grid.len()];
    for j in 0..grid.n_tau() {
        for (i, v) in op(&base_line(grid, f, j)).into_iter().enumerate() {
            out[grid.idx(i, j)] = v;
        }
    }
    out
}

pub fn d_tau(grid: &ChartGrid, f: &[f64]) -> Vec<f64> {
    let h = grid.dtau();
    along_tau(grid, f, |l| d1(l, h, false))
}

pub fn d2_tau(grid: &ChartGrid, f: &[f64]) -> Vec<f64> {
    let h = grid.dtau();
    along_tau(grid, f, |l| d2(l, h, false))
}

/// `d/dx`; identically zero on a point base.
pub fn d_base(grid: &ChartGrid, f: &[f64]) -> Vec<f64> {
    let periodic = grid.base_kind.is_periodic();
    let h = grid.dx().unwrap_or(1.0);
    along_base(grid, f, |l| d1(l, h, periodic))
}

pub fn d2_base(grid: &ChartGrid, f: &[f64]) -> Vec<f64> {
    let periodic = grid.base_kind.is_periodic();
    let h = grid.dx().unwrap_or(1.0);
    along_base(grid, f, |l| d2(l, h, periodic))
}

/// `d/dtau (c du/dtau)` on every tau line.
pub fn div_flux_tau(grid: &ChartGrid, c: &[f64], u: &[f64]) -> Vec<f64> {
    let h = grid.dtau();
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.n_base() {
        out.extend(div_flux(&tau_line(grid, c, i), &tau_line(grid, u, i), h));
    }
    out
}

pub fn div_flux_tau_conservative(grid: &ChartGrid, c: &[f64], u: &[f64]) -> Vec<f64> {
    let h = grid.dtau();
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.n_base() {
        out.extend(div_flux_conservative(&tau_line(grid, c, i), &tau_line(grid, u, i), h));
    }
    out
}

/// Observed order of convergence from errors at successive refinements by
/// `ratio` (typically 2).
pub fn observed_orders(errors: &[f64], ratio: f64) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).ln() / ratio.ln())
        .collect()
}

pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::linspace;
    use proptest::prelude::*;

    #[test]
    fn exact_on_quadratics() {
        let x = linspace(-1.0, 2.0, 7);
        let h = x[1] - x[0];
        let f: Vec<f64> = x.iter().map(|t| 3.0 * t * t - t + 2.0).collect();
        for (k, v) in d1(&f, h, false).iter().enumerate() {
            assert!((v - (6.0 * x[k] - 1.0)).abs() < 1e-12);
        }
        for v in d2(&f, h, false) {
            assert!((v - 6.0).abs() < 1e-11);
        }
    }

    #[test]
    fn second_derivative_endpoint_exact_on_cubics() {
        let x = linspace(0.0, 1.0, 9);
        let h = x[1] - x[0];
        let f: Vec<f64> = x.iter().map(|t| t * t * t).collect();
        let d = d2(&f, h, false);
        assert!((d[0] - 0.0).abs() < 1e-10);
        assert!((d[8] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn div_flux_second_order() {
        let errs: Vec<f64> = [17, 33, 65]
            .iter()
            .map(|&n| {
                let x = linspace(0.0, 1.0, n);
                let h = x[1] - x[0];
                let c: Vec<f64> = x.iter().map(|t| 1.0 + t * t).collect();
                let u: Vec<f64> = x.iter().map(|t| t.sin()).collect();
                let exact: Vec<f64> = x
                    .iter()
                    .map(|t| 2.0 * t * t.cos() - (1.0 + t * t) * t.sin())
                    .collect();
                let d = div_flux(&c, &u, h);
                sup_norm(&d.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .collect();
        for p in observed_orders(&errs, 2.0) {
            assert!(p > 1.8, "order {p}");
        }
    }

    #[test]
    fn conservative_form_sums_to_zero() {
        let x = linspace(0.0, 1.0, 21);
        let h = x[1] - x[0];
        let c: Vec<f64> = x.iter().map(|t| 2.0 * t * (1.0 - t)).collect();
        let u: Vec<f64> = x.iter().map(|t| (3.0 * t).cos() + t).collect();
        let d = div_flux_conservative(&c, &u, h);
        let w = trapezoid_weights(x.len(), h);
        let s: f64 = d.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!(s.abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn constants_are_annihilated(c in -1e6f64..1e6, n in 4usize..40, periodic: bool) {
            let f = vec![c; n];
            prop_assert!(d1(&f, 0.1, periodic).iter().all(|v| *v == 0.0));
            prop_assert!(d2(&f, 0.1, periodic).iter().all(|v| *v == 0.0));
        }

        #[test]
        fn derivatives_are_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 4usize..30) {
            let x = linspace(0.0, 1.0, n);
            let h = x[1] - x[0];
            let f: Vec<f64> = x.iter().map(|t| t.exp()).collect();
            let g: Vec<f64> = x.iter().map(|t| t.sin()).collect();
            let fg: Vec<f64> = f.iter().zip(&g).map(|(p, q)| a * p + b * q).collect();
            let lhs = d2(&fg, h, false);
            let df = d2(&f, h, false);
            let dg = d2(&g, h, false);
            for k in 0..n {
                let rhs = a * df[k] + b * dg[k];
                prop_assert!((lhs[k] - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()) / (h * h));
            }
        }
    }
}
