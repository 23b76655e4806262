//! Adaptive Dormand-Prince 5(4) integration that lands exactly on requested
//! output abscissae.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `(t0, y0)` and return the state at every
/// entry of `outputs` (monotone, in the direction of integration). `stop` is
/// evaluated after each accepted step and aborts with its message.
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: OdeOptions,
    mut stop: S,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    S: FnMut(f64, &[f64]) -> Option<String>,
{
    let Some(&t_last) = outputs.last() else {
        return Ok(Vec::new());
    };
    let dir = if t_last >= t0 { 1.0 } else { -1.0 };
    for w in outputs.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::InvalidInput("output abscissae must be monotone".into()));
        }
    }
    if (outputs[0] - t0) * dir < 0.0 {
        return Err(Error::InvalidInput("first output lies behind the start point".into()));
    }

    let dim = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = opts.h_init.abs() * dir;
    let mut out = Vec::with_capacity(outputs.len());
    let mut next = 0;
    let mut steps = 0;
    let mut k = vec![vec![0.0; dim]; 7];
    k[0] = f(t, &y)?;

    while next < outputs.len() {
        let target = outputs[next];
        if (target - t).abs() <= 1e-14 * target.abs().max(1.0) {
            out.push(y.clone());
            next += 1;
            continue;
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::OdeStopped { at: t, reason: "step budget exhausted".into() });
        }
        let mut landing = false;
        if (t + h - target) * dir > 0.0 {
            h = target - t;
            landing = true;
        }
        let mut ytmp = vec![0.0; dim];
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            k[s] = f(t + C[s] * h, &ytmp)?;
        }
        let mut err = 0.0_f64;
        let mut ynew = vec![0.0; dim];
        for i in 0..dim {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for s in 0..7 {
                s5 += B5[s] * k[s][i];
                s4 += B4[s] * k[s][i];
            }
            ynew[i] = y[i] + h * s5;
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err = err.max((h * (s5 - s4)).abs() / sc);
        }
        if !err.is_finite() {
            h *= 0.25;
            if h.abs() < opts.h_min {
                return Err(Error::OdeStopped { at: t, reason: "non-finite derivative".into() });
            }
            continue;
        }
        if err <= 1.0 {
            t = if landing { target } else { t + h };
            y = ynew;
            k[0] = k[6].clone();
            if let Some(reason) = stop(t, &y) {
                return Err(Error::OdeStopped { at: t, reason });
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < opts.h_min {
            return Err(Error::OdeStopped { at: t, reason: "step size underflow".into() });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_lands_on_outputs() {
        let outs = [0.5, 1.0, 2.0];
        let ys = integrate(|_, y| Ok(vec![y[0]]), 0.0, &[1.0], &outs, OdeOptions::default(), |_, _| None).unwrap();
        for (t, y) in outs.iter().zip(&ys) {
            assert!((y[0] - t.exp()).abs() < 1e-8 * t.exp());
        }
    }

    #[test]
    fn backward_integration() {
        let ys = integrate(
            |t, _| Ok(vec![t.cos()]),
            1.0,
            &[1.0_f64.sin()],
            &[0.0],
            OdeOptions::default(),
            |_, _| None,
        )
        .unwrap();
        assert!(ys[0][0].abs() < 1e-10);
    }

    #[test]
    fn stop_condition_reports_location() {
        let r = integrate(
            |_, _| Ok(vec![-1.0]),
            0.0,
            &[1.0],
            &[2.0],
            OdeOptions::default(),
            |_, y| (y[0] <= 0.0).then(|| "crossed zero".to_string()),
        );
        assert!(matches!(r, Err(Error::OdeStopped { .. })));
    }
}
