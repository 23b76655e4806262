//! Versioned experiment configuration. Every record rejects unknown keys and
//! falls back to defaults for missing ones.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vsoliton_core::lift::FStrategy;
use vsoliton_core::ma::{NewtonOptions, PathSpec};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default, rename = "lift-descend", skip_serializing_if = "Option::is_none")]
    pub lift_descend: Option<LiftDescendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip: Option<FlipConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn current() -> Self {
        Self { version: SCHEMA_VERSION, ..Self::default() }
    }
}

pub fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    /// Constant metric on the periodic chart.
    Flat,
    /// `h = 1/w_inv = 2 + 0.3 cos x cosh τ`, Kähler on the periodic chart.
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub charts: Vec<ChartKind>,
    /// Coarse resolution; the fine run doubles it.
    pub grid: usize,
    /// Perturb h away from the Kähler condition (negative control).
    pub corrupt: bool,
    /// Allowed deviation of the observed order from 2.
    pub tol: f64,
    /// Residuals at or below this on both grids count as exact.
    pub exact_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { charts: vec![ChartKind::Flat, ChartKind::Harmonic], grid: 64, corrupt: false, tol: 0.3, exact_tol: 1e-10 }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> CliResult<()> {
        positive("verify.tol", self.tol)?;
        positive("verify.exact_tol", self.exact_tol)?;
        if self.grid < 8 {
            return Err(CliError::Config("verify.grid must be at least 8".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowModel {
    FlatCircle,
    RoundSphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub model: FlowModel,
    pub n: usize,
    pub lambda: f64,
    /// Half-width of the sphere chart in the arclength-like coordinate.
    pub half_width: f64,
    /// Amplitude `a` of the potential `a exp(-2 s²)` added to the
    /// Kähler-Einstein start.
    pub amplitude: f64,
    pub t_end: f64,
    pub n_out: usize,
    /// Step size; defaults to half the stability bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub tol: f64,
    /// Required ratio of the final to the initial curvature gap.
    pub decay: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            model: FlowModel::RoundSphere,
            n: 65,
            lambda: 1.0,
            half_width: 3.0,
            amplitude: 0.0,
            t_end: 0.5,
            n_out: 11,
            dt: None,
            tol: 1e-8,
            decay: 0.05,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> CliResult<()> {
        positive("flow.tol", self.tol)?;
        positive("flow.t_end", self.t_end)?;
        positive("flow.half_width", self.half_width)?;
        positive("flow.decay", self.decay)?;
        if let Some(dt) = self.dt {
            positive("flow.dt", dt)?;
        }
        if self.n < 8 || self.n_out < 2 {
            return Err(CliError::Config("flow needs n >= 8 and n_out >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProductConfig {
    pub n: usize,
    pub half_width: f64,
    pub lambda: f64,
    pub n_tau: usize,
    pub tol: f64,
}

impl Default for ProductConfig {
    fn default() -> Self {
        Self { n: 65, half_width: 3.0, lambda: 0.5, n_tau: 33, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftDescendConfig {
    pub n_base: usize,
    /// Coarse number of moment levels; the fine run uses `2 n_tau − 1`.
    pub n_tau: usize,
    pub lambda: f64,
    pub c: f64,
    pub tau_max: f64,
    /// Amplitude of the non-constant torus profile.
    pub amplitude: f64,
    pub f: FStrategy,
    /// Perturb f' after lifting (negative control for part (iv)).
    pub corrupt_f: bool,
    /// Descend at this fraction of the τ range (snapped to a node).
    pub descend_at: f64,
    /// Allowed deviation of observed orders from 2.
    pub tol: f64,
    pub c_spread_tol: f64,
    pub product: ProductConfig,
}

impl Default for LiftDescendConfig {
    fn default() -> Self {
        Self {
            n_base: 32,
            n_tau: 65,
            lambda: 1.0,
            c: 1.0,
            tau_max: 1.0,
            amplitude: 0.2,
            f: FStrategy::FanoDefault,
            corrupt_f: false,
            descend_at: 0.25,
            tol: 0.3,
            c_spread_tol: 1e-6,
            product: ProductConfig::default(),
        }
    }
}

impl LiftDescendConfig {
    pub fn validate(&self) -> CliResult<()> {
        positive("lift-descend.tol", self.tol)?;
        positive("lift-descend.c_spread_tol", self.c_spread_tol)?;
        positive("lift-descend.product.tol", self.product.tol)?;
        positive("lift-descend.c", self.c)?;
        positive("lift-descend.tau_max", self.tau_max)?;
        if self.n_tau < 9 || self.n_base < 8 {
            return Err(CliError::Config("lift-descend needs n_tau >= 9 and n_base >= 8".into()));
        }
        if !(0.0..1.0).contains(&self.descend_at) {
            return Err(CliError::Config("lift-descend.descend_at must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveChart {
    /// Point base, τ ∈ [0, 1], `w_inv = 2τ(1−τ)`.
    Round,
    /// Circle base times the same fiber.
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum FSpec {
    Zero,
    /// `F = ax cos x sin πτ + at τ`.
    Trig { ax: f64, at: f64 },
    /// Samples in grid order (base index fastest).
    Samples { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub chart: SolveChart,
    pub n_x: usize,
    pub n_tau: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub allow_negative_lambda: bool,
    pub f: FSpec,
    pub newton: NewtonOptions,
    pub path: PathSpec,
    pub dual_seed: bool,
    /// Tolerance against the closed form on the round chart.
    pub oracle_tol: f64,
    pub dual_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            chart: SolveChart::Torus,
            n_x: 16,
            n_tau: 33,
            epsilon: 0.1,
            lambda: 0.0,
            allow_negative_lambda: false,
            f: FSpec::Trig { ax: 0.3, at: 0.2 },
            newton: NewtonOptions::default(),
            path: PathSpec::default(),
            dual_seed: true,
            oracle_tol: 1e-10,
            dual_tol: 1e-8,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> CliResult<()> {
        positive("solve.epsilon", self.epsilon)?;
        positive("solve.newton.tol", self.newton.tol)?;
        positive("solve.oracle_tol", self.oracle_tol)?;
        positive("solve.dual_tol", self.dual_tol)?;
        if self.n_tau < 5 || (self.chart == SolveChart::Torus && self.n_x < 4) {
            return Err(CliError::Config("solve needs n_tau >= 5 (and n_x >= 4 on the torus)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlipConfig {
    pub m: usize,
    pub order: usize,
    pub r0: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub rtol: f64,
    pub atol: f64,
    pub residual_r_max: f64,
    pub rho: Vec<f64>,
    pub tau_range: (f64, f64),
    pub n_tau: usize,
    pub s_range: (f64, f64),
    pub n_s: usize,
    pub overlap_tol: f64,
    pub ode_tol: f64,
    pub tol: f64,
    pub c_tol: f64,
    /// Allowed deviation below order 2 for the descended flow residual.
    pub order_tol: f64,
}

impl Default for FlipConfig {
    fn default() -> Self {
        Self {
            m: 2,
            order: 10,
            r0: 0.1,
            r_max: 1.5,
            n_r: 1501,
            rtol: 1e-12,
            atol: 1e-14,
            residual_r_max: 1.0,
            rho: (0..10).map(|k| 0.1 + 0.1 * k as f64).collect(),
            tau_range: (0.2, 0.4),
            n_tau: 33,
            s_range: (0.1, 0.3),
            n_s: 65,
            overlap_tol: 1e-8,
            ode_tol: 1e-9,
            tol: 1e-6,
            c_tol: 1e-6,
            order_tol: 0.2,
        }
    }
}

impl FlipConfig {
    pub fn validate(&self) -> CliResult<()> {
        for (name, v) in [
            ("flip.rtol", self.rtol),
            ("flip.atol", self.atol),
            ("flip.overlap_tol", self.overlap_tol),
            ("flip.ode_tol", self.ode_tol),
            ("flip.tol", self.tol),
            ("flip.c_tol", self.c_tol),
            ("flip.order_tol", self.order_tol),
            ("flip.r0", self.r0),
        ] {
            positive(name, v)?;
        }
        if self.m == 0 || self.order < 2 {
            return Err(CliError::Config("flip needs m >= 1 and order >= 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn configs_round_trip_through_json(
            grid in 8usize..512,
            tol in 1e-6f64..1.0,
            corrupt: bool,
            amplitude in 0.0f64..0.3,
            m in 1usize..6,
            tau in (0.01f64..1.0, 1.0f64..2.0),
        ) {
            let cfg = ExperimentConfig {
                verify: Some(VerifyConfig { grid, tol, corrupt, ..Default::default() }),
                flow: Some(FlowConfig { amplitude, dt: Some(tol), ..Default::default() }),
                lift_descend: Some(LiftDescendConfig { amplitude, ..Default::default() }),
                solve: Some(SolveConfig { f: FSpec::Trig { ax: amplitude, at: tol }, ..Default::default() }),
                flip: Some(FlipConfig { m, tau_range: tau, ..Default::default() }),
                ..ExperimentConfig::current()
            };
            let text = serde_json::to_string(&cfg).unwrap();
            prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn missing_keys_take_defaults() {
        let cfg = ExperimentConfig::parse(r#"{"version": 1, "flip": {"m": 3}}"#).unwrap();
        assert_eq!(cfg.flip, Some(FlipConfig { m: 3, ..Default::default() }));
        assert_eq!(cfg.verify, None);
        let s = ExperimentConfig::parse(r#"{"version": 1, "solve": {"f": {"kind": "samples", "values": [1.0]}}}"#).unwrap();
        assert_eq!(s.solve.unwrap().f, FSpec::Samples { values: vec![1.0] });
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        assert!(ExperimentConfig::parse(r#"{"version": 1, "flip": {"mm": 3}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"version": 1, "solve": {"newton": {"tolerance": 1}}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"verify": {}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"version": 2}"#).is_err());
    }
}
