//! Discretized (base coordinate x moment coordinate) domains.
//!
//! Samples are stored row-major with the base index outermost:
//! `index = base * n_tau + tau`. Both axes are uniform; the base axis is
//! periodic for circle and flat-torus slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Topology of the base coordinate `x` (the real part of the holomorphic
/// quotient coordinate; every field is independent of the imaginary part).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    /// Base of complex dimension zero: a single base sample.
    Point,
    /// Periodic base coordinate.
    Circle,
    /// One periodic real direction of a flat torus.
    FlatTorusSlice,
    /// Cylinder coordinate `s = log|zeta|` on a rotationally symmetric sphere,
    /// truncated to a finite interval.
    RadialSphereChart,
}

impl BaseKind {
    pub fn is_periodic(self) -> bool {
        matches!(self, BaseKind::Circle | BaseKind::FlatTorusSlice)
    }

    /// Complex dimension of the base.
    pub fn complex_dim(self) -> usize {
        match self {
            BaseKind::Point => 0,
            _ => 1,
        }
    }
}

/// Marker for an endpoint of the moment interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndKind {
    /// `|V| -> 0`: the level is a fixed-point component of the circle action.
    FixedPoint,
    Free,
}

const MIN_NODES: usize = 4;
const UNIFORM_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartGrid {
    pub base_kind: BaseKind,
    pub base_nodes: Vec<f64>,
    pub tau_nodes: Vec<f64>,
    pub tau_start: EndKind,
    pub tau_end: EndKind,
    /// Period of the base coordinate (periodic kinds only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_period: Option<f64>,
}

fn check_uniform(nodes: &[f64], axis: &str) -> Result<f64> {
    if nodes.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid(format!("{axis} nodes must be finite")));
    }
    for w in nodes.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidGrid(format!("{axis} nodes must be strictly increasing")));
        }
    }
    let n = nodes.len();
    let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    for (k, v) in nodes.iter().enumerate() {
        let expect = nodes[0] + k as f64 * h;
        if (v - expect).abs() > UNIFORM_RTOL * h.abs().max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "{axis} nodes must be uniformly spaced (node {k} is {v}, expected {expect})"
            )));
        }
    }
    Ok(h)
}

impl ChartGrid {
    pub fn new(
        base_kind: BaseKind,
        base_nodes: Vec<f64>,
        tau_nodes: Vec<f64>,
        tau_start: EndKind,
        tau_end: EndKind,
        base_period: Option<f64>,
    ) -> Result<Self> {
        if tau_nodes.len() < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} tau nodes, got {}",
                tau_nodes.len()
            )));
        }
        check_uniform(&tau_nodes, "tau")?;
        match base_kind {
            BaseKind::Point => {
                if base_nodes.len() != 1 {
                    return Err(Error::InvalidGrid("point base carries exactly one node".into()));
                }
            }
            _ => {
                if base_nodes.len() < MIN_NODES {
                    return Err(Error::InvalidGrid(format!(
                        "need at least {MIN_NODES} base nodes, got {}",
                        base_nodes.len()
                    )));
                }
                let h = check_uniform(&base_nodes, "base")?;
                if base_kind.is_periodic() {
                    let period = base_period.ok_or_else(|| {
                        Error::InvalidGrid("periodic base requires a period".into())
                    })?;
                    let expect = h * base_nodes.len() as f64;
                    if (period - expect).abs() > 1e-9 * period.abs().max(1.0) {
                        return Err(Error::InvalidGrid(format!(
                            "period {period} inconsistent with spacing (expected {expect})"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            base_kind,
            base_nodes,
            tau_nodes,
            tau_start,
            tau_end,
            base_period: if base_kind.is_periodic() { base_period } else { None },
        })
    }

    /// Uniform grid. For periodic kinds `base_range` is one full period and the
    /// right endpoint is not sampled; for `Point` the base is `[base_range.0]`.
    pub fn uniform(
        base_kind: BaseKind,
        base_range: (f64, f64),
        n_base: usize,
        tau_range: (f64, f64),
        n_tau: usize,
        ends: (EndKind, EndKind),
    ) -> Result<Self> {
        let tau = linspace(tau_range.0, tau_range.1, n_tau);
        let (base, period) = match base_kind {
            BaseKind::Point => (vec![base_range.0], None),
            k if k.is_periodic() => {
                let period = base_range.1 - base_range.0;
                let h = period / n_base as f64;
                ((0..n_base).map(|i| base_range.0 + i as f64 * h).collect(), Some(period))
            }
            _ => (linspace(base_range.0, base_range.1, n_base), None),
        };
        Self::new(base_kind, base, tau, ends.0, ends.1, period)
    }

    /// A moment-interval-only grid (base of dimension zero).
    pub fn moment_interval(tau_range: (f64, f64), n_tau: usize, ends: (EndKind, EndKind)) -> Result<Self> {
        Self::uniform(BaseKind::Point, (0.0, 0.0), 1, tau_range, n_tau, ends)
    }

    pub fn n_base(&self) -> usize {
        self.base_nodes.len()
    }

    pub fn n_tau(&self) -> usize {
        self.tau_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.n_base() * self.n_tau()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, base: usize, tau: usize) -> usize {
        base * self.n_tau() + tau
    }

    /// Inverse of [`ChartGrid::idx`].
    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.n_tau(), k % self.n_tau())
    }

    pub fn dtau(&self) -> f64 {
        self.tau_nodes[1] - self.tau_nodes[0]
    }

    /// Base spacing; `None` for a point base.
    pub fn dx(&self) -> Option<f64> {
        if self.base_kind == BaseKind::Point {
            None
        } else {
            Some(self.base_nodes[1] - self.base_nodes[0])
        }
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_nodes[0]
    }

    pub fn tau_max(&self) -> f64 {
        *self.tau_nodes.last().unwrap()
    }

    /// Whether the tau index is a flagged fixed-point endpoint.
    pub fn is_fixed_point(&self, tau: usize) -> bool {
        (tau == 0 && self.tau_start == EndKind::FixedPoint)
            || (tau + 1 == self.n_tau() && self.tau_end == EndKind::FixedPoint)
    }

    /// Same layout (kind, node counts, nodes, flags) as `other`.
    pub fn same_layout(&self, other: &ChartGrid) -> bool {
        self.base_kind == other.base_kind
            && self.tau_start == other.tau_start
            && self.tau_end == other.tau_end
            && self.base_nodes.len() == other.base_nodes.len()
            && self.tau_nodes.len() == other.tau_nodes.len()
            && self
                .base_nodes
                .iter()
                .zip(&other.base_nodes)
                .chain(self.tau_nodes.iter().zip(&other.tau_nodes))
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }

    pub fn ensure_same(&self, other: &ChartGrid, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(what.to_string()))
        }
    }

    /// Sample a function of `(x, tau)` on the grid.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &x in &self.base_nodes {
            for &t in &self.tau_nodes {
                out.push(f(x, t));
            }
        }
        out
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { b } else { a + k as f64 * h }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_nonuniform_axes() {
        let short = ChartGrid::moment_interval((0.0, 1.0), 3, (EndKind::Free, EndKind::Free));
        assert!(matches!(short, Err(Error::InvalidGrid(_))));
        let bad = ChartGrid::new(
            BaseKind::Point,
            vec![0.0],
            vec![0.0, 0.1, 0.3, 0.4],
            EndKind::Free,
            EndKind::Free,
            None,
        );
        assert!(matches!(bad, Err(Error::InvalidGrid(_))));
        let decreasing = ChartGrid::new(
            BaseKind::Point,
            vec![0.0],
            vec![0.3, 0.2, 0.1, 0.0],
            EndKind::Free,
            EndKind::Free,
            None,
        );
        assert!(decreasing.is_err());
    }

    #[test]
    fn periodic_grid_excludes_right_endpoint() {
        let g = ChartGrid::uniform(
            BaseKind::Circle,
            (0.0, 1.0),
            8,
            (0.0, 1.0),
            5,
            (EndKind::FixedPoint, EndKind::Free),
        )
        .unwrap();
        assert_eq!(g.n_base(), 8);
        assert!((g.dx().unwrap() - 0.125).abs() < 1e-15);
        assert!(g.is_fixed_point(0));
        assert!(!g.is_fixed_point(4));
        assert_eq!(g.split(g.idx(3, 2)), (3, 2));
    }
}
