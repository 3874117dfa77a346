//! Curve reconstruction from derivative estimates and monotonicity checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DerivativeRoute, Evaluator, STANDARD_WINDOW};
use crate::model::{ModelParams, ReplicationDraw, Variant, VectorSet};
use crate::sampling::{sample_draws, DrawFunctional, Estimate, SampleTable, SeedPlan};
use crate::scalar::Real;

/// Largest admissible quadrature step.
pub const MAX_STEP: f64 = 0.1;

/// Default quadrature step.
pub const DEFAULT_STEP: f64 = 0.05;

fn snap(t: f64) -> f64 {
    // Grid nodes are rounded to 12 decimals so that e.g. 6 * 0.05 is exactly 0.3.
    (t * 1e12).round() / 1e12
}

/// Nodes `start, start + step, ..., stop`; `stop - start` must be a multiple of `step`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(Error::InvalidInput(format!(
            "bad grid {start}:{stop}:{step}"
        )));
    }
    let intervals = (stop - start) / step;
    let k = intervals.round();
    if (intervals - k).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "grid span {} is not a multiple of the step {step}",
            stop - start
        )));
    }
    let grid: Vec<f64> = (0..=k as usize)
        .map(|i| snap(start + i as f64 * step))
        .collect();
    if let Some(&bad) = grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::OutOfDomain(bad));
    }
    Ok(grid)
}

fn check_integration_grid(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::InvalidInput(
            "the integration grid needs at least two nodes".into(),
        ));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidInput(
            "the integration grid must start at t = 0".into(),
        ));
    }
    if let Some(&bad) = grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::OutOfDomain(bad));
    }
    let h = grid[1] - grid[0];
    if h <= 0.0 || h > MAX_STEP + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "the quadrature step must lie in (0, {MAX_STEP}], got {h}"
        )));
    }
    if grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9) {
        return Err(Error::InvalidInput(
            "the integration grid must be uniform".into(),
        ));
    }
    Ok(h)
}

/// The point at which the standard route is evaluated for grid node `t`.
pub fn standard_node(t: f64) -> f64 {
    t.clamp(STANDARD_WINDOW.0, STANDARD_WINDOW.1)
}

struct CurveFunctional<'a, T> {
    ev: Evaluator<'a, T>,
    grid: Vec<f64>,
}

impl<T: Real> DrawFunctional<T> for CurveFunctional<'_, T> {
    fn width(&self) -> usize {
        3 * self.grid.len()
    }

    fn evaluate(&self, draw: &ReplicationDraw<T>, out: &mut [f64]) -> Result<()> {
        for (k, &t) in self.grid.iter().enumerate() {
            let state = self.ev.state(draw, T::of(t))?;
            let clipped = standard_node(t);
            let standard = if clipped == t {
                self.ev.dpsi_standard(draw, &state)?
            } else {
                let shifted = self.ev.state(draw, T::of(clipped))?;
                self.ev.dpsi_standard(draw, &shifted)?
            };
            out[3 * k] = self.ev.psi(&state).as_f64();
            out[3 * k + 1] = standard.as_f64();
            out[3 * k + 2] = self.ev.dpsi_computed(&state)?.as_f64();
        }
        Ok(())
    }
}

/// A reconstructed curve with both derivative routes on common random numbers.
#[derive(Debug, Clone)]
pub struct CurveResult {
    pub t_grid: Vec<f64>,
    pub psi_direct: Vec<Estimate>,
    /// Standard-route derivative; nodes outside the window reuse the nearest window edge.
    pub dpsi_standard: Vec<Estimate>,
    pub dpsi_computed: Vec<Estimate>,
    /// `psi(0)` plus the cumulative trapezoid of the standard-route derivative.
    pub psi_from_standard: Vec<Estimate>,
    /// `psi(0)` plus the cumulative trapezoid of the computed-route derivative.
    pub psi_from_computed: Vec<Estimate>,
    /// Trapezoid bias bound at each node for the standard route.
    pub quad_error_standard: Vec<f64>,
    /// Trapezoid bias bound at each node for the computed route.
    pub quad_error_computed: Vec<f64>,
    /// Route whose integral is reported as the primary reconstruction.
    pub route: DerivativeRoute,
    pub variant: Variant,
    pub samples: SampleTable,
}

impl CurveResult {
    /// Integrated curve of the selected route.
    pub fn psi_integrated(&self) -> &[Estimate] {
        match self.route {
            DerivativeRoute::Standard => &self.psi_from_standard,
            DerivativeRoute::Computed => &self.psi_from_computed,
        }
    }

    /// Index of the node equal to `t` (up to rounding), if any.
    pub fn node(&self, t: f64) -> Option<usize> {
        self.t_grid.iter().position(|&x| (x - t).abs() < 1e-9)
    }

    /// Step of the grid.
    pub fn step(&self) -> f64 {
        self.t_grid[1] - self.t_grid[0]
    }
}

fn cumulative_trapezoid(
    samples: &SampleTable,
    n_nodes: usize,
    h: f64,
    offset: usize,
) -> Result<Vec<Estimate>> {
    (0..n_nodes)
        .map(|k| {
            let mut terms = vec![(0usize, 1.0)];
            for r in 0..k {
                terms.push((3 * r + offset, 0.5 * h));
                terms.push((3 * (r + 1) + offset, 0.5 * h));
            }
            samples.combination(&terms)
        })
        .collect()
}

fn bias_bounds(grid: &[f64], deriv: &[Estimate]) -> Vec<f64> {
    let max_second = deriv
        .windows(3)
        .map(|w| (w[0].mean - 2.0 * w[1].mean + w[2].mean).abs())
        .fold(0.0, f64::max);
    grid.iter()
        .map(|&t| (t - grid[0]) * max_second / 12.0)
        .collect()
}

/// Estimates the functional, both derivative routes, and both integrated
/// curves on a uniform grid starting at `t = 0`, all from one set of draws.
pub fn integrate_curve<T: Real>(
    set: &VectorSet<T>,
    params: &ModelParams<T>,
    grid: &[f64],
    plan: &SeedPlan,
    route: DerivativeRoute,
) -> Result<CurveResult> {
    let h = check_integration_grid(grid)?;
    let functional = CurveFunctional {
        ev: Evaluator::new(set, params)?,
        grid: grid.to_vec(),
    };
    let samples = sample_draws(set, params.m, plan, &functional)?;
    let n_nodes = grid.len();
    let column = |off: usize| {
        (0..n_nodes)
            .map(|k| samples.estimate(3 * k + off))
            .collect::<Result<Vec<_>>>()
    };
    let psi_direct = column(0)?;
    let dpsi_standard = column(1)?;
    let dpsi_computed = column(2)?;
    let psi_from_standard = cumulative_trapezoid(&samples, n_nodes, h, 1)?;
    let psi_from_computed = cumulative_trapezoid(&samples, n_nodes, h, 2)?;
    Ok(CurveResult {
        t_grid: grid.to_vec(),
        quad_error_standard: bias_bounds(grid, &dpsi_standard),
        quad_error_computed: bias_bounds(grid, &dpsi_computed),
        psi_direct,
        dpsi_standard,
        dpsi_computed,
        psi_from_standard,
        psi_from_computed,
        route,
        variant: params.variant,
        samples,
    })
}

/// Expected direction of a curve in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Decreasing,
    Increasing,
}

/// One adjacent-pair comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCheck {
    pub t_from: f64,
    pub t_to: f64,
    /// Change in the expected direction; negative values are violations.
    pub margin: f64,
    /// Three combined standard errors.
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub expected: Trend,
    pub pairs: Vec<PairCheck>,
    /// Smallest margin over all pairs.
    pub worst_margin: f64,
    pub pass: bool,
}

/// Checks the ordering of adjacent estimates up to three combined standard errors.
pub fn monotonicity_of(t: &[f64], values: &[Estimate], expected: Trend) -> MonotonicityReport {
    let pairs: Vec<PairCheck> = t
        .windows(2)
        .zip(values.windows(2))
        .map(|(tw, vw)| {
            let change = vw[1].mean - vw[0].mean;
            let margin = match expected {
                Trend::Decreasing => -change,
                Trend::Increasing => change,
            };
            let tolerance = 3.0 * vw[0].combined_se(&vw[1]);
            PairCheck {
                t_from: tw[0],
                t_to: tw[1],
                margin,
                tolerance,
                ok: margin >= -tolerance,
            }
        })
        .collect();
    let worst_margin = pairs.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
    let pass = pairs.iter().all(|p| p.ok);
    MonotonicityReport {
        expected,
        pairs,
        worst_margin,
        pass,
    }
}

/// Monotonicity of the directly estimated curve.
pub fn monotonicity_check(curve: &CurveResult, expected: Trend) -> MonotonicityReport {
    monotonicity_of(&curve.t_grid, &curve.psi_direct, expected)
}

/// Agreement between the two integrated curves at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeGap {
    pub t: f64,
    pub gap: f64,
    pub allowance: f64,
    pub ok: bool,
}

/// Compares the two integrated curves node by node, allowing three combined
/// standard errors plus both trapezoid bias bounds.
pub fn route_consistency(curve: &CurveResult) -> Vec<NodeGap> {
    (0..curve.t_grid.len())
        .map(|k| {
            let (a, b) = (&curve.psi_from_standard[k], &curve.psi_from_computed[k]);
            let gap = (a.mean - b.mean).abs();
            let allowance = 3.0 * a.combined_se(b)
                + curve.quad_error_standard[k]
                + curve.quad_error_computed[k];
            NodeGap {
                t: curve.t_grid[k],
                gap,
                allowance,
                ok: gap <= allowance,
            }
        })
        .collect()
}

/// Compares the two derivative routes at the nodes where the standard route
/// is evaluated at the node itself.
pub fn derivative_agreement(curve: &CurveResult) -> Vec<NodeGap> {
    (0..curve.t_grid.len())
        .filter(|&k| standard_node(curve.t_grid[k]) == curve.t_grid[k])
        .map(|k| {
            let (a, b) = (&curve.dpsi_standard[k], &curve.dpsi_computed[k]);
            let gap = (a.mean - b.mean).abs();
            let allowance = 3.0 * a.combined_se(b);
            NodeGap {
                t: curve.t_grid[k],
                gap,
                allowance,
                ok: gap <= allowance,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_are_exact_decimals() {
        let g = uniform_grid(0.0, 1.0, 0.05).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[6], 0.3);
        assert_eq!(g[14], 0.7);
        assert_eq!(g[20], 1.0);
    }

    #[test]
    fn grid_rejects_bad_spans() {
        assert!(uniform_grid(0.0, 1.0, 0.3).is_err());
        assert!(uniform_grid(0.0, 1.2, 0.1).is_err());
        assert!(uniform_grid(0.0, 1.0, 0.0).is_err());
        assert!(check_integration_grid(&[0.0, 0.2, 0.4]).is_err());
        assert!(check_integration_grid(&[0.1, 0.2]).is_err());
        assert!(check_integration_grid(&[0.0, 0.05, 0.1]).is_ok());
    }

    fn est(mean: f64, se: f64) -> Estimate {
        Estimate {
            mean,
            std_error: se,
            n: 100,
            skipped: 0,
        }
    }

    #[test]
    fn monotonicity_tolerates_noise_but_flags_real_rises() {
        let t = [0.1, 0.5, 0.9];
        let flat = [est(1.0, 0.01), est(1.01, 0.01), est(1.0, 0.01)];
        assert!(monotonicity_of(&t, &flat, Trend::Decreasing).pass);
        assert!(monotonicity_of(&t, &flat, Trend::Increasing).pass);
        let rising = [est(1.0, 0.01), est(1.2, 0.01), est(1.4, 0.01)];
        let rep = monotonicity_of(&t, &rising, Trend::Decreasing);
        assert!(!rep.pass);
        assert!((rep.worst_margin + 0.2).abs() < 1e-12);
    }

    #[test]
    fn bias_bound_grows_linearly() {
        let g = [0.0, 0.1, 0.2, 0.3];
        let d = [est(0.0, 0.0), est(1.0, 0.0), est(4.0, 0.0), est(9.0, 0.0)];
        let b = bias_bounds(&g, &d);
        assert_eq!(b[0], 0.0);
        assert!((b[3] - 0.3 * 2.0 / 12.0).abs() < 1e-15);
    }
}
