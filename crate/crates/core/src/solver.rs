//! Closed-form optimal decisions under absolute herd behavior with unilateral
//! influence, and the fixed-point iteration for the constant `eta`.
//!
//! Agent 2 (the advisor) follows the Merton amount
//!
//! ```text
//! P2(t) = v / (a2 s^2) * exp[r (t - T)]
//! ```
//!
//! and agent 1, pulled toward agent 2 with weight `theta`, invests
//!
//! ```text
//! P1(t) = (a2 s^2 eta e^{2r(T-t)} + theta) / (a1 s^2 eta e^{2r(T-t)} + theta) * P2(t)
//! ```
//!
//! where `eta` solves
//!
//! ```text
//! eta = eta0 * exp( int_0^T  w^2 v^2 (a1/a2 - 1)^2 / (2 s^2 (eta e^{2r(T-t)} + w)^2) dt )
//! eta0 = exp(-a1 x0 e^{rT} - v^2 T / (2 s^2)),   w = theta / (a1 s^2)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{DecisionPath, MarketParams};
use crate::quad;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Simpson panels for the integral over `[0, T]`.
    pub quadrature_panels: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-10,
            max_iterations: 100,
            quadrature_panels: 1000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 || self.quadrature_panels < 2 {
            return Err(Error::invalid(
                "max_iterations must be >= 1 and quadrature_panels >= 2",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaSolution {
    pub eta: f64,
    pub iterations: usize,
    pub residual: f64,
}

fn check_attributes(alpha1: f64, alpha2: f64, theta: f64) -> Result<()> {
    if !(alpha1 > 0.0 && alpha1.is_finite()) || !(alpha2 > 0.0 && alpha2.is_finite()) {
        return Err(Error::invalid(format!(
            "risk aversion must be > 0 (alpha1 = {alpha1}, alpha2 = {alpha2})"
        )));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("theta must be >= 0, got {theta}")));
    }
    Ok(())
}

/// Starting value of the iteration.
pub fn eta_initial(params: &MarketParams, alpha1: f64) -> f64 {
    let t = params.horizon_years();
    (-alpha1 * params.x0 * (params.r * t).exp() - params.v * params.v * t
        / (2.0 * params.sigma * params.sigma))
        .exp()
}

/// One application of the iteration map `eta -> eta0 * exp(integral)`.
pub fn eta_map(
    params: &MarketParams,
    alpha1: f64,
    alpha2: f64,
    theta: f64,
    eta: f64,
    panels: usize,
) -> f64 {
    let s2 = params.sigma * params.sigma;
    let w = theta / (alpha1 * s2);
    let gap = alpha1 / alpha2 - 1.0;
    let numer = w * w * params.v * params.v * gap * gap;
    let eta0 = eta_initial(params, alpha1);
    if numer == 0.0 {
        return eta0;
    }
    let t_end = params.horizon_years();
    let r = params.r;
    let integrand = |t: f64| {
        let d = eta * (2.0 * r * (t_end - t)).exp() + w;
        numer / (2.0 * s2 * d * d)
    };
    eta0 * quad::simpson(integrand, 0.0, t_end, panels).exp()
}

pub fn solve_eta(
    params: &MarketParams,
    alpha1: f64,
    alpha2: f64,
    theta: f64,
    config: &SolverConfig,
) -> Result<EtaSolution> {
    params.validate()?;
    config.validate()?;
    check_attributes(alpha1, alpha2, theta)?;
    let mut eta = eta_initial(params, alpha1);
    let mut residual = f64::INFINITY;
    for k in 1..=config.max_iterations {
        let next = eta_map(params, alpha1, alpha2, theta, eta, config.quadrature_panels);
        residual = (next - eta).abs();
        eta = next;
        if residual < config.tolerance {
            return Ok(EtaSolution {
                eta,
                iterations: k,
                residual,
            });
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: config.max_iterations,
        residual,
    })
}

/// Advisor's Merton amount at time `t`.
pub fn optimal_p2(params: &MarketParams, alpha2: f64, t: f64) -> f64 {
    params.v / (alpha2 * params.sigma * params.sigma) * (params.r * (t - params.horizon_years())).exp()
}

/// Herd-influenced amount of agent 1 at time `t` for a solved `eta`.
pub fn optimal_p1(
    params: &MarketParams,
    alpha1: f64,
    alpha2: f64,
    theta: f64,
    eta: f64,
    t: f64,
) -> f64 {
    let s2 = params.sigma * params.sigma;
    let g = eta * (2.0 * params.r * (params.horizon_years() - t)).exp();
    (alpha2 * s2 * g + theta) / (alpha1 * s2 * g + theta) * optimal_p2(params, alpha2, t)
}

pub fn merton_path(params: &MarketParams, alpha: f64) -> DecisionPath {
    DecisionPath::new(
        params
            .decision_times
            .iter()
            .map(|&t| optimal_p2(params, alpha, t))
            .collect(),
    )
}

/// Agent 1's optimal path together with the `eta` it was built from.
pub fn optimal_path_with_eta(
    params: &MarketParams,
    alpha1: f64,
    alpha2: f64,
    theta: f64,
    config: &SolverConfig,
) -> Result<(DecisionPath, EtaSolution)> {
    let sol = solve_eta(params, alpha1, alpha2, theta, config)?;
    let amounts = params
        .decision_times
        .iter()
        .map(|&t| optimal_p1(params, alpha1, alpha2, theta, sol.eta, t))
        .collect();
    Ok((DecisionPath::new(amounts), sol))
}

pub fn optimal_path(
    params: &MarketParams,
    alpha1: f64,
    alpha2: f64,
    theta: f64,
    config: &SolverConfig,
) -> Result<DecisionPath> {
    optimal_path_with_eta(params, alpha1, alpha2, theta, config).map(|(p, _)| p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HerdKind {
    /// Decisions compared level by level.
    Absolute,
    /// Year-over-year changes compared.
    Relative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HerdDistance {
    pub value: f64,
    pub kind: HerdKind,
}

pub fn herd_distance(
    path1: &DecisionPath,
    path2: &DecisionPath,
    kind: HerdKind,
) -> Result<HerdDistance> {
    if path1.len() != path2.len() {
        return Err(Error::invalid(format!(
            "paths differ in length ({} vs {})",
            path1.len(),
            path2.len()
        )));
    }
    let diffs: Vec<f64> = path1
        .amounts
        .iter()
        .zip(&path2.amounts)
        .map(|(a, b)| a - b)
        .collect();
    let value = match kind {
        HerdKind::Absolute => 0.5 * diffs.iter().map(|d| d * d).sum::<f64>(),
        HerdKind::Relative => {
            if diffs.len() < 2 {
                return Err(Error::invalid("relative distance needs at least two points"));
            }
            0.5 * diffs.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>()
        }
    };
    Ok(HerdDistance { value, kind })
}
