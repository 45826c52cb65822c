//! Financial environment and wealth dynamics.
//!
//! One risk-free deposit paying `r` and one stock with excess return `v` and
//! volatility `sigma`. An agent holding `P(t)` in the stock sees
//!
//! ```text
//! dX = [r X + v P] dt + sigma P dW
//! ```
//!
//! which is discretised with Euler–Maruyama. Each decision is held for the
//! interval up to the next decision time, split into `substeps` equal steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::percent::{format_percent, round_half_up};
use crate::rng;

/// Where the decision points sit inside the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionGrid {
    /// `{0, 1, ..., T-1}`: decide at the start of each year.
    StartOfYear,
    /// `{1, 2, ..., T}`: the questionnaire's labels.
    EndOfYear,
}

impl DecisionGrid {
    pub fn times(self, horizon: u32) -> Vec<f64> {
        match self {
            DecisionGrid::StartOfYear => (0..horizon).map(f64::from).collect(),
            DecisionGrid::EndOfYear => (1..=horizon).map(f64::from).collect(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "start" | "start_of_year" => Some(DecisionGrid::StartOfYear),
            "end" | "end_of_year" => Some(DecisionGrid::EndOfYear),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Deposit interest rate per year.
    pub r: f64,
    /// Excess return of the stock per year.
    pub v: f64,
    /// Stock volatility per sqrt-year.
    pub sigma: f64,
    /// Horizon in years.
    pub horizon: u32,
    /// Initial fund, millions.
    pub x0: f64,
    pub decision_times: Vec<f64>,
    /// Euler–Maruyama steps per decision interval.
    pub substeps: usize,
}

impl Default for MarketParams {
    fn default() -> Self {
        let horizon = 10;
        MarketParams {
            r: 0.04,
            v: 0.03,
            sigma: 0.17,
            horizon,
            x0: 10.0,
            decision_times: DecisionGrid::StartOfYear.times(horizon),
            substeps: 1,
        }
    }
}

impl MarketParams {
    pub fn with_grid(mut self, grid: DecisionGrid) -> Self {
        self.decision_times = grid.times(self.horizon);
        self
    }

    pub fn horizon_years(&self) -> f64 {
        f64::from(self.horizon)
    }

    pub fn decision_count(&self) -> usize {
        self.decision_times.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon must be at least 1 year"));
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::invalid(format!("x0 must be > 0, got {}", self.x0)));
        }
        if !self.r.is_finite() || !self.v.is_finite() {
            return Err(Error::invalid("r and v must be finite"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        let t_max = self.horizon_years();
        if self.decision_times.is_empty() {
            return Err(Error::invalid("decision_times is empty"));
        }
        if self.decision_times.iter().any(|&t| !(0.0..=t_max).contains(&t)) {
            return Err(Error::invalid("decision_times must lie within [0, T]"));
        }
        if self.decision_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("decision_times must be strictly increasing"));
        }
        Ok(())
    }

    /// Length of time each decision is held. The last decision runs to the
    /// horizon; when it sits on the horizon itself it is held for one more
    /// grid spacing, so both `DecisionGrid` layouts give ten unit intervals.
    pub fn hold_durations(&self) -> Vec<f64> {
        let ts = &self.decision_times;
        let mut out: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
        let Some(&last) = ts.last() else {
            return out;
        };
        let to_horizon = self.horizon_years() - last;
        let tail = if to_horizon > 0.0 {
            to_horizon
        } else {
            out.last().copied().unwrap_or(1.0)
        };
        out.push(tail);
        out
    }

    /// Total number of Euler–Maruyama steps across all decision intervals.
    pub fn total_steps(&self) -> usize {
        self.decision_count() * self.substeps
    }

    /// Step size when the grid is uniform.
    pub fn uniform_step(&self) -> Result<f64> {
        let holds = self.hold_durations();
        let h = holds[0];
        if holds.iter().any(|&d| (d - h).abs() > 1e-12 * h.max(1.0)) {
            return Err(Error::invalid("decision grid is not uniformly spaced"));
        }
        Ok(h / self.substeps as f64)
    }

    /// Brownian increments covering every decision interval of this market.
    pub fn noise(&self, seed: u64) -> Result<BrownianPath> {
        brownian_increments(seed, self.total_steps(), self.uniform_step()?)
    }
}

/// Risk aversion and influence coefficient of one agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvestorAttribute {
    pub alpha: f64,
    pub theta: f64,
}

impl InvestorAttribute {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::invalid(format!("theta must be >= 0, got {theta}")));
        }
        Ok(InvestorAttribute { alpha, theta })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub dt: f64,
    pub increments: Vec<f64>,
    pub seed: u64,
}

/// Gaussian increments `N(0, dt)` drawn from the seeded stream in [`rng`].
pub fn brownian_increments(seed: u64, steps: usize, dt: f64) -> Result<BrownianPath> {
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let mut stream = rng::stream(seed);
    let scale = dt.sqrt();
    let increments = (0..steps)
        .map(|_| scale * rng::standard_normal(&mut stream))
        .collect();
    Ok(BrownianPath {
        dt,
        increments,
        seed,
    })
}

/// Stock-invested amount at each decision time, millions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionPath {
    pub amounts: Vec<f64>,
}

impl DecisionPath {
    pub fn new(amounts: Vec<f64>) -> Self {
        DecisionPath { amounts }
    }

    pub fn zeros(n: usize) -> Self {
        DecisionPath {
            amounts: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.amounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amounts.is_empty()
    }
}

/// Fund level at each decision time plus the value after the last interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WealthPath {
    pub funds: Vec<f64>,
    pub terminal: f64,
}

/// One invested fraction kept as the ratio of its two amounts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub amount: f64,
    pub wealth: f64,
}

impl Fraction {
    pub fn value(&self) -> f64 {
        self.amount / self.wealth
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.value()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionPath {
    pub fractions: Vec<Fraction>,
}

impl ProportionPath {
    /// From percent values such as `34.79`.
    pub fn from_percents(pcts: &[f64]) -> Self {
        ProportionPath {
            fractions: pcts
                .iter()
                .map(|&p| Fraction {
                    amount: p,
                    wealth: 100.0,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn percents(&self) -> Vec<f64> {
        self.fractions.iter().map(Fraction::percent).collect()
    }

    /// Percents rounded half-up to two decimals.
    pub fn rounded_percents(&self) -> Vec<f64> {
        self.fractions
            .iter()
            .map(|f| round_half_up(f.percent(), 2))
            .collect()
    }

    pub fn rendered(&self) -> Vec<String> {
        self.fractions
            .iter()
            .map(|f| format_percent(f.percent()))
            .collect()
    }
}

fn check_noise(params: &MarketParams, noise: &BrownianPath) -> Result<()> {
    let need = params.total_steps();
    if noise.increments.len() != need {
        return Err(Error::invalid(format!(
            "noise has {} increments, market needs {need}",
            noise.increments.len()
        )));
    }
    for (i, h) in params.hold_durations().into_iter().enumerate() {
        let dt = h / params.substeps as f64;
        if (dt - noise.dt).abs() > 1e-12 * dt.max(1.0) {
            return Err(Error::invalid(format!(
                "noise dt {} does not match decision interval {i} step {dt}",
                noise.dt
            )));
        }
    }
    Ok(())
}

/// Advances `x` across one decision interval with the amount held fixed.
fn hold(params: &MarketParams, x: f64, amount: f64, dws: &[f64], dt: f64) -> f64 {
    dws.iter().fold(x, |x, &dw| {
        x + (params.r * x + params.v * amount) * dt + params.sigma * amount * dw
    })
}

pub fn simulate_wealth(
    params: &MarketParams,
    decisions: &DecisionPath,
    noise: &BrownianPath,
) -> Result<WealthPath> {
    params.validate()?;
    if decisions.len() != params.decision_count() {
        return Err(Error::invalid(format!(
            "{} decisions for {} decision times",
            decisions.len(),
            params.decision_count()
        )));
    }
    check_noise(params, noise)?;
    let m = params.substeps;
    let mut funds = Vec::with_capacity(decisions.len());
    let mut x = params.x0;
    for (i, &p) in decisions.amounts.iter().enumerate() {
        funds.push(x);
        x = hold(params, x, p, &noise.increments[i * m..(i + 1) * m], noise.dt);
    }
    Ok(WealthPath { funds, terminal: x })
}

pub fn proportions(decisions: &DecisionPath, wealth: &WealthPath) -> Result<ProportionPath> {
    if decisions.len() != wealth.funds.len() {
        return Err(Error::invalid(format!(
            "{} decisions against {} wealth points",
            decisions.len(),
            wealth.funds.len()
        )));
    }
    let fractions = decisions
        .amounts
        .iter()
        .zip(&wealth.funds)
        .enumerate()
        .map(|(index, (&amount, &w))| {
            if w == 0.0 {
                Err(Error::DegenerateWealth { index })
            } else {
                Ok(Fraction { amount, wealth: w })
            }
        })
        .collect::<Result<_>>()?;
    Ok(ProportionPath { fractions })
}

/// Rebuilds amounts from reported fractions: at each decision time the
/// amount is `fraction * X(t)`, then wealth moves forward one interval.
pub fn amounts_from_proportions(
    params: &MarketParams,
    fractions: &ProportionPath,
    noise: &BrownianPath,
) -> Result<(DecisionPath, WealthPath)> {
    params.validate()?;
    if fractions.len() != params.decision_count() {
        return Err(Error::invalid(format!(
            "{} fractions for {} decision times",
            fractions.len(),
            params.decision_count()
        )));
    }
    check_noise(params, noise)?;
    let m = params.substeps;
    let mut amounts = Vec::with_capacity(fractions.len());
    let mut funds = Vec::with_capacity(fractions.len());
    let mut x = params.x0;
    for (i, f) in fractions.fractions.iter().enumerate() {
        let p = f.value() * x;
        funds.push(x);
        amounts.push(p);
        x = hold(params, x, p, &noise.increments[i * m..(i + 1) * m], noise.dt);
    }
    Ok((DecisionPath { amounts }, WealthPath { funds, terminal: x }))
}

/// Mean over paired trials of `X1(T) + X2(T)`.
pub fn terminal_fund_sum(paths1: &[WealthPath], paths2: &[WealthPath]) -> Result<f64> {
    if paths1.is_empty() {
        return Err(Error::invalid("no wealth paths"));
    }
    if paths1.len() != paths2.len() {
        return Err(Error::invalid(format!(
            "{} paths for agent 1 against {} for agent 2",
            paths1.len(),
            paths2.len()
        )));
    }
    if paths1
        .iter()
        .zip(paths2)
        .any(|(a, b)| a.funds.len() != b.funds.len())
    {
        return Err(Error::invalid("paired paths have different horizons"));
    }
    let total: f64 = paths1
        .iter()
        .zip(paths2)
        .map(|(a, b)| a.terminal + b.terminal)
        .sum();
    Ok(total / paths1.len() as f64)
}
