//! Densities of the theoretical first-agent decision, their noise-widened
//! counterpart, overlap integrals, and the two herd hypotheses.
//!
//! Over a rectangle of attributes the optimal amount at a fixed time is close
//! to `c / x^2` on `[pmin, pmax]` with `c = pmin pmax / (pmax - pmin)`. Adding
//! uniform noise on `(-eps, eps)` gives the convolved density
//!
//! ```text
//! (c / 2eps) (1 / max(pmin, x - eps) - 1 / min(pmax, x + eps))
//! ```
//!
//! on `[pmin - eps, pmax + eps]`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{simulate_wealth, terminal_fund_sum, DecisionPath, MarketParams, WealthPath};
use crate::quad::integrate_piecewise;
use crate::rng;
use crate::solver::{herd_distance, merton_path, optimal_p1, optimal_path, solve_eta, HerdKind, SolverConfig};

pub const OVERLAP_TOL: f64 = 1e-8;
/// Lattice size of the monotonicity check on model densities.
pub const MONOTONE_LATTICE: usize = 256;
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub pmin: f64,
    pub pmax: f64,
}

impl SupportInterval {
    pub fn new(pmin: f64, pmax: f64) -> Result<Self> {
        if !(pmin > 0.0 && pmax > pmin && pmax.is_finite()) {
            return Err(Error::invalid(format!("support needs 0 < pmin < pmax, got [{pmin}, {pmax}]")));
        }
        Ok(SupportInterval { pmin, pmax })
    }

    pub fn width(&self) -> f64 {
        self.pmax - self.pmin
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.pmin..=self.pmax).contains(&x)
    }
}

/// Range of the optimal amount at time `t` over an attribute rectangle, read
/// off its four corners. The amount is monotone in each attribute.
pub fn support_from_grid(
    params: &MarketParams,
    alpha_range: (f64, f64),
    theta_range: (f64, f64),
    alpha2: f64,
    t: f64,
    solver: &SolverConfig,
) -> Result<SupportInterval> {
    let (a_lo, a_hi) = alpha_range;
    let (th_lo, th_hi) = theta_range;
    if !(a_lo > 0.0 && a_lo <= a_hi) || !(th_lo >= 0.0 && th_lo <= th_hi) {
        return Err(Error::invalid("attribute ranges must be ordered with alpha > 0, theta >= 0"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in [a_lo, a_hi] {
        for th in [th_lo, th_hi] {
            let eta = solve_eta(params, a, alpha2, th, solver)?.eta;
            let p = optimal_p1(params, a, alpha2, th, eta, t);
            lo = lo.min(p);
            hi = hi.max(p);
        }
    }
    if lo >= hi {
        return Err(Error::invalid(format!("degenerate support [{lo}, {hi}]")));
    }
    SupportInterval::new(lo, hi)
}

/// Supports at every decision time for the default dataset rectangle
/// (alpha in [0.05, 0.5], theta in [1e-8, 1e-7]).
pub fn default_grid_supports(
    params: &MarketParams,
    alpha2: f64,
    solver: &SolverConfig,
) -> Result<Vec<SupportInterval>> {
    params
        .decision_times
        .iter()
        .map(|&t| support_from_grid(params, (0.05, 0.5), (1e-8, 1e-7), alpha2, t, solver))
        .collect()
}

pub fn pareto_c(s: &SupportInterval) -> f64 {
    s.pmin * s.pmax / (s.pmax - s.pmin)
}

/// `c / x^2` on the support, zero outside.
pub fn pareto_pdf(x: f64, s: &SupportInterval) -> f64 {
    if s.contains(x) {
        pareto_c(s) / (x * x)
    } else {
        0.0
    }
}

pub fn pareto_cdf(x: f64, s: &SupportInterval) -> f64 {
    if x <= s.pmin {
        0.0
    } else if x >= s.pmax {
        1.0
    } else {
        pareto_c(s) * (1.0 / s.pmin - 1.0 / x)
    }
}

fn check_eps(s: &SupportInterval, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < s.width() / 2.0) {
        return Err(Error::invalid(format!(
            "eps {eps} must lie in (0, {})",
            s.width() / 2.0
        )));
    }
    Ok(())
}

/// Density of a `pareto_pdf` draw plus Uniform(-eps, eps) noise.
pub fn noisy_pdf(x: f64, s: &SupportInterval, eps: f64) -> Result<f64> {
    check_eps(s, eps)?;
    Ok(noisy_pdf_unchecked(x, s, eps))
}

fn noisy_pdf_unchecked(x: f64, s: &SupportInterval, eps: f64) -> f64 {
    if x <= s.pmin - eps || x >= s.pmax + eps {
        return 0.0;
    }
    let lo = s.pmin.max(x - eps);
    let hi = s.pmax.min(x + eps);
    // hi - lo without cancellation: 1/lo - 1/hi = (hi - lo) / (lo hi)
    let left = if x - eps > s.pmin { eps } else { x - s.pmin };
    let right = if x + eps < s.pmax { eps } else { s.pmax - x };
    (pareto_c(s) / (2.0 * eps) * (left + right) / (lo * hi)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    ParetoLike,
    Convolved,
    Tabulated,
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    ParetoLike { support: SupportInterval },
    Convolved { support: SupportInterval, eps: f64 },
    /// Piecewise-linear through the points, zero outside.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
    TruncatedPareto { lo: f64, hi: f64, exponent: f64 },
    TruncatedExponential { lo: f64, hi: f64, rate: f64 },
    /// Proportional to `1 + slope (x - lo) / (hi - lo)`.
    Linear { lo: f64, hi: f64, slope: f64 },
}

impl Density {
    pub fn convolved(support: SupportInterval, eps: f64) -> Result<Self> {
        check_eps(&support, eps)?;
        Ok(Density::Convolved { support, eps })
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::invalid("tabulated density needs matching xs/ys of length >= 2"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.iter().any(|&y| !(y >= 0.0)) {
            return Err(Error::invalid("tabulated xs must increase and ys be non-negative"));
        }
        Ok(Density::Tabulated { xs, ys })
    }

    pub fn kind(&self) -> DensityKind {
        match self {
            Density::ParetoLike { .. } => DensityKind::ParetoLike,
            Density::Convolved { .. } => DensityKind::Convolved,
            Density::Tabulated { .. } => DensityKind::Tabulated,
            _ => DensityKind::Model,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Density::ParetoLike { support } => (support.pmin, support.pmax),
            Density::Convolved { support, eps } => (support.pmin - eps, support.pmax + eps),
            Density::Tabulated { xs, .. } => (xs[0], xs[xs.len() - 1]),
            Density::TruncatedPareto { lo, hi, .. }
            | Density::TruncatedExponential { lo, hi, .. }
            | Density::Linear { lo, hi, .. } => (*lo, *hi),
        }
    }

    /// Points where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Density::Convolved { support, eps } => vec![
                support.pmin - eps,
                support.pmin + eps,
                support.pmax - eps,
                support.pmax + eps,
            ],
            Density::Tabulated { xs, .. } => xs.clone(),
            _ => {
                let (a, b) = self.support();
                vec![a, b]
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (a, b) = self.support();
        if !(a..=b).contains(&x) {
            return 0.0;
        }
        match self {
            Density::ParetoLike { support } => pareto_pdf(x, support),
            Density::Convolved { support, eps } => noisy_pdf_unchecked(x, support, *eps),
            Density::Tabulated { xs, ys } => {
                let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[i - 1], xs[i]);
                ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
            }
            Density::TruncatedPareto { lo, hi, exponent } => {
                let z = if (exponent - 1.0).abs() < 1e-12 {
                    (hi / lo).ln()
                } else {
                    (lo.powf(1.0 - exponent) - hi.powf(1.0 - exponent)) / (exponent - 1.0)
                };
                x.powf(-exponent) / z
            }
            Density::TruncatedExponential { lo, hi, rate } => {
                let z = -(-rate * (hi - lo)).exp_m1() / rate;
                (-rate * (x - lo)).exp() / z
            }
            Density::Linear { lo, hi, slope } => {
                let w = hi - lo;
                (1.0 + slope * (x - lo) / w) / (w * (1.0 + slope / 2.0))
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        let (a, b) = self.support();
        integrate_piecewise(&|x| self.pdf(x), a, b, &self.breakpoints(), OVERLAP_TOL * 1e-2)
    }
}

/// `∫ f g` over the intersection of the supports; zero when they are disjoint.
pub fn overlap_integral(f: &Density, g: &Density) -> f64 {
    let (fa, fb) = f.support();
    let (ga, gb) = g.support();
    let (a, b) = (fa.max(ga), fb.min(gb));
    if a >= b {
        return 0.0;
    }
    let mut cuts = f.breakpoints();
    cuts.extend(g.breakpoints());
    integrate_piecewise(&|x| f.pdf(x) * g.pdf(x), a, b, &cuts, OVERLAP_TOL)
}

/// `Σ_t (1 - overlap_t)` over paired data and model densities.
pub fn gradient_norm_factor(data: &[Density], model: &[Density]) -> Result<f64> {
    if data.len() != model.len() {
        return Err(Error::invalid(format!(
            "{} data densities against {} model densities",
            data.len(),
            model.len()
        )));
    }
    Ok(data
        .iter()
        .zip(model)
        .map(|(d, m)| 1.0 - overlap_integral(d, m))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    TruncatedPareto { exponent: f64 },
    TruncatedExponential { rate: f64 },
    Linear { slope: f64 },
}

impl ModelFamily {
    pub fn on(&self, lo: f64, hi: f64) -> Result<Density> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("empty model support [{lo}, {hi}]")));
        }
        match *self {
            ModelFamily::TruncatedPareto { exponent } => {
                if !(lo > 0.0) {
                    return Err(Error::invalid("truncated Pareto needs a positive support"));
                }
                Ok(Density::TruncatedPareto { lo, hi, exponent })
            }
            ModelFamily::TruncatedExponential { rate } => {
                if !(rate > 0.0) {
                    return Err(Error::invalid("exponential rate must be > 0"));
                }
                Ok(Density::TruncatedExponential { lo, hi, rate })
            }
            ModelFamily::Linear { slope } => {
                if !(slope > -1.0) {
                    return Err(Error::invalid("linear slope must exceed -1"));
                }
                Ok(Density::Linear { lo, hi, slope })
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelFamily::TruncatedPareto { exponent } => format!("truncated_pareto(a={exponent})"),
            ModelFamily::TruncatedExponential { rate } => format!("truncated_exponential(rate={rate})"),
            ModelFamily::Linear { slope } => format!("linear(slope={slope})"),
        }
    }
}

/// Rejects a model density that rises anywhere on a lattice over `[lo, hi]`.
pub fn check_decreasing(model: &Density, lo: f64, hi: f64) -> Result<()> {
    let n = MONOTONE_LATTICE;
    let mut prev = model.pdf(lo);
    for i in 1..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let y = model.pdf(x);
        if y - prev > MONOTONE_SLACK {
            return Err(Error::ContractViolation(format!(
                "model density increases near x = {x} ({prev} -> {y})"
            )));
        }
        prev = y;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeOverlap {
    pub support: SupportInterval,
    pub eps: f64,
    pub c: f64,
    pub overlap_theory: f64,
    pub overlap_user: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientComparison {
    pub family: String,
    pub eps_fraction: f64,
    pub per_time: Vec<TimeOverlap>,
    pub factor_theory: f64,
    pub factor_user: f64,
    pub ratio: f64,
    /// `factor_theory > factor_user`, i.e. the theory overlap is smaller.
    pub inequality_holds: bool,
    /// Every user overlap is below one.
    pub user_overlap_below_one: bool,
}

/// Compares the clean and noise-widened data densities against one model
/// family placed on the widened support at each time. Noise half-width at
/// each time is `eps_fraction * (pmax - pmin)`.
pub fn compare_gradient_norms(
    supports: &[SupportInterval],
    eps_fraction: f64,
    family: ModelFamily,
) -> Result<GradientComparison> {
    if supports.is_empty() {
        return Err(Error::invalid("no supports given"));
    }
    if !(eps_fraction > 0.0 && eps_fraction < 0.5) {
        return Err(Error::invalid(format!("eps fraction {eps_fraction} must lie in (0, 0.5)")));
    }
    let mut data_theory = Vec::new();
    let mut data_user = Vec::new();
    let mut models = Vec::new();
    let mut per_time = Vec::new();
    for s in supports {
        let eps = eps_fraction * s.width();
        let (lo, hi) = (s.pmin - eps, s.pmax + eps);
        let model = family.on(lo, hi)?;
        check_decreasing(&model, lo, hi)?;
        let theory = Density::ParetoLike { support: *s };
        let user = Density::convolved(*s, eps)?;
        per_time.push(TimeOverlap {
            support: *s,
            eps,
            c: pareto_c(s),
            overlap_theory: overlap_integral(&theory, &model),
            overlap_user: overlap_integral(&user, &model),
        });
        data_theory.push(theory);
        data_user.push(user);
        models.push(model);
    }
    let factor_theory = gradient_norm_factor(&data_theory, &models)?;
    let factor_user = gradient_norm_factor(&data_user, &models)?;
    Ok(GradientComparison {
        family: family.label(),
        eps_fraction,
        user_overlap_below_one: per_time.iter().all(|p| p.overlap_user < 1.0),
        per_time,
        factor_theory,
        factor_user,
        ratio: factor_theory / factor_user,
        inequality_holds: factor_theory > factor_user,
    })
}

/// Largest gap between a sorted sample's empirical CDF and `cdf`.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalFit {
    pub samples: Vec<f64>,
    pub support: SupportInterval,
    pub c: f64,
    pub ks: f64,
    pub failures: usize,
}

/// Draws attributes uniformly from the rectangle, evaluates the optimal amount
/// at `t`, and measures the KS distance to the `c / x^2` fit on the sample's
/// own range.
#[allow(clippy::too_many_arguments)]
pub fn empirical_p1_samples(
    params: &MarketParams,
    n: usize,
    alpha_range: (f64, f64),
    theta_range: (f64, f64),
    alpha2: f64,
    t: f64,
    seed: u64,
    solver: &SolverConfig,
) -> Result<EmpiricalFit> {
    if n < 1000 {
        return Err(Error::invalid(format!("need at least 1000 samples, got {n}")));
    }
    let mut stream = rng::stream(seed);
    let mut samples = Vec::with_capacity(n);
    let mut failures = 0;
    for _ in 0..n {
        let a = rng::uniform(&mut stream, alpha_range.0, alpha_range.1);
        let th = rng::uniform(&mut stream, theta_range.0, theta_range.1);
        match solve_eta(params, a, alpha2, th, solver) {
            Ok(sol) => samples.push(optimal_p1(params, a, alpha2, th, sol.eta, t)),
            Err(e) if e.is_numeric() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    samples.sort_by(f64::total_cmp);
    let support = SupportInterval::new(samples[0], samples[samples.len() - 1])?;
    let ks = ks_distance(&samples, |x| pareto_cdf(x, &support));
    Ok(EmpiricalFit {
        samples,
        c: pareto_c(&support),
        support,
        ks,
        failures,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    NotDecreasing,
    Undefined,
}

pub fn strict_trend(values: &[f64]) -> Trend {
    if values.len() < 2 {
        Trend::Undefined
    } else if values.windows(2).all(|w| w[1] < w[0]) {
        Trend::Decreasing
    } else {
        Trend::NotDecreasing
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H1Curve {
    pub alpha1: f64,
    pub alpha2: f64,
    pub thetas: Vec<f64>,
    pub distances: Vec<f64>,
    pub trend: Trend,
}

/// Herd distance from the optimal path to the advisor's path for each theta.
pub fn h1_curve(
    params: &MarketParams,
    alpha1: f64,
    alpha2: f64,
    thetas: &[f64],
    kind: HerdKind,
    solver: &SolverConfig,
) -> Result<H1Curve> {
    let advisor = merton_path(params, alpha2);
    let distances = thetas
        .iter()
        .map(|&th| {
            let p = optimal_path(params, alpha1, alpha2, th, solver)?;
            Ok(herd_distance(&p, &advisor, kind)?.value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(H1Curve {
        alpha1,
        alpha2,
        thetas: thetas.to_vec(),
        trend: strict_trend(&distances),
        distances,
    })
}

/// Decision paths of both agents for one trial.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairedTrial {
    pub agent1: Option<DecisionPath>,
    pub agent2: Option<DecisionPath>,
}

/// Decisions keyed by theta label, then trial index.
pub type H2Input = BTreeMap<String, BTreeMap<u64, PairedTrial>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H2Point {
    pub theta: f64,
    pub label: String,
    pub trials: usize,
    pub mean_terminal_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H2Result {
    pub points: Vec<H2Point>,
    pub trend: Trend,
}

/// Reads `theta,trial,agent,amount_1..amount_T` rows.
pub fn read_h2_file(path: &Path, t: usize) -> Result<H2Input> {
    let row_err = |line: u64, message: String| Error::Row {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| row_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut expected = vec!["theta".to_string(), "trial".into(), "agent".into()];
    expected.extend((1..=t).map(|i| format!("amount_{i}")));
    if header != expected {
        return Err(row_err(1, format!("header must be {}", expected.join(","))));
    }
    let mut out = H2Input::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| row_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != t + 3 {
            return Err(row_err(line, format!("expected {} fields, found {}", t + 3, rec.len())));
        }
        let label = rec[0].to_string();
        if !label.parse::<f64>().is_ok_and(|v| v >= 0.0) {
            return Err(row_err(line, format!("theta: not a non-negative number: {label:?}")));
        }
        let trial: u64 = rec[1]
            .parse()
            .map_err(|_| row_err(line, format!("trial: not an integer: {:?}", &rec[1])))?;
        let amounts = (0..t)
            .map(|i| {
                rec[3 + i]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| row_err(line, format!("amount_{}: not a number", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let slot = out.entry(label).or_default().entry(trial).or_default();
        let target = match &rec[2] {
            "1" => &mut slot.agent1,
            "2" => &mut slot.agent2,
            other => return Err(row_err(line, format!("agent must be 1 or 2, got {other:?}"))),
        };
        if target.is_some() {
            return Err(row_err(line, "duplicate (theta, trial, agent) row".into()));
        }
        *target = Some(DecisionPath::new(amounts));
    }
    Ok(out)
}

/// Mean `X1(T) + X2(T)` per theta. Trial `i` uses the same noise for both
/// agents and for every theta.
pub fn h2_evaluate(input: &H2Input, params: &MarketParams, seed: u64) -> Result<H2Result> {
    let mut points = Vec::new();
    for (label, trials) in input {
        let theta: f64 = label
            .parse()
            .map_err(|_| Error::invalid(format!("theta label {label:?} is not numeric")))?;
        let mut w1: Vec<WealthPath> = Vec::new();
        let mut w2: Vec<WealthPath> = Vec::new();
        for (&trial, pair) in trials {
            let (Some(a), Some(b)) = (&pair.agent1, &pair.agent2) else {
                return Err(Error::invalid(format!(
                    "theta {label}, trial {trial}: both agents are required"
                )));
            };
            let noise = params.noise(rng::derive_seed(seed, &[trial]))?;
            w1.push(simulate_wealth(params, a, &noise)?);
            w2.push(simulate_wealth(params, b, &noise)?);
        }
        points.push(H2Point {
            theta,
            label: label.clone(),
            trials: trials.len(),
            mean_terminal_sum: terminal_fund_sum(&w1, &w2)?,
        });
    }
    points.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    if points.windows(2).any(|w| w[0].theta == w[1].theta) {
        return Err(Error::invalid("two theta labels denote the same value"));
    }
    let sums: Vec<f64> = points.iter().map(|p| p.mean_terminal_sum).collect();
    Ok(H2Result {
        trend: strict_trend(&sums),
        points,
    })
}
