//! Alignment metrics between decision sources.
//!
//! Everything here works on amounts (millions), not percents. Class means
//! are keyed by the `(m, n)` bin indices produced in [`crate::ingest`].

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::market::DecisionPath;
use crate::percent::round_half_up;

pub type ClassKey = (usize, usize);
pub type ClassMeans = BTreeMap<ClassKey, Vec<f64>>;

/// Confidence level of the class bands.
pub const CLASS_BAND_LEVEL: f64 = 0.95;
/// Significance level used for the consistency tests.
pub const TEST_LEVEL: f64 = 0.01;

/// Student-t CDF. Backed by the regularized incomplete beta function, which
/// statrs evaluates with a continued fraction.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("df > 0")
        .cdf(t)
}

/// Student-t quantile by bisection on [`t_cdf`].
pub fn t_quantile(prob: f64, df: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!("quantile probability {prob} outside (0, 1)")));
    }
    if !(df > 0.0) {
        return Err(Error::invalid(format!("degrees of freedom {df} must be > 0")));
    }
    if prob == 0.5 {
        return Ok(0.0);
    }
    let mut lo = -1.0;
    let mut hi = 1.0;
    while t_cdf(lo, df) > prob {
        lo *= 2.0;
    }
    while t_cdf(hi, df) < prob {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub m: usize,
    pub n: usize,
    pub count: usize,
    pub mean: Vec<f64>,
    /// 95% half-width per time; `None` for single-member classes.
    pub half_width: Option<Vec<f64>>,
}

impl ClassStats {
    pub fn key(&self) -> ClassKey {
        (self.m, self.n)
    }

    pub fn band(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let hw = self.half_width.as_ref()?;
        Some((
            self.mean.iter().zip(hw).map(|(m, h)| m - h).collect(),
            self.mean.iter().zip(hw).map(|(m, h)| m + h).collect(),
        ))
    }
}

/// Pointwise mean and t band for each non-empty class. Empty classes are
/// skipped and named in the returned notes.
pub fn class_stats(
    groups: &BTreeMap<ClassKey, Vec<DecisionPath>>,
) -> Result<(Vec<ClassStats>, Vec<String>)> {
    let mut out = Vec::new();
    let mut notes = Vec::new();
    for (&(m, n), paths) in groups {
        let Some(first) = paths.first() else {
            notes.push(format!("class ({m}, {n}) is empty and was skipped"));
            continue;
        };
        let len = first.len();
        if paths.iter().any(|p| p.len() != len) {
            return Err(Error::invalid(format!("class ({m}, {n}) mixes path lengths")));
        }
        let count = paths.len();
        let c = count as f64;
        let mean: Vec<f64> = (0..len)
            .map(|t| paths.iter().map(|p| p.amounts[t]).sum::<f64>() / c)
            .collect();
        let half_width = if count < 2 {
            notes.push(format!("class ({m}, {n}) has one member; band omitted"));
            None
        } else {
            let q = t_quantile(0.5 + CLASS_BAND_LEVEL / 2.0, c - 1.0)?;
            Some(
                (0..len)
                    .map(|t| {
                        let ss: f64 = paths.iter().map(|p| (p.amounts[t] - mean[t]).powi(2)).sum();
                        q * (ss / (c - 1.0)).sqrt() / c.sqrt()
                    })
                    .collect(),
            )
        };
        out.push(ClassStats {
            m,
            n,
            count,
            mean,
            half_width,
        });
    }
    Ok((out, notes))
}

pub fn class_means(stats: &[ClassStats]) -> ClassMeans {
    stats.iter().map(|s| (s.key(), s.mean.clone())).collect()
}

/// Pools two grouped sources into one, class by class. This is how a union
/// of two agents' decisions enters a class average.
pub fn pool_groups(
    a: &BTreeMap<ClassKey, Vec<DecisionPath>>,
    b: &BTreeMap<ClassKey, Vec<DecisionPath>>,
) -> BTreeMap<ClassKey, Vec<DecisionPath>> {
    let mut out = a.clone();
    for (k, v) in b {
        out.entry(*k).or_default().extend(v.iter().cloned());
    }
    out
}

/// Mean of squared differences over every class and time.
pub fn overall_mse(a: &ClassMeans, b: &ClassMeans) -> Result<f64> {
    let missing_left: Vec<ClassKey> = b.keys().filter(|k| !a.contains_key(k)).copied().collect();
    let missing_right: Vec<ClassKey> = a.keys().filter(|k| !b.contains_key(k)).copied().collect();
    if !missing_left.is_empty() || !missing_right.is_empty() {
        return Err(Error::ClassMismatch {
            missing_left,
            missing_right,
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("no classes to compare"));
    }
    let mut sum = 0.0;
    let mut terms = 0usize;
    for (k, pa) in a {
        let pb = &b[k];
        if pa.len() != pb.len() {
            return Err(Error::invalid(format!(
                "class {k:?} paths differ in length ({} vs {})",
                pa.len(),
                pb.len()
            )));
        }
        sum += pa.iter().zip(pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        terms += pa.len();
    }
    if terms == 0 {
        return Err(Error::invalid("class paths are empty"));
    }
    Ok(sum / terms as f64)
}

/// Percent change from `pre` to `post`; negative means a reduction.
pub fn mse_reduction(pre: f64, post: f64) -> Result<f64> {
    if pre == 0.0 {
        return Err(Error::UndefinedBaseline);
    }
    if !(pre > 0.0) || !post.is_finite() {
        return Err(Error::invalid(format!("pre-value {pre} must be positive")));
    }
    Ok(100.0 * (post - pre) / pre)
}

/// A reduction as reported: half-up to two decimals with a percent sign.
pub fn format_reduction(pct: f64) -> String {
    format!("{:.2}%", round_half_up(pct, 2))
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paths differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Summed pointwise difference `user - theory`.
pub fn difference_d(user: &[f64], theory: &[f64]) -> Result<f64> {
    check_lengths(user, theory)?;
    Ok(user.iter().zip(theory).map(|(u, t)| u - t).sum())
}

/// Pearson correlation over decision times.
pub fn correlation_rho(user: &[f64], theory: &[f64]) -> Result<f64> {
    check_lengths(user, theory)?;
    let n = user.len() as f64;
    let mu = user.iter().sum::<f64>() / n;
    let mt = theory.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (u, t) in user.iter().zip(theory) {
        let (du, dt) = (u - mu, t - mt);
        sxy += du * dt;
        sxx += du * du;
        syy += dt * dt;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("user"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("theory"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
}

pub fn one_sample_ttest(values: &[f64], mu0: f64, level: f64) -> Result<TestResult> {
    if values.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "{} value(s); need at least 2",
            values.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level {level} outside (0, 1)")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::DegenerateSample("zero sample variance".into()));
    }
    let t = (mean - mu0) / (var / n).sqrt();
    let df = n - 1.0;
    let p_value = (2.0 * t_cdf(-t.abs(), df)).min(1.0);
    Ok(TestResult {
        t,
        df,
        p_value,
        level,
        reject: p_value < level,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub d_values: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub d_test: Option<TestResult>,
    pub rho_test: Option<TestResult>,
    pub notes: Vec<String>,
}

/// Per-participant `d` and `rho` against the matching theory paths, with
/// t-tests of mean `d` against 0 and mean `rho` against `rho0`.
pub fn consistency(pairs: &[(Vec<f64>, Vec<f64>)], rho0: f64, level: f64) -> Result<Consistency> {
    let mut notes = Vec::new();
    let d_values = pairs
        .iter()
        .map(|(u, t)| difference_d(u, t))
        .collect::<Result<Vec<_>>>()?;
    let mut rho_values = Vec::new();
    for (i, (u, t)) in pairs.iter().enumerate() {
        match correlation_rho(u, t) {
            Ok(r) => rho_values.push(r),
            Err(e @ Error::UndefinedCorrelation(_)) => notes.push(format!("participant {i}: {e}")),
            Err(e) => return Err(e),
        }
    }
    let test = |v: &[f64], mu0: f64, notes: &mut Vec<String>, what: &str| match one_sample_ttest(v, mu0, level) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("{what} test skipped: {e}"));
            None
        }
    };
    let d_test = test(&d_values, 0.0, &mut notes, "d");
    let rho_test = test(&rho_values, rho0, &mut notes, "rho");
    Ok(Consistency {
        d_values,
        rho_values,
        d_test,
        rho_test,
        notes,
    })
}

/// Plain columns for plotting: `m n t mean lower upper`. Missing bands are
/// written as `nan`.
pub fn write_plot_tsv(path: &Path, stats: &[ClassStats], times: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "m\tn\tt\tmean\tlower\tupper").map_err(io)?;
    for s in stats {
        let band = s.band();
        for (i, mean) in s.mean.iter().enumerate() {
            let t = times.get(i).copied().unwrap_or(i as f64);
            let (lo, hi) = band
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |(l, u)| (l[i], u[i]));
            writeln!(w, "{}\t{}\t{t}\t{mean}\t{lo}\t{hi}", s.m, s.n).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
