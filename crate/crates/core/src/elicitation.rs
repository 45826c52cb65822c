//! Questionnaire answers <-> model attributes.
//!
//! Risk aversion comes from an indifference question: a gamble paying `w1`
//! with probability `p` (else nothing) against a sure `w2`. Under CARA
//! utility the indifference point is
//!
//! ```text
//! p = (exp(-a w2) - 1) / (exp(-a w1) - 1)
//! ```
//!
//! Influence comes from a 0..=10 reliance score `k`, with `theta = k * 1e-8`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RISKY_PAYOFF: f64 = 20.0;
pub const DEFAULT_SURE_PAYOFF: f64 = 6.0;
/// Width of one reliance point in theta units.
pub const THETA_PER_POINT: f64 = 1e-8;
pub const MAX_RELIANCE: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndifferenceQuestion {
    pub w1: f64,
    pub w2: f64,
    pub p: f64,
}

impl IndifferenceQuestion {
    pub fn new(w1: f64, w2: f64, p: f64) -> Result<Self> {
        check_payoffs(w1, w2)?;
        Ok(IndifferenceQuestion { w1, w2, p })
    }

    pub fn alpha(&self) -> Result<f64> {
        alpha_from_p(self.p, self.w1, self.w2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelianceScore(u32);

impl RelianceScore {
    pub fn new(k: u32) -> Result<Self> {
        if k > MAX_RELIANCE {
            return Err(Error::invalid(format!("reliance score {k} outside 0..=10")));
        }
        Ok(RelianceScore(k))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

fn check_payoffs(w1: f64, w2: f64) -> Result<()> {
    if !(w2 > 0.0 && w2 < w1 && w1.is_finite()) {
        return Err(Error::invalid(format!(
            "payoffs must satisfy 0 < w2 < w1 (w1 = {w1}, w2 = {w2})"
        )));
    }
    Ok(())
}

pub fn p_from_alpha(alpha: f64, w1: f64, w2: f64) -> f64 {
    // expm1 keeps the ratio accurate as alpha -> 0
    (-alpha * w2).exp_m1() / (-alpha * w1).exp_m1()
}

/// Inverts [`p_from_alpha`] by bisection on `ln(alpha)`.
///
/// The initial bracket `[1e-6, 1e2]` is widened by factors of ten until it
/// straddles the root.
pub fn alpha_from_p(p: f64, w1: f64, w2: f64) -> Result<f64> {
    check_payoffs(w1, w2)?;
    let lower = w2 / w1;
    if !(p > lower && p < 1.0) {
        return Err(Error::OutOfModel { p, lower });
    }
    let f = |a: f64| p_from_alpha(a, w1, w2) - p;
    let mut lo = 1e-6;
    let mut hi = 1e2;
    while f(lo) > 0.0 {
        lo /= 10.0;
        if lo < 1e-300 {
            return Err(Error::OutOfModel { p, lower });
        }
    }
    while f(hi) < 0.0 {
        hi *= 10.0;
        if !p_from_alpha(hi, w1, w2).is_finite() || hi > 1e300 {
            return Err(Error::OutOfModel { p, lower });
        }
    }
    // Bisect in log space: the bracket can span many decades.
    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    for _ in 0..400 {
        let mid = 0.5 * (llo + lhi);
        if f(mid.exp()) < 0.0 {
            llo = mid;
        } else {
            lhi = mid;
        }
        // relative width of the alpha bracket
        if lhi - llo < 1e-12 {
            break;
        }
    }
    Ok((0.5 * (llo + lhi)).exp())
}

pub fn theta_from_reliance(k: RelianceScore) -> f64 {
    // 1e8 is exact in binary, so k / 1e8 is the double nearest k * 10^-8.
    f64::from(k.0) / 1e8
}

/// Nearest reliance score for a theta value, as quoted in the templates.
pub fn reliance_from_theta(theta: f64) -> Result<RelianceScore> {
    let k = (theta / THETA_PER_POINT).round();
    if !(0.0..=f64::from(MAX_RELIANCE)).contains(&k) {
        return Err(Error::invalid(format!(
            "theta {theta:e} maps outside the 0..=10 reliance scale"
        )));
    }
    RelianceScore::new(k as u32)
}
