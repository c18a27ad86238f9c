//! Closed-form mistraining model and Binomial search-space estimation.

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("component index {i} outside 1..={t}")]
    Component { i: u32, t: u32 },
    #[error("table count {0} outside 1..=62")]
    Tables(u32),
    #[error("probability {0} outside (0, 1)")]
    Probability(f64),
    #[error("need at least one trial")]
    NoTrials,
    #[error("successes {k} exceed trials {n}")]
    TooManySuccesses { n: u64, k: u64 },
}

fn check(i: u32, t: u32) -> Result<(), StatsError> {
    if t == 0 || t > 62 {
        return Err(StatsError::Tables(t));
    }
    if i == 0 || i > t {
        return Err(StatsError::Component { i, t });
    }
    Ok(())
}

/// Probability that an allocation with every table eligible picks table `i`:
/// `2^(T-i) / (2^T - 1)`.
pub fn alloc_prob(i: u32, t: u32) -> Result<Ratio<u64>, StatsError> {
    check(i, t)?;
    Ok(Ratio::new(1u64 << (t - i), (1u64 << t) - 1))
}

/// Probability that an allocation lands strictly above table `i`:
/// `(2^(T-i) - 1) / (2^T - 1)`.
pub fn p_prime(i: u32, t: u32) -> Result<Ratio<u64>, StatsError> {
    check(i, t)?;
    Ok(Ratio::new((1u64 << (t - i)) - 1, (1u64 << t) - 1))
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Brute-force success probability against a victim served by table `i`.
pub fn p_succ(p: f64, i: u32, t: u32) -> Result<f64, StatsError> {
    check(i, t)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Probability(p));
    }
    if i == t {
        return Ok(p);
    }
    Ok(p * p + (1.0 - p) * ratio_f64(p_prime(i, t)?) * p)
}

/// Expected LPC over brute-force success ratio at victim depth `i`.
pub fn lpc_gain(p: f64, i: u32, t: u32) -> Result<f64, StatsError> {
    Ok(p / p_succ(p, i, t)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    /// Search space is about `2^exponent`.
    pub exponent: i32,
    /// Natural log of the Chernoff bound at `exponent`.
    pub chernoff_log_bound: f64,
    /// `(exponent + d, log bound)` for d in -2..=2.
    pub diagnostics: Vec<(i32, f64)>,
    /// Set when no success was observed; `exponent` is then a lower bound.
    pub lower_bound_only: bool,
}

/// Natural log of the multiplicative Chernoff bound for observing `k`
/// successes from `Bin(n, 2^-exponent)`, on the tail that contains `k`.
pub fn chernoff_log_bound(n: u64, k: u64, exponent: i32) -> f64 {
    let mu = n as f64 * (-(exponent as f64)).exp2();
    if k == 0 {
        return -mu;
    }
    let k = k as f64;
    k - mu - k * (k / mu).ln()
}

pub fn estimate_search_space(n: u64, k: u64) -> Result<EstimateResult, StatsError> {
    if n == 0 {
        return Err(StatsError::NoTrials);
    }
    if k > n {
        return Err(StatsError::TooManySuccesses { n, k });
    }
    let (exponent, lower_bound_only) = if k == 0 {
        ((n as f64).log2().ceil() as i32, true)
    } else {
        ((n as f64 / k as f64).log2().round() as i32, false)
    };
    let diagnostics = (-2..=2).map(|d| (exponent + d, chernoff_log_bound(n, k, exponent + d))).collect();
    Ok(EstimateResult {
        exponent,
        chernoff_log_bound: chernoff_log_bound(n, k, exponent),
        diagnostics,
        lower_bound_only,
    })
}
