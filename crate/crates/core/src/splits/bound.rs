//! Test-set error bound and its inversion for sample sizing.
//!
//! With probability at least 1 − δ, the true error rate p satisfies
//!
//! ```text
//! p ≤ p̂ + sqrt(2·p̂·ln(1/δ)/n) + 2·ln(1/δ)/n
//! ```
//!
//! where p̂ is the error rate observed on n i.i.d. test samples drawn from the
//! target distribution.

use super::SplitsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    p_hat: f64,
    n: u64,
    delta: f64,
}

impl BoundInputs {
    pub fn new(p_hat: f64, n: u64, delta: f64) -> Result<Self, SplitsError> {
        check_p_hat(p_hat)?;
        check_delta(delta)?;
        if n == 0 {
            return Err(SplitsError::InvalidParameter("n must be positive".into()));
        }
        Ok(BoundInputs { p_hat, n, delta })
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

fn check_p_hat(p_hat: f64) -> Result<(), SplitsError> {
    if (0.0..=1.0).contains(&p_hat) {
        Ok(())
    } else {
        Err(SplitsError::InvalidParameter(format!("p_hat must lie in [0, 1], got {p_hat}")))
    }
}

fn check_delta(delta: f64) -> Result<(), SplitsError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(SplitsError::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn bound_unchecked(p_hat: f64, n: u64, delta: f64) -> f64 {
    let log_term = (1.0 / delta).ln();
    let n = n as f64;
    p_hat + (2.0 * p_hat * log_term / n).sqrt() + 2.0 * log_term / n
}

/// Upper confidence bound on the true error rate. Valid under the assumption
/// that test samples are i.i.d. draws from the target distribution.
pub fn test_bound(inputs: &BoundInputs) -> f64 {
    bound_unchecked(inputs.p_hat, inputs.n, inputs.delta)
}

/// Smallest n whose bound does not exceed `target_upper`.
///
/// The bound decreases strictly in n, so a doubling phase brackets the answer
/// and a binary search pins it.
pub fn required_test_size(p_hat: f64, target_upper: f64, delta: f64) -> Result<u64, SplitsError> {
    check_p_hat(p_hat)?;
    check_delta(delta)?;
    if !(target_upper > p_hat) || !target_upper.is_finite() {
        return Err(SplitsError::InvalidParameter(format!(
            "target {target_upper} is unreachable for observed rate {p_hat}"
        )));
    }
    let fits = |n: u64| bound_unchecked(p_hat, n, delta) <= target_upper;

    if fits(1) {
        return Ok(1);
    }
    // invariant: !fits(lo) && fits(hi)
    let mut lo = 1u64;
    let mut hi = 2u64;
    while !fits(hi) {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .ok_or_else(|| SplitsError::InvalidParameter("required size overflows u64".into()))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
