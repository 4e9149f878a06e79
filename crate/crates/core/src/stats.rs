//! Confidence radii, checkpoints, test durations and capacity inference.

use thiserror::Error;

use crate::env::FeedbackMode;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("base floor undefined for x = {0} < 1")]
    Domain(f64),
    #[error("gamma * B = {0} must be below 1")]
    RadiusTooLarge(f64),
    #[error("zero test needs a positive mean, got {0}")]
    ZeroMean(f64),
    #[error("all-zero run at group size 1 on an arm with positive estimate")]
    Inconsistent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceParams {
    pub delta: f64,
    pub m: usize,
    pub k: usize,
    pub h: f64,
    pub base: f64,
}

impl ConfidenceParams {
    pub fn new(delta: f64, m: usize, k: usize, mode: FeedbackMode) -> Self {
        let (h, base) = match mode {
            FeedbackMode::HardSax => (5.0, 9.0),
            FeedbackMode::AggregateSoft => {
                let mf = m as f64;
                (2.0 * mf, variant_base(m))
            }
        };
        Self {
            delta,
            m,
            k,
            h,
            base,
        }
    }

    pub fn g(&self, n: u64) -> f64 {
        let n = n as f64;
        (4.0 * n * n * self.m as f64 * self.k as f64 / self.delta).ln()
    }

    pub fn b(&self, n: u64) -> f64 {
        if n == 0 {
            return f64::INFINITY;
        }
        (2.0 * self.g(n) / n as f64).sqrt()
    }

    /// n / g(n), which equals 2 / B(n)².
    pub fn ratio(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        n as f64 / self.g(n)
    }

    /// Exponent of the base floor of n/g(n); None while the ratio is below 1.
    pub fn level(&self, n: u64) -> Option<i32> {
        floor_exponent(self.ratio(n), self.base)
    }

    pub fn is_checkpoint(&self, n_prev: u64, n_curr: u64) -> bool {
        self.level(n_curr) > self.level(n_prev)
    }

    pub fn trigger(&self, mu_hat: f64, n: u64) -> bool {
        inflated_trigger(mu_hat, self.b(n), self.h)
    }
}

pub fn variant_base(m: usize) -> f64 {
    let mf = m as f64;
    4.0 * (2.0 * mf + 1.0) / (2.0 * mf - 1.0)
}

/// base^α for α = 1..=alpha_max.
pub fn variant_checkpoints(alpha_max: u32, m: usize) -> Vec<f64> {
    let b = variant_base(m);
    (1..=alpha_max as i32).map(|a| b.powi(a)).collect()
}

/// Largest α with base^α ≤ x.
pub fn floor_exponent(x: f64, base: f64) -> Option<i32> {
    if !(x >= 1.0) {
        return None;
    }
    let mut a = (x.ln() / base.ln()).floor() as i32;
    while base.powi(a + 1) <= x {
        a += 1;
    }
    while a > 0 && base.powi(a) > x {
        a -= 1;
    }
    Some(a)
}

pub fn base_floor(x: f64, base: f64) -> Result<f64, StatsError> {
    floor_exponent(x, base)
        .map(|a| base.powi(a))
        .ok_or(StatsError::Domain(x))
}

pub fn base9_floor(x: f64) -> Result<f64, StatsError> {
    base_floor(x, 9.0)
}

pub fn inflated_trigger(mu_hat: f64, b: f64, h: f64) -> bool {
    mu_hat - h * b >= 0.0
}

fn log_inv_fail(delta: f64, k: usize, m: usize) -> f64 {
    // ln(4K²M/δ)
    (4.0 * (k * k * m) as f64 / delta).ln()
}

pub fn omega(gamma: u32, b: f64, delta: f64, k: usize, m: usize) -> Result<u64, StatsError> {
    let gb = gamma as f64 * b;
    if !(gb < 1.0) {
        return Err(StatsError::RadiusTooLarge(gb));
    }
    let v = (-log_inv_fail(delta, k, m) / (1.0 - gb).ln()).ceil();
    Ok(v.max(1.0) as u64)
}

pub fn omega_prime(b: f64, delta: f64, k: usize, m: usize) -> u64 {
    (log_inv_fail(delta, k, m) / (b * b)).ceil().max(1.0) as u64
}

/// Smallest n with (1-μ)^n ≤ δ'.
pub fn zero_test_samples(mu: f64, delta_prime: f64) -> Result<u64, StatsError> {
    if !(mu > 0.0) {
        return Err(StatsError::ZeroMean(mu));
    }
    if mu >= 1.0 {
        return Ok(1);
    }
    let q = 1.0 - mu;
    let mut n = (delta_prime.ln() / q.ln()).ceil().max(1.0) as u64;
    while n > 1 && q.powi((n - 1) as i32) <= delta_prime {
        n -= 1;
    }
    while q.powi(n as i32) > delta_prime {
        n += 1;
    }
    Ok(n)
}

/// min{ψ : all zeros} - 1, or `flags.len()` when no ψ qualifies.
pub fn infer_capacity(all_zero: &[bool]) -> Result<usize, StatsError> {
    match all_zero.iter().position(|&z| z) {
        Some(0) => Err(StatsError::Inconsistent),
        Some(i) => Ok(i),
        None => Ok(all_zero.len()),
    }
}

pub fn capacity_known(n2: u64, mu_hat: f64, b: f64, delta: f64, m: usize, k: usize) -> bool {
    if mu_hat <= b || n2 == 0 {
        return false;
    }
    let lhs = (n2 as f64 * (m * k * k) as f64 / delta).ln() / (mu_hat - b);
    lhs <= n2 as f64
}

/// Largest integer γ with γ·b < gap, if at least 1.
pub fn largest_gamma(gap: f64, b: f64) -> Option<u32> {
    if !(gap > 0.0) || !(b > 0.0) || !b.is_finite() {
        return None;
    }
    let mut g = (gap / b).ceil();
    while g > 0.0 && g * b >= gap {
        g -= 1.0;
    }
    while (g + 1.0) * b < gap {
        g += 1.0;
    }
    if g >= 1.0 {
        Some(g.min(u32::MAX as f64) as u32)
    } else {
        None
    }
}

/// Running sums and counts per (arm, ψ).
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    m: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
    nonzero: Vec<bool>,
}

impl EstimatorState {
    pub fn new(k: usize, m: usize) -> Self {
        Self {
            m,
            sums: vec![0.0; k * m],
            counts: vec![0; k * m],
            nonzero: vec![false; k * m],
        }
    }

    fn idx(&self, arm: usize, psi: usize) -> usize {
        arm * self.m + (psi - 1)
    }

    pub fn push(&mut self, arm: usize, psi: usize, reward: f64) {
        let i = self.idx(arm, psi);
        self.sums[i] += reward;
        self.counts[i] += 1;
        if reward > 0.0 {
            self.nonzero[i] = true;
        }
    }

    pub fn count(&self, arm: usize, psi: usize) -> u64 {
        self.counts[self.idx(arm, psi)]
    }

    pub fn mean(&self, arm: usize, psi: usize) -> f64 {
        let i = self.idx(arm, psi);
        if self.counts[i] == 0 {
            0.0
        } else {
            self.sums[i] / self.counts[i] as f64
        }
    }

    pub fn all_zero(&self, arm: usize, psi: usize) -> bool {
        let i = self.idx(arm, psi);
        self.counts[i] > 0 && !self.nonzero[i]
    }

    /// Capacity flags up to `upto`: hard mode uses all-zero runs, aggregate
    /// mode a per-capita drop of more than μ̂₁/(2M) below the ψ = 1 mean.
    pub fn overload_flags(&self, arm: usize, upto: usize, mode: FeedbackMode, m_total: usize) -> Vec<bool> {
        let base = self.mean(arm, 1);
        (1..=upto)
            .map(|psi| match mode {
                FeedbackMode::HardSax => self.all_zero(arm, psi),
                FeedbackMode::AggregateSoft => {
                    psi > 1
                        && self.count(arm, psi) > 0
                        && self.mean(arm, psi) < base * (1.0 - 1.0 / (2.0 * m_total as f64))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ConfidenceParams {
        ConfidenceParams::new(0.01, 3, 5, FeedbackMode::HardSax)
    }

    #[test]
    fn radius_at_one() {
        let p = p();
        assert!((p.g(1) - 6000f64.ln()).abs() < 1e-12);
        assert!((p.b(1) - 4.1712).abs() < 1e-4);
        assert!(p.b(0).is_infinite());
    }

    #[test]
    fn nine_floor() {
        assert_eq!(base9_floor(10.0).unwrap(), 9.0);
        assert_eq!(base9_floor(81.0).unwrap(), 81.0);
        assert_eq!(base9_floor(80.999).unwrap(), 9.0);
        assert_eq!(base9_floor(1.0).unwrap(), 1.0);
        assert!(base9_floor(0.5).is_err());
    }

    #[test]
    fn trigger_arithmetic() {
        assert!(inflated_trigger(0.9, 0.1, 5.0));
        assert!(!inflated_trigger(0.4, 0.1, 5.0));
    }

    #[test]
    fn omega_values() {
        assert_eq!(omega(12, 0.05, 0.01, 5, 3).unwrap(), 12);
        assert!(0.4f64.powi(12) <= 1.0 / 30000.0);
        assert!(omega(12, 1.0 / 12.0, 0.01, 5, 3).is_err());
        assert_eq!(omega_prime(0.1, 0.01, 5, 3), 1031);
    }

    #[test]
    fn zero_test_values() {
        assert_eq!(zero_test_samples(0.5, 0.01).unwrap(), 7);
        assert_eq!(zero_test_samples(0.2, 0.01).unwrap(), 21);
        assert_eq!(zero_test_samples(1.0, 0.01).unwrap(), 1);
        assert!(zero_test_samples(0.0, 0.01).is_err());
    }

    #[test]
    fn capacity_rules() {
        assert_eq!(infer_capacity(&[false, false, true]).unwrap(), 2);
        assert_eq!(infer_capacity(&[false, false, false]).unwrap(), 3);
        assert_eq!(infer_capacity(&[true, true]), Err(StatsError::Inconsistent));
        assert!(capacity_known(1000, 0.8, 0.05, 0.01, 3, 5));
        let lhs10 = (10.0 * 75.0 / 0.01f64).ln() / 0.75;
        assert_eq!(capacity_known(10, 0.8, 0.05, 0.01, 3, 5), lhs10 <= 10.0);
        assert!(!capacity_known(1000, 0.05, 0.05, 0.01, 3, 5));
    }

    #[test]
    fn gamma_example() {
        assert_eq!(largest_gamma(0.55 - 0.05, 0.05), Some(9));
        assert_eq!(largest_gamma(0.04, 0.05), None);
    }

    #[test]
    fn variant_base_three() {
        assert!((variant_base(3) - 5.6).abs() < 1e-12);
        let p = ConfidenceParams::new(0.01, 3, 5, FeedbackMode::AggregateSoft);
        assert_eq!(p.h, 6.0);
    }
}
