//! Discrete diffusion noise schedules and first-order sampler coefficients.
//!
//! [`BetaSchedule`] holds the linear beta grid and running products
//! `alpha_bar`. [`CoefficientTable`] derives the per-step update triple
//! `(a_t, b_t, c_t)` for the eta-family of first-order samplers (eta = 0
//! deterministic, eta = 1 fully stochastic), the cumulative-product accessor
//! used by the higher-order update functions, and the per-step residual
//! thresholds.

use crate::error::{Error, Result};

/// Discrete beta schedule, 1-based in `t = 1..=T` with `alpha_bar(0) == 1`.
#[derive(Debug, Clone)]
pub struct BetaSchedule {
    steps: usize,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl BetaSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Cumulative product of `(1 - beta_j)` for `j <= t`; `t = 0` yields 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }
}

/// Linearly spaced betas from `beta_start` to `beta_end` inclusive.
pub fn build_beta_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<BetaSchedule> {
    if steps == 0 {
        return Err(Error::Schedule("steps must be >= 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Schedule(format!(
            "need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
        )));
    }
    let betas: Vec<f64> = if steps == 1 {
        vec![beta_start]
    } else {
        let n = (steps - 1) as f64;
        (0..steps)
            .map(|i| (beta_start * (n - i as f64) + beta_end * i as f64) / n)
            .collect()
    };
    let mut alpha_bars = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for &beta in &betas {
        prod *= 1.0 - beta;
        alpha_bars.push(prod);
    }
    Ok(BetaSchedule {
        steps,
        betas,
        alpha_bars,
    })
}

/// Per-step sampler coefficients plus thresholds for one `(eta, tau, d)`
/// combination.
///
/// Arrays `a` and `b` are indexed by `t = 1..=T` (offset by one internally);
/// `c` and `noise_scale` are indexed by `t = 0..T`, pairing with the noise
/// term of the equation that produces `x_t`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    steps: usize,
    dim: usize,
    eta: f64,
    tau: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    noise_scale: Vec<f64>,
    thresholds: Vec<f64>,
    /// Prefix products of `a`: `a_prefix[s] = a_1 * ... * a_s`, `a_prefix[0] = 1`.
    a_prefix: Vec<f64>,
    /// Steps where `1 - alpha_bar_{t-1} - sigma_t^2` went numerically negative
    /// and was clamped to zero.
    clamped_steps: Vec<usize>,
    schedule: BetaSchedule,
}

/// Builds the coefficient table for the eta-generalized first-order update.
///
/// With `s_t = eta * sqrt((1 - abar_{t-1}) / (1 - abar_t)) * sqrt(1 - abar_t / abar_{t-1})`:
/// `a_t = sqrt(abar_{t-1} / abar_t)`,
/// `b_t = sqrt(1 - abar_{t-1} - s_t^2) - sqrt(abar_{t-1} (1 - abar_t) / abar_t)`,
/// `c_{t-1} = s_t`, and `noise_scale_{t-1}` is `s_t` evaluated at eta = 1.
pub fn build_coefficients(
    sched: &BetaSchedule,
    eta: f64,
    tau: f64,
    dim: usize,
) -> Result<CoefficientTable> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Schedule(format!("eta must be in [0, 1], got {eta}")));
    }
    if tau < 0.0 {
        return Err(Error::Schedule(format!("tau must be >= 0, got {tau}")));
    }
    if dim == 0 {
        return Err(Error::Schedule("dimension must be >= 1".into()));
    }

    let steps = sched.steps();
    let mut a = Vec::with_capacity(steps);
    let mut b = Vec::with_capacity(steps);
    let mut c = Vec::with_capacity(steps);
    let mut noise_scale = Vec::with_capacity(steps);
    let mut thresholds = Vec::with_capacity(steps);
    let mut clamped_steps = Vec::new();

    for t in 1..=steps {
        let abar_prev = sched.alpha_bar(t - 1);
        let abar = sched.alpha_bar(t);
        let shrink = (1.0 - abar / abar_prev).max(0.0);
        let sigma_unit = ((1.0 - abar_prev) / (1.0 - abar)).sqrt() * shrink.sqrt();
        let sigma = eta * sigma_unit;

        let a_t = (abar_prev / abar).sqrt();
        let mut radicand = 1.0 - abar_prev - sigma * sigma;
        if radicand < 0.0 {
            clamped_steps.push(t);
            radicand = 0.0;
        }
        let b_t = radicand.sqrt() - (abar_prev * (1.0 - abar) / abar).sqrt();

        a.push(a_t);
        b.push(b_t);
        c.push(sigma);
        noise_scale.push(sigma_unit);
        thresholds.push(tau * tau * sigma_unit * sigma_unit * dim as f64);
    }

    let mut a_prefix = Vec::with_capacity(steps + 1);
    a_prefix.push(1.0);
    let mut prod = 1.0;
    for &a_t in &a {
        prod *= a_t;
        a_prefix.push(prod);
    }

    Ok(CoefficientTable {
        steps,
        dim,
        eta,
        tau,
        a,
        b,
        c,
        noise_scale,
        thresholds,
        a_prefix,
        clamped_steps,
        schedule: sched.clone(),
    })
}

impl CoefficientTable {
    /// Assembles a table from explicit per-step coefficients, for samplers
    /// outside the eta family. All arrays must have length `T`; thresholds
    /// are derived from `noise_scale` as usual.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        schedule: BetaSchedule,
        eta: f64,
        tau: f64,
        dim: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        noise_scale: Vec<f64>,
    ) -> Result<Self> {
        let steps = schedule.steps();
        if a.len() != steps || b.len() != steps || c.len() != steps || noise_scale.len() != steps {
            return Err(Error::Schedule(format!(
                "coefficient arrays must all have length {steps}"
            )));
        }
        if dim == 0 {
            return Err(Error::Schedule("dimension must be >= 1".into()));
        }
        if c.iter().chain(noise_scale.iter()).any(|&v| v < 0.0) {
            return Err(Error::Schedule(
                "noise coefficients must be nonnegative".into(),
            ));
        }
        let thresholds = noise_scale
            .iter()
            .map(|&ns| tau * tau * ns * ns * dim as f64)
            .collect();
        let mut a_prefix = Vec::with_capacity(steps + 1);
        a_prefix.push(1.0);
        let mut prod = 1.0;
        for &a_t in &a {
            prod *= a_t;
            a_prefix.push(prod);
        }
        Ok(Self {
            steps,
            dim,
            eta,
            tau,
            a,
            b,
            c,
            noise_scale,
            thresholds,
            a_prefix,
            clamped_steps: Vec::new(),
            schedule,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn schedule(&self) -> &BetaSchedule {
        &self.schedule
    }

    /// `a_t`, `t = 1..=T`.
    pub fn a(&self, t: usize) -> f64 {
        self.a[t - 1]
    }

    /// `b_t`, `t = 1..=T`.
    pub fn b(&self, t: usize) -> f64 {
        self.b[t - 1]
    }

    /// `c_t`, `t = 0..T` (zero everywhere iff eta = 0).
    pub fn c(&self, t: usize) -> f64 {
        self.c[t]
    }

    /// Noise scale at `t = 0..T`: the eta = 1 value of `c_t`, used by the
    /// stopping thresholds regardless of the configured eta.
    pub fn noise_scale(&self, t: usize) -> f64 {
        self.noise_scale[t]
    }

    /// Residual threshold for the equation producing `x_t`, `t = 0..T`.
    pub fn threshold(&self, t: usize) -> f64 {
        self.thresholds[t]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Steps clamped during construction (empty in well-conditioned tables).
    pub fn clamped_steps(&self) -> &[usize] {
        &self.clamped_steps
    }

    /// Running product `a_i * a_{i+1} * ... * a_s`, with the empty-product
    /// convention 1 for `s < i`. O(1) via prefix products; the single-factor
    /// case returns `a_i` exactly.
    pub fn abar(&self, i: usize, s: usize) -> Result<f64> {
        if i < 1 || i > self.steps {
            return Err(Error::StepIndex {
                index: i,
                min: 1,
                max: self.steps,
            });
        }
        if s > self.steps {
            return Err(Error::StepIndex {
                index: s,
                min: 0,
                max: self.steps,
            });
        }
        Ok(if s < i {
            1.0
        } else if s == i {
            self.a[i - 1]
        } else {
            self.a_prefix[s] / self.a_prefix[i - 1]
        })
    }

    /// 64-bit FNV-1a fingerprint of `(T, betas, eta)`, stored in trajectory
    /// files to reject initialization from a mismatched schedule.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        let mut mix = |bytes: &[u8]| {
            for &byte in bytes {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        mix(&(self.steps as u64).to_le_bytes());
        for &beta in self.schedule.betas() {
            mix(&beta.to_le_bytes());
        }
        mix(&self.eta.to_le_bytes());
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_table(steps: usize, eta: f64, tau: f64, dim: usize) -> CoefficientTable {
        let sched = build_beta_schedule(steps, 1e-4, 0.02).unwrap();
        build_coefficients(&sched, eta, tau, dim).unwrap()
    }

    #[test]
    fn single_step_schedule() {
        let sched = build_beta_schedule(1, 1e-4, 0.02).unwrap();
        assert_eq!(sched.betas(), &[1e-4]);
        assert_eq!(sched.alpha_bar(1), 1.0 - 1e-4);
        assert_eq!(sched.alpha_bar(0), 1.0);
    }

    #[test]
    fn two_step_schedule_products() {
        let sched = build_beta_schedule(2, 1e-4, 0.02).unwrap();
        assert_eq!(sched.betas(), &[1e-4, 0.02]);
        assert_eq!(sched.alpha_bar(1), 1.0 - 1e-4);
        assert_eq!(sched.alpha_bar(2), (1.0 - 1e-4) * (1.0 - 0.02));
    }

    #[test]
    fn rejects_decreasing_beta_range() {
        assert!(build_beta_schedule(2, 0.5, 0.3).is_err());
        assert!(build_beta_schedule(2, 0.0, 0.3).is_err());
        assert!(build_beta_schedule(2, 0.3, 1.0).is_err());
        assert!(build_beta_schedule(0, 1e-4, 0.02).is_err());
    }

    #[test]
    fn alpha_bar_strictly_decreasing() {
        let sched = build_beta_schedule(50, 1e-4, 0.02).unwrap();
        for t in 1..50 {
            assert!(sched.alpha_bar(t + 1) < sched.alpha_bar(t));
        }
        assert!(sched.alpha_bar(50) > 0.0);
        assert!(sched.alpha_bar(1) < 1.0);
        // Exact recurrence by construction.
        for t in 1..=50 {
            assert_eq!(
                sched.alpha_bar(t),
                sched.alpha_bar(t - 1) * (1.0 - sched.betas()[t - 1])
            );
        }
    }

    #[test]
    fn deterministic_sampler_has_zero_noise_coefficients() {
        let table = toy_table(10, 0.0, 1e-3, 4);
        for t in 0..10 {
            assert_eq!(table.c(t), 0.0);
        }
    }

    #[test]
    fn stochastic_sampler_matches_noise_scale() {
        let table = toy_table(10, 1.0, 1e-3, 4);
        for t in 0..10 {
            assert_eq!(table.c(t), table.noise_scale(t));
        }
        assert!(table.clamped_steps().is_empty());
    }

    #[test]
    fn two_step_table_matches_direct_arithmetic() {
        // Independent scripted computation of the full (a, b, c, thresholds)
        // table for T=2, eta=1, tau=1e-3, d=4.
        let table = toy_table(2, 1.0, 1e-3, 4);
        let ab1 = 1.0 - 1e-4;
        let ab2 = ab1 * (1.0 - 0.02);

        // t = 1: abar_prev = 1, so sigma_1 = 0.
        let a1 = (1.0f64 / ab1).sqrt();
        let b1 = -((1.0 - ab1) / ab1).sqrt();
        assert!((table.a(1) - a1).abs() <= 1e-15 * a1.abs());
        assert!((table.b(1) - b1).abs() <= 1e-15 * b1.abs());
        assert_eq!(table.c(0), 0.0);
        assert_eq!(table.noise_scale(0), 0.0);
        assert_eq!(table.threshold(0), 0.0);

        // t = 2.
        let sigma2 = ((1.0 - ab1) / (1.0 - ab2)).sqrt() * (1.0f64 - ab2 / ab1).sqrt();
        let a2 = (ab1 / ab2).sqrt();
        let b2 = (1.0 - ab1 - sigma2 * sigma2).sqrt() - (ab1 * (1.0 - ab2) / ab2).sqrt();
        assert!((table.a(2) - a2).abs() <= 1e-15 * a2.abs());
        assert!((table.b(2) - b2).abs() <= 1e-14 * b2.abs());
        assert!((table.c(1) - sigma2).abs() <= 1e-15 * sigma2.abs());
        let eps1 = 1e-3f64.powi(2) * sigma2 * sigma2 * 4.0;
        assert!((table.threshold(1) - eps1).abs() <= 1e-15 * eps1);
    }

    #[test]
    fn abar_conventions() {
        let table = toy_table(10, 0.0, 1e-3, 4);
        assert_eq!(table.abar(5, 3).unwrap(), 1.0);
        assert_eq!(table.abar(2, 2).unwrap(), table.a(2));
        // Naive loop product oracle.
        let naive = table.a(1) * table.a(2) * table.a(3);
        let fast = table.abar(1, 3).unwrap();
        assert!((fast - naive).abs() <= 1e-14 * naive.abs());
        assert!(table.abar(0, 3).is_err());
        assert!(table.abar(11, 3).is_err());
        assert!(table.abar(1, 11).is_err());
    }

    #[test]
    fn a_is_independent_of_eta() {
        let t0 = toy_table(20, 0.0, 1e-3, 4);
        let t1 = toy_table(20, 1.0, 1e-3, 4);
        for t in 1..=20 {
            assert_eq!(t0.a(t), t1.a(t));
        }
    }

    proptest! {
        #[test]
        fn prefix_product_consistency(steps in 2usize..40, i in 1usize..40) {
            let i = i.min(steps);
            let table = toy_table(steps, 0.0, 1e-3, 2);
            for s in i..steps {
                let lhs = table.abar(i, s).unwrap() * table.a(s + 1);
                let rhs = table.abar(i, s + 1).unwrap();
                prop_assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs.abs());
            }
        }

        #[test]
        fn doubling_tau_quadruples_thresholds(tau in 1e-6f64..1e-1) {
            let base = toy_table(10, 1.0, tau, 3);
            let doubled = toy_table(10, 1.0, 2.0 * tau, 3);
            for t in 0..10 {
                prop_assert_eq!(doubled.threshold(t), 4.0 * base.threshold(t));
            }
        }
    }
}
