//! Switchback model with an m-step carryover window.
//!
//! The shared state is the last `m` treatments and first covariates,
//! `H_t = (D_{t-m}, .., D_{t-1}, X_{t-m,1}, .., X_{t-1,1})`, and
//!
//! ```text
//! Y_t = sin(2 pi X_{t,1}) + direct D_t
//!       + spill (1/m) sum_{i=1..m} exp(-D_{t-i} / spill_scale) + intercept + noise
//! ```

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{check, ConfigError};
use crate::design::{draw_switchback_assignments, SwitchbackDesign};
use crate::math;
use crate::rng::{Generator, RngStream};
use crate::types::{Observation, Regime, Trajectory};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SwitchbackDgpConfig {
    #[cfg_attr(feature = "serde", serde(rename = "p_X"))]
    pub p_x: usize,
    pub design: SwitchbackDesign,
    pub y_noise_sd: f64,
    pub spill_coef: f64,
    pub spill_scale: f64,
    pub direct_coef: f64,
    pub intercept: f64,
}

impl Default for SwitchbackDgpConfig {
    fn default() -> Self {
        Self {
            p_x: 1,
            design: SwitchbackDesign::default(),
            y_noise_sd: math::sqrt(0.1),
            spill_coef: 2.0,
            spill_scale: 3.0,
            direct_coef: 2.0,
            intercept: -1.0,
        }
    }
}

impl SwitchbackDgpConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.p_x >= 1, "p_X", "must be a positive integer")?;
        self.design.check().map_err(|reason| ConfigError::new("design", reason))?;
        check(self.design.m >= 1, "design.m", "must be at least 1 for the carryover model")?;
        check(
            self.y_noise_sd.is_finite() && self.y_noise_sd >= 0.0,
            "y_noise_sd",
            "must be nonnegative",
        )?;
        check(
            self.spill_scale.is_finite() && self.spill_scale > 0.0,
            "spill_scale",
            "must be positive",
        )?;
        check(
            self.spill_coef.is_finite() && self.direct_coef.is_finite() && self.intercept.is_finite(),
            "coefficients",
            "must be finite",
        )
    }

    pub fn m(&self) -> usize {
        self.design.m
    }

    /// Shared-state dimension `2m`.
    pub fn p_h(&self) -> usize {
        2 * self.design.m
    }

    /// `(1/m) sum_i exp(-D_{t-i} / spill_scale)` from the treatment half of `h`.
    #[inline]
    pub fn carryover(&self, h: &[f64]) -> f64 {
        let m = self.m();
        let mut acc = math::KahanSum::new();
        for &d in &h[..m] {
            acc.add(math::exp(-d / self.spill_scale));
        }
        acc.total() / m as f64
    }

    /// Noise-free outcome `f*(d, x, h)`.
    #[inline]
    pub fn outcome_mean(&self, d: u8, x1: f64, h: &[f64]) -> f64 {
        math::sin(2.0 * PI * x1)
            + self.direct_coef * f64::from(d)
            + self.spill_coef * self.carryover(h)
            + self.intercept
    }

    /// All-treated minus all-control mean outcome.
    pub fn gate(&self) -> f64 {
        self.direct_coef + self.spill_coef * (math::exp(-1.0 / self.spill_scale) - 1.0)
    }
}

/// Simulates with a caller-supplied assignment vector covering positions
/// `1-m ..= T`. Covariates for all `T + m` positions are drawn first, then
/// one outcome noise per step, so the draws do not depend on `assignments`.
pub fn simulate_switchback_with_assignments(
    cfg: &SwitchbackDgpConfig,
    t_len: usize,
    assignments: &[u8],
    rng: &mut Generator,
) -> Result<Trajectory, ConfigError> {
    cfg.validate()?;
    check(t_len >= 1, "T", "must be a positive integer")?;
    let m = cfg.m();
    check(assignments.len() == t_len + m, "assignments", "must have length T + m")?;
    let xs: Vec<Vec<f64>> =
        (0..t_len + m).map(|_| (0..cfg.p_x).map(|_| rng.uniform()).collect()).collect();
    let state = |j: usize| -> Vec<f64> {
        // State for the unit at index j (position j + 1 - m), j >= m.
        let mut h = Vec::with_capacity(2 * m);
        h.extend(assignments[j - m..j].iter().map(|&d| f64::from(d)));
        h.extend(xs[j - m..j].iter().map(|x| x[0]));
        h
    };
    let mut obs = Vec::with_capacity(t_len);
    for j in m..t_len + m {
        let h = state(j);
        let d = assignments[j];
        let x = xs[j].clone();
        let y = cfg.outcome_mean(d, x[0], &h) + cfg.y_noise_sd * rng.standard_normal();
        obs.push(Observation { x, d, h, y });
    }
    // h0 holds the burn-in window that precedes the first unit.
    let h0 = obs[0].h.clone();
    Ok(Trajectory { h0, obs, regime: Regime::MDependent { m }, design: Some(cfg.design) })
}

pub fn simulate_switchback_dgp(
    cfg: &SwitchbackDgpConfig,
    t_len: usize,
    rng: &RngStream,
) -> Result<Trajectory, ConfigError> {
    cfg.validate()?;
    check(t_len >= 1, "T", "must be a positive integer")?;
    let mut g = rng.generator();
    let assignments = draw_switchback_assignments(&cfg.design, t_len, &mut g);
    simulate_switchback_with_assignments(cfg, t_len, &assignments.values, &mut g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_trajectory;
    use alloc::vec;

    fn quiet() -> SwitchbackDgpConfig {
        SwitchbackDgpConfig { y_noise_sd: 0.0, ..Default::default() }
    }

    #[test]
    fn zero_noise_all_treated() {
        let cfg = quiet();
        let mut h = vec![1.0; 5];
        h.extend([0.3; 5]);
        let y = cfg.outcome_mean(1, 0.0, &h);
        let expected = 1.0 + 2.0 * libm::exp(-1.0 / 3.0);
        assert!((y - expected).abs() < 1e-15);
        assert!((expected - 2.433_062).abs() < 1e-6);
    }

    #[test]
    fn zero_noise_all_control() {
        let cfg = quiet();
        assert_eq!(cfg.outcome_mean(0, 0.0, &[0.0; 10]), 1.0);
    }

    #[test]
    fn forced_assignments_reproduce_formula() {
        let cfg = quiet();
        let mut g = RngStream::new(5, 0).generator();
        let traj = simulate_switchback_with_assignments(&cfg, 20, &[1; 25], &mut g).unwrap();
        for o in &traj.obs {
            assert_eq!(o.h[..5], [1.0; 5]);
            assert_eq!(o.y, cfg.outcome_mean(1, o.x[0], &o.h));
        }
    }

    #[test]
    fn state_is_lagged_window() {
        let cfg = SwitchbackDgpConfig::default();
        let traj = simulate_switchback_dgp(&cfg, 300, &RngStream::new(8, 1)).unwrap();
        assert_eq!(traj.regime, Regime::MDependent { m: 5 });
        assert_eq!(validate_trajectory(&traj), Ok(()));
        assert_eq!(traj.p_h(), 10);
        for t in 7..=300 {
            let (cur, prev) = (traj.at(t), traj.at(t - 1));
            assert_eq!(cur.h[4], f64::from(prev.d));
            assert_eq!(cur.h[9], prev.x[0]);
            assert_eq!(cur.h[..4], prev.h[1..5]);
        }
    }

    #[test]
    fn m_zero_rejected() {
        let cfg = SwitchbackDgpConfig {
            design: SwitchbackDesign { m: 0, block_len: 1, treat_prob: 0.5 },
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field, "design.m");
    }
}
