//! AR(1) shared-state model for the average direct effect.
//!
//! ```text
//! X_{t,i} ~ N(x_mean, x_sd^2)            i = 1..p_X
//! D_t     ~ Ber(clip(X_{t,1}, zeta, 1 - zeta))
//! H_t     = ar_coef (H_{t-1} - 1) + 1 + N(0, h_noise_sd^2)
//! Y_t     = sin(2 pi X_{t,1}) + direct D_t + interaction H_t D_t + intercept + N(0, y_noise_sd^2)
//! ```

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{check, ConfigError};
use crate::math;
use crate::rng::RngStream;
use crate::types::{Observation, Regime, Trajectory};

/// How the initial shared state `H_0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields))]
pub enum H0Mode {
    Deterministic { value: f64 },
    /// Draw from the stationary law `N(1, h_noise_sd^2 / (1 - ar_coef^2))`.
    StationaryDraw,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdeDgpConfig {
    #[cfg_attr(feature = "serde", serde(rename = "p_X"))]
    pub p_x: usize,
    pub x_mean: f64,
    pub x_sd: f64,
    pub zeta: f64,
    pub ar_coef: f64,
    pub h_noise_sd: f64,
    pub y_noise_sd: f64,
    pub h0_mode: H0Mode,
    pub direct_coef: f64,
    pub interaction_coef: f64,
    pub intercept: f64,
}

impl Default for AdeDgpConfig {
    fn default() -> Self {
        Self {
            p_x: 10,
            x_mean: 1.0,
            x_sd: 1.0,
            zeta: 0.1,
            ar_coef: 0.75,
            h_noise_sd: 1.0,
            y_noise_sd: math::sqrt(0.1),
            h0_mode: H0Mode::Deterministic { value: 1.0 },
            direct_coef: 2.0,
            interaction_coef: 2.0,
            intercept: -1.0,
        }
    }
}

impl AdeDgpConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.p_x >= 1, "p_X", "must be a positive integer")?;
        check(self.x_mean.is_finite(), "x_mean", "must be finite")?;
        check(self.x_sd.is_finite() && self.x_sd > 0.0, "x_sd", "must be positive")?;
        check(self.zeta > 0.0 && self.zeta < 0.5, "zeta", "must lie in (0, 0.5)")?;
        check(math::abs(self.ar_coef) < 1.0, "ar_coef", "must satisfy |ar_coef| < 1")?;
        check(
            self.h_noise_sd.is_finite() && self.h_noise_sd >= 0.0,
            "h_noise_sd",
            "must be nonnegative",
        )?;
        check(
            self.y_noise_sd.is_finite() && self.y_noise_sd >= 0.0,
            "y_noise_sd",
            "must be nonnegative",
        )?;
        if let H0Mode::Deterministic { value } = self.h0_mode {
            check(value.is_finite(), "h0_mode", "deterministic value must be finite")?;
        }
        check(
            self.direct_coef.is_finite()
                && self.interaction_coef.is_finite()
                && self.intercept.is_finite(),
            "coefficients",
            "must be finite",
        )
    }

    /// Noise-free outcome `f*(d, x, h)`.
    #[inline]
    pub fn outcome_mean(&self, d: u8, x1: f64, h: f64) -> f64 {
        let df = f64::from(d);
        math::sin(2.0 * PI * x1) + self.direct_coef * df + self.interaction_coef * h * df
            + self.intercept
    }

    /// `f*(1, x, h) - f*(0, x, h)`, computed without cancellation.
    #[inline]
    pub fn contrast(&self, h: f64) -> f64 {
        self.direct_coef + self.interaction_coef * h
    }

    pub fn stationary_variance(&self) -> f64 {
        self.h_noise_sd * self.h_noise_sd / (1.0 - self.ar_coef * self.ar_coef)
    }

    /// `E[H_t]` for `t >= 0`.
    pub fn mean_state(&self, t: usize) -> f64 {
        match self.h0_mode {
            H0Mode::StationaryDraw => 1.0,
            H0Mode::Deterministic { value } => {
                1.0 + (value - 1.0) * math::powf(self.ar_coef, t as f64)
            }
        }
    }
}

/// One step of the shared-state recursion.
#[inline]
pub fn ar1_step(h_prev: f64, noise: f64, cfg: &AdeDgpConfig) -> f64 {
    cfg.ar_coef * (h_prev - 1.0) + 1.0 + noise
}

/// Clip of `x1` to `[zeta, 1 - zeta]`.
#[inline]
pub fn propensity_true(x1: f64, zeta: f64) -> f64 {
    x1.max(zeta).min(1.0 - zeta)
}

pub fn simulate_ade_dgp(
    cfg: &AdeDgpConfig,
    t_len: usize,
    rng: &RngStream,
) -> Result<Trajectory, ConfigError> {
    cfg.validate()?;
    check(t_len >= 1, "T", "must be a positive integer")?;
    let mut g = rng.generator();
    let h0 = match cfg.h0_mode {
        H0Mode::Deterministic { value } => value,
        H0Mode::StationaryDraw => g.normal(1.0, math::sqrt(cfg.stationary_variance())),
    };
    let mut obs = Vec::with_capacity(t_len);
    let mut h = h0;
    for _ in 0..t_len {
        h = ar1_step(h, cfg.h_noise_sd * g.standard_normal(), cfg);
        let x: Vec<f64> = (0..cfg.p_x).map(|_| g.normal(cfg.x_mean, cfg.x_sd)).collect();
        let d = g.bernoulli(propensity_true(x[0], cfg.zeta));
        let y = cfg.outcome_mean(d, x[0], h) + cfg.y_noise_sd * g.standard_normal();
        obs.push(Observation { x, d, h: vec![h], y });
    }
    Ok(Trajectory { h0: vec![h0], obs, regime: Regime::GeometricErgodic, design: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_trajectory;

    #[test]
    fn ar1_step_values() {
        let cfg = AdeDgpConfig::default();
        assert_eq!(ar1_step(1.0, 0.0, &cfg), 1.0);
        assert_eq!(ar1_step(3.0, 0.0, &cfg), 2.5);
        assert_eq!(ar1_step(1.0, 0.5, &cfg), 1.5);
    }

    #[test]
    fn propensity_clips() {
        assert_eq!(propensity_true(0.05, 0.1), 0.1);
        assert_eq!(propensity_true(0.5, 0.1), 0.5);
        assert_eq!(propensity_true(1.7, 0.1), 0.9);
    }

    #[test]
    fn zero_noise_outcome() {
        let cfg = AdeDgpConfig::default();
        assert_eq!(cfg.outcome_mean(1, 0.25, 1.0), 4.0);
    }

    #[test]
    fn zero_noise_simulation_matches_outcome_formula() {
        let cfg = AdeDgpConfig { y_noise_sd: 0.0, h_noise_sd: 0.0, ..Default::default() };
        let traj = simulate_ade_dgp(&cfg, 200, &RngStream::new(1, 0)).unwrap();
        for o in &traj.obs {
            assert_eq!(o.h[0], 1.0);
            assert_eq!(o.y, cfg.outcome_mean(o.d, o.x[0], 1.0));
        }
    }

    #[test]
    fn default_trajectory_validates() {
        let traj = simulate_ade_dgp(&AdeDgpConfig::default(), 1000, &RngStream::new(2, 0)).unwrap();
        assert_eq!(traj.len(), 1000);
        assert_eq!(traj.p_x(), 10);
        assert_eq!(validate_trajectory(&traj), Ok(()));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = AdeDgpConfig { zeta: 0.6, ..Default::default() };
        let err = simulate_ade_dgp(&cfg, 10, &RngStream::new(1, 0)).unwrap_err();
        assert_eq!(err.field, "zeta");
        let cfg = AdeDgpConfig { ar_coef: 1.0, ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().field, "ar_coef");
    }

    #[test]
    fn stationary_moments() {
        let cfg = AdeDgpConfig::default();
        let traj = simulate_ade_dgp(&cfg, 100_100, &RngStream::new(11, 0)).unwrap();
        let hs: Vec<f64> = traj.obs[100..].iter().map(|o| o.h[0]).collect();
        let n = hs.len() as f64;
        let mean = math::mean(&hs);
        // Long-run variance of the AR(1) sample mean: sigma^2 / (1 - a)^2 = 16.
        let se = math::sqrt(16.0 / n);
        assert!(math::abs(mean - 1.0) < 3.0 * se, "mean {mean}");
        let var = math::sample_variance(&hs);
        assert!(math::abs(var / (16.0 / 7.0) - 1.0) < 0.05, "var {var}");
    }
}
