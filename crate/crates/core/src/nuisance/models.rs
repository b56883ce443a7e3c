//! Outcome and propensity models, fitted or closed-form.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::forest::{FeatureMatrix, ForestParams};
use super::learner::{FitError, Learner, Regressor};
use crate::dgp::{propensity_true, AdeDgpConfig, SwitchbackDgpConfig};
use crate::math;
use crate::types::Trajectory;

/// Conditional mean of the outcome given treatment, covariates and shared state.
pub trait OutcomeModel: Send + Sync {
    /// When false, `h` is ignored.
    fn includes_shared_state(&self) -> bool;

    fn predict(&self, d: u8, x: &[f64], h: &[f64]) -> f64;

    /// `f(1, x, h1) - f(0, x, h0)`.
    fn contrast(&self, x: &[f64], h1: &[f64], h0: &[f64]) -> f64 {
        self.predict(1, x, h1) - self.predict(0, x, h0)
    }
}

/// Probability of treatment given covariates.
pub trait PropensityModel: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

/// Outcome model backed by any [`Regressor`] over rows `(d, x, [h])`.
pub struct FittedOutcome<R> {
    model: R,
    include_h: bool,
}

impl<R: Regressor> OutcomeModel for FittedOutcome<R> {
    fn includes_shared_state(&self) -> bool {
        self.include_h
    }

    fn predict(&self, d: u8, x: &[f64], h: &[f64]) -> f64 {
        let mut row = Vec::with_capacity(self.model.feature_count());
        row.push(f64::from(d));
        row.extend_from_slice(x);
        if self.include_h {
            row.extend_from_slice(h);
        }
        self.model.predict(&row)
    }
}

/// Propensity backed by a [`Regressor`] on `x`, clipped to `[zeta, 1 - zeta]`.
pub struct ClippedPropensity<R> {
    model: R,
    zeta: f64,
}

impl<R: Regressor> ClippedPropensity<R> {
    pub fn zeta(&self) -> f64 {
        self.zeta
    }
}

impl<R: Regressor> PropensityModel for ClippedPropensity<R> {
    fn predict(&self, x: &[f64]) -> f64 {
        clip(self.model.predict(x), self.zeta)
    }
}

fn clip(v: f64, zeta: f64) -> f64 {
    // NaN maps to the lower bound rather than propagating.
    if v.is_nan() {
        zeta
    } else {
        v.clamp(zeta, 1.0 - zeta)
    }
}

fn outcome_rows(aux: &Trajectory, include_h: bool) -> Result<(FeatureMatrix, Vec<f64>), FitError> {
    let width = 1 + aux.p_x() + if include_h { aux.p_h() } else { 0 };
    let mut data = Vec::with_capacity(aux.len() * width);
    for o in &aux.obs {
        data.push(f64::from(o.d));
        data.extend_from_slice(&o.x);
        if include_h {
            data.extend_from_slice(&o.h);
        }
    }
    let targets = aux.obs.iter().map(|o| o.y).collect();
    Ok((FeatureMatrix::new(data, aux.len(), width)?, targets))
}

pub fn fit_outcome_model_with<L: Learner>(
    aux: &Trajectory,
    include_shared_state: bool,
    learner: &L,
) -> Result<FittedOutcome<L::Model>, FitError> {
    if aux.is_empty() {
        return Err(FitError::Empty);
    }
    let (x, y) = outcome_rows(aux, include_shared_state)?;
    Ok(FittedOutcome { model: learner.fit(&x, &y)?, include_h: include_shared_state })
}

pub fn fit_propensity_model_with<L: Learner>(
    aux: &Trajectory,
    zeta: f64,
    learner: &L,
) -> Result<ClippedPropensity<L::Model>, FitError> {
    if !(zeta > 0.0 && zeta < 0.5) {
        return Err(FitError::InvalidParams("zeta must lie in (0, 0.5)"));
    }
    if aux.is_empty() {
        return Err(FitError::Empty);
    }
    let data = aux.obs.iter().flat_map(|o| o.x.iter().copied()).collect();
    let x = FeatureMatrix::new(data, aux.len(), aux.p_x())?;
    let d: Vec<f64> = aux.obs.iter().map(|o| f64::from(o.d)).collect();
    Ok(ClippedPropensity { model: learner.fit(&x, &d)?, zeta })
}

/// Forest regression of `y` on `(d, x, h)`, or on `(d, x)` without the shared state.
pub fn fit_outcome_model(
    aux: &Trajectory,
    include_shared_state: bool,
    params: &ForestParams,
) -> Result<Box<dyn OutcomeModel>, FitError> {
    Ok(Box::new(fit_outcome_model_with(aux, include_shared_state, params)?))
}

/// Forest regression of `d` on `x`, clipped to `[zeta, 1 - zeta]`.
pub fn fit_propensity_model(
    aux: &Trajectory,
    zeta: f64,
    params: &ForestParams,
) -> Result<Box<dyn PropensityModel>, FitError> {
    Ok(Box::new(fit_propensity_model_with(aux, zeta, params)?))
}

/// Closed-form outcome mean of the AR(1) model.
#[derive(Debug, Clone)]
pub struct AdeOracleOutcome {
    pub cfg: AdeDgpConfig,
    pub include_h: bool,
}

impl OutcomeModel for AdeOracleOutcome {
    fn includes_shared_state(&self) -> bool {
        self.include_h
    }

    fn predict(&self, d: u8, x: &[f64], h: &[f64]) -> f64 {
        // Without the shared state, `H_t` is replaced by its stationary mean 1.
        let h = if self.include_h { h[0] } else { 1.0 };
        self.cfg.outcome_mean(d, x[0], h)
    }

    fn contrast(&self, _x: &[f64], h1: &[f64], _h0: &[f64]) -> f64 {
        // Under control the shared state drops out of the mean.
        self.cfg.contrast(if self.include_h { h1[0] } else { 1.0 })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdeOraclePropensity {
    pub zeta: f64,
}

impl PropensityModel for AdeOraclePropensity {
    fn predict(&self, x: &[f64]) -> f64 {
        propensity_true(x[0], self.zeta)
    }
}

/// Closed-form outcome mean of the switchback carryover model.
#[derive(Debug, Clone)]
pub struct SwitchbackOracleOutcome {
    pub cfg: SwitchbackDgpConfig,
    pub include_h: bool,
}

impl SwitchbackOracleOutcome {
    /// `E[carryover | D_t = d]` under the block design, ignoring the initial
    /// block: lag `i < block_len` shares the current block with probability
    /// `1 - i / block_len` and is otherwise an independent draw.
    fn expected_carryover(&self, d: u8) -> f64 {
        let design = &self.cfg.design;
        let s = self.cfg.spill_scale;
        let l = design.block_len as f64;
        let fresh = design.treat_prob * math::exp(-1.0 / s) + (1.0 - design.treat_prob);
        let same = math::exp(-f64::from(d) / s);
        let mut acc = math::KahanSum::new();
        for i in 1..=design.m {
            let q = i as f64 / l;
            acc.add((1.0 - q) * same + q * fresh);
        }
        acc.total() / design.m as f64
    }
}

impl OutcomeModel for SwitchbackOracleOutcome {
    fn includes_shared_state(&self) -> bool {
        self.include_h
    }

    fn predict(&self, d: u8, x: &[f64], h: &[f64]) -> f64 {
        if self.include_h {
            self.cfg.outcome_mean(d, x[0], h)
        } else {
            math::sin(2.0 * PI * x[0])
                + self.cfg.direct_coef * f64::from(d)
                + self.cfg.spill_coef * self.expected_carryover(d)
                + self.cfg.intercept
        }
    }

    fn contrast(&self, x: &[f64], h1: &[f64], h0: &[f64]) -> f64 {
        if self.include_h {
            // The covariate term cancels exactly.
            self.cfg.direct_coef
                + self.cfg.spill_coef * (self.cfg.carryover(h1) - self.cfg.carryover(h0))
        } else {
            self.predict(1, x, h1) - self.predict(0, x, h0)
        }
    }
}

/// Treatment probability that does not depend on covariates.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPropensity(pub f64);

impl PropensityModel for ConstantPropensity {
    fn predict(&self, _x: &[f64]) -> f64 {
        self.0
    }
}

/// A fixed value for every input; mostly useful in tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOutcome(pub f64);

impl OutcomeModel for ConstantOutcome {
    fn includes_shared_state(&self) -> bool {
        false
    }

    fn predict(&self, _d: u8, _x: &[f64], _h: &[f64]) -> f64 {
        self.0
    }
}

/// Any closure `(d, x, h) -> f64` as an outcome model that uses `h`.
pub struct FnOutcome<F>(pub F);

impl<F: Fn(u8, &[f64], &[f64]) -> f64 + Send + Sync> OutcomeModel for FnOutcome<F> {
    fn includes_shared_state(&self) -> bool {
        true
    }

    fn predict(&self, d: u8, x: &[f64], h: &[f64]) -> f64 {
        (self.0)(d, x, h)
    }
}

/// Any closure `x -> f64` as a propensity model.
pub struct FnPropensity<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> PropensityModel for FnPropensity<F> {
    fn predict(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}
