//! Nuisance learning: a regression forest, outcome and propensity models, and
//! the closed-form truths of the built-in simulators.

mod forest;
mod learner;
mod models;

use alloc::sync::Arc;

pub use forest::{
    fit_regression_forest, predict_forest, FeatureMatrix, ForestParams, RegressionForest, Tree,
};
pub use learner::{FitError, Learner, Regressor};
pub use models::{
    fit_outcome_model, fit_outcome_model_with, fit_propensity_model, fit_propensity_model_with,
    AdeOracleOutcome, AdeOraclePropensity, ClippedPropensity, ConstantOutcome,
    ConstantPropensity, FittedOutcome, FnOutcome, FnPropensity, OutcomeModel, PropensityModel,
    SwitchbackOracleOutcome,
};

use crate::dgp::DgpConfig;

/// Outcome model `f`, propensity `m` and the clipping bound `zeta`.
#[derive(Clone)]
pub struct NuisanceSet {
    pub f: Arc<dyn OutcomeModel>,
    pub m: Arc<dyn PropensityModel>,
    pub zeta: f64,
}

impl core::fmt::Debug for NuisanceSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("NuisanceSet")
            .field("zeta", &self.zeta)
            .field("includes_shared_state", &self.includes_shared_state())
            .finish_non_exhaustive()
    }
}

impl NuisanceSet {
    pub fn new(
        f: Arc<dyn OutcomeModel>,
        m: Arc<dyn PropensityModel>,
        zeta: f64,
    ) -> Result<Self, FitError> {
        if !(zeta > 0.0 && zeta < 0.5) {
            return Err(FitError::InvalidParams("zeta must lie in (0, 0.5)"));
        }
        Ok(Self { f, m, zeta })
    }

    pub fn includes_shared_state(&self) -> bool {
        self.f.includes_shared_state()
    }

    #[inline]
    pub fn outcome(&self, d: u8, x: &[f64], h: &[f64]) -> f64 {
        self.f.predict(d, x, h)
    }

    /// Propensity, clipped again so the bound holds for any supplied model.
    #[inline]
    pub fn propensity(&self, x: &[f64]) -> f64 {
        let p = self.m.predict(x);
        if p.is_nan() {
            p
        } else {
            p.clamp(self.zeta, 1.0 - self.zeta)
        }
    }

    /// Same propensity, with the outcome model swapped.
    pub fn with_outcome(&self, f: Arc<dyn OutcomeModel>) -> Self {
        Self { f, m: Arc::clone(&self.m), zeta: self.zeta }
    }
}

/// True `f*` and `m*` of a built-in simulator. With `include_shared_state`
/// false the outcome is `E[Y | D, X]`, averaging over the shared state.
pub fn oracle_nuisances_with(cfg: &DgpConfig, include_shared_state: bool) -> NuisanceSet {
    match cfg {
        DgpConfig::Ade(c) => NuisanceSet {
            f: Arc::new(AdeOracleOutcome { cfg: c.clone(), include_h: include_shared_state }),
            m: Arc::new(AdeOraclePropensity { zeta: c.zeta }),
            zeta: c.zeta,
        },
        DgpConfig::Switchback(c) => {
            let p = c.design.treat_prob;
            NuisanceSet {
                f: Arc::new(SwitchbackOracleOutcome {
                    cfg: c.clone(),
                    include_h: include_shared_state,
                }),
                m: Arc::new(ConstantPropensity(p)),
                // The propensity is constant, so the bound only has to contain it.
                zeta: p.min(1.0 - p).min(0.1),
            }
        }
    }
}

pub fn oracle_nuisances(cfg: &DgpConfig) -> NuisanceSet {
    oracle_nuisances_with(cfg, true)
}
