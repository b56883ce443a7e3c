//! Data-generating processes and true estimands.

mod ade;
mod switchback;
mod truth;

use core::fmt;

pub use ade::{ar1_step, propensity_true, simulate_ade_dgp, AdeDgpConfig, H0Mode};
pub use switchback::{
    simulate_switchback_dgp, simulate_switchback_with_assignments, SwitchbackDgpConfig,
};
pub use truth::{true_ade, true_ade_oracle, true_gate, true_gate_oracle, TruthMethod, TruthSpec};

/// A configuration field that breaks its invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: &'static str,
}

impl ConfigError {
    pub const fn new(field: &'static str, reason: &'static str) -> Self {
        Self { field, reason }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {}: {}", self.field, self.reason)
    }
}

/// One of the two built-in structural models.
#[derive(Debug, Clone, PartialEq)]
pub enum DgpConfig {
    Ade(AdeDgpConfig),
    Switchback(SwitchbackDgpConfig),
}

impl DgpConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            Self::Ade(c) => c.validate(),
            Self::Switchback(c) => c.validate(),
        }
    }

    pub fn simulate(
        &self,
        t_len: usize,
        rng: &crate::rng::RngStream,
    ) -> Result<crate::types::Trajectory, ConfigError> {
        match self {
            Self::Ade(c) => simulate_ade_dgp(c, t_len, rng),
            Self::Switchback(c) => simulate_switchback_dgp(c, t_len, rng),
        }
    }

    /// Analytic estimand at horizon `t_len`.
    pub fn truth(&self, t_len: usize) -> TruthSpec {
        match self {
            Self::Ade(c) => true_ade(c, t_len),
            Self::Switchback(c) => true_gate(c),
        }
    }

    pub fn design(&self) -> Option<&crate::design::SwitchbackDesign> {
        match self {
            Self::Ade(_) => None,
            Self::Switchback(c) => Some(&c.design),
        }
    }
}

fn check(ok: bool, field: &'static str, reason: &'static str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(field, reason))
    }
}
