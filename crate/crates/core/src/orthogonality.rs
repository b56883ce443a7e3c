//! Finite-difference check that an estimator's expectation is insensitive to
//! first order in nuisance perturbations.
//!
//! Nuisances are moved along `eta_r = eta* + r (eta~ - eta*)` from the oracle
//! `eta*` towards a fixed perturbation `eta~`. For each replication the same
//! trajectory is scored at every `r`, so `g(r)` is estimated by the mean of
//! paired differences `psi(eta_r) - psi(eta*)`. An orthogonal score has
//! `g(r) = O(r^2)`; a non-orthogonal one decays only linearly.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dgp::{ConfigError, DgpConfig};
use crate::estimators::{self, EstimateError};
use crate::math::{self, KahanSum};
use crate::nuisance::{oracle_nuisances, NuisanceSet, OutcomeModel, PropensityModel};
use crate::rng::RngStream;

/// Which score is probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    AdeDml,
    AdePlugin,
    GateDml,
    GatePlugin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityConfig {
    pub replications: usize,
    pub t_len: usize,
    /// Step sizes; the largest one calibrates the quadratic constant.
    pub eps: Vec<f64>,
    /// Trajectory `r` is drawn from stream `(seed, 8 r + 3)`.
    pub seed: u64,
    /// Shift added to the propensity in the perturbed direction.
    pub propensity_shift: f64,
    /// Amplitude of the outcome perturbation.
    pub outcome_shift: f64,
}

impl Default for OrthogonalityConfig {
    fn default() -> Self {
        Self {
            replications: 200,
            t_len: 1000,
            eps: vec![0.2, 0.1, 0.05],
            seed: 0,
            propensity_shift: 0.08,
            outcome_shift: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    pub eps: Vec<f64>,
    /// Mean paired difference at each step.
    pub g: Vec<f64>,
    /// Monte Carlo standard error of each `g`.
    pub se: Vec<f64>,
    /// `|g(eps_max)| / eps_max^2`.
    pub kappa: f64,
    /// Whether `|g(eps)| <= kappa eps^2 + 3 se(eps)` for every step.
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrthogonalityError {
    Config(ConfigError),
    Estimate(EstimateError),
    /// ADE scores need the AR(1) model and GATE scores the switchback model.
    WrongModel,
    NoSteps,
}

impl From<ConfigError> for OrthogonalityError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<EstimateError> for OrthogonalityError {
    fn from(e: EstimateError) -> Self {
        Self::Estimate(e)
    }
}

impl core::fmt::Display for OrthogonalityError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::Config(e) => e.fmt(f),
            Self::Estimate(e) => e.fmt(f),
            Self::WrongModel => f.write_str("score kind does not match the simulator"),
            Self::NoSteps => f.write_str("at least one positive step size is required"),
        }
    }
}

type Delta = fn(u8, &[f64], &[f64]) -> f64;

/// `f + r * delta`, keeping the base model's exact contrast.
struct ShiftedOutcome {
    base: Arc<dyn OutcomeModel>,
    delta: Delta,
    scale: f64,
}

impl OutcomeModel for ShiftedOutcome {
    fn includes_shared_state(&self) -> bool {
        self.base.includes_shared_state()
    }

    fn predict(&self, d: u8, x: &[f64], h: &[f64]) -> f64 {
        self.base.predict(d, x, h) + self.scale * (self.delta)(d, x, h)
    }

    fn contrast(&self, x: &[f64], h1: &[f64], h0: &[f64]) -> f64 {
        self.base.contrast(x, h1, h0)
            + self.scale * ((self.delta)(1, x, h1) - (self.delta)(0, x, h0))
    }
}

struct ShiftedPropensity {
    base: Arc<dyn PropensityModel>,
    shift: f64,
}

impl PropensityModel for ShiftedPropensity {
    fn predict(&self, x: &[f64]) -> f64 {
        self.base.predict(x) + self.shift
    }
}

/// Control-arm outcome perturbation for the AR(1) model.
fn ade_delta(d: u8, x: &[f64], _h: &[f64]) -> f64 {
    if d == 0 {
        1.0 + 0.5 * math::sin(2.0 * PI * x[0])
    } else {
        0.0
    }
}

/// Outcome perturbation for the switchback model.
fn gate_delta(d: u8, x: &[f64], _h: &[f64]) -> f64 {
    0.5 + 0.5 * f64::from(d) + 0.25 * libm::cos(2.0 * PI * x[0])
}

fn perturbed(
    oracle: &NuisanceSet,
    delta: Delta,
    cfg: &OrthogonalityConfig,
    r: f64,
    zeta: f64,
) -> NuisanceSet {
    NuisanceSet {
        f: Arc::new(ShiftedOutcome {
            base: Arc::clone(&oracle.f),
            delta,
            scale: r * cfg.outcome_shift,
        }),
        m: Arc::new(ShiftedPropensity { base: Arc::clone(&oracle.m), shift: r * cfg.propensity_shift }),
        zeta,
    }
}

/// Runs the finite-difference check for one score on one simulator.
pub fn neyman_orthogonality_check(
    dgp: &DgpConfig,
    kind: ScoreKind,
    cfg: &OrthogonalityConfig,
) -> Result<OrthogonalityReport, OrthogonalityError> {
    dgp.validate()?;
    let eps_max = cfg.eps.iter().copied().fold(0.0, f64::max);
    if !(eps_max > 0.0) || cfg.replications == 0 {
        return Err(OrthogonalityError::NoSteps);
    }
    let is_ade = matches!(kind, ScoreKind::AdeDml | ScoreKind::AdePlugin);
    let (delta, design) = match (dgp, is_ade) {
        (DgpConfig::Ade(_), true) => (ade_delta as Delta, None),
        (DgpConfig::Switchback(c), false) => (gate_delta as Delta, Some(c.design)),
        _ => return Err(OrthogonalityError::WrongModel),
    };
    let oracle = oracle_nuisances(dgp);
    // Loosened so the shifted propensity is never clipped back.
    let zeta = 0.5 * oracle.zeta;
    let sets: Vec<NuisanceSet> =
        cfg.eps.iter().map(|&r| perturbed(&oracle, delta, cfg, r, zeta)).collect();
    let base = perturbed(&oracle, delta, cfg, 0.0, zeta);
    let score = |traj: &crate::types::Trajectory, n: &NuisanceSet| -> Result<f64, EstimateError> {
        let (psi, _) = match (kind, design.as_ref()) {
            (ScoreKind::AdeDml, _) => estimators::psi_ade_dml(traj, n)?,
            (ScoreKind::AdePlugin, _) => estimators::psi_plugin(traj, n)?,
            (ScoreKind::GateDml, Some(d)) => estimators::psi_gate_dml(traj, n, d)?,
            (ScoreKind::GatePlugin, Some(d)) => estimators::psi_gate_plugin(traj, n, d)?,
            _ => unreachable!("design is present for switchback scores"),
        };
        Ok(psi)
    };
    let k = cfg.eps.len();
    let mut diffs: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.replications); k];
    for r in 0..cfg.replications as u64 {
        let traj = dgp.simulate(cfg.t_len, &RngStream::new(cfg.seed, r * 8 + 3))?;
        let psi0 = score(&traj, &base)?;
        for (j, set) in sets.iter().enumerate() {
            diffs[j].push(score(&traj, set)? - psi0);
        }
    }
    let n = cfg.replications as f64;
    let g: Vec<f64> = diffs.iter().map(|d| math::mean(d)).collect();
    let se: Vec<f64> = diffs
        .iter()
        .map(|d| if d.len() > 1 { math::sqrt(math::sample_variance(d) / n) } else { 0.0 })
        .collect();
    let j_max = cfg.eps.iter().position(|&e| e == eps_max).unwrap_or(0);
    let kappa = g[j_max].abs() / (eps_max * eps_max);
    let passes = cfg
        .eps
        .iter()
        .zip(g.iter().zip(&se))
        .all(|(&e, (&gv, &s))| gv.abs() <= kappa * e * e + 3.0 * s);
    Ok(OrthogonalityReport { eps: cfg.eps.clone(), g, se, kappa, passes })
}

/// Sum of squared deviations of `g(eps) / eps^2` from `kappa`, useful for
/// diagnostics.
pub fn quadratic_misfit(report: &OrthogonalityReport) -> f64 {
    let mut acc = KahanSum::new();
    for (&e, &g) in report.eps.iter().zip(&report.g) {
        let d = g.abs() / (e * e) - report.kappa;
        acc.add(d * d);
    }
    acc.total()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{AdeDgpConfig, SwitchbackDgpConfig};

    fn quick() -> OrthogonalityConfig {
        OrthogonalityConfig { replications: 40, t_len: 500, ..Default::default() }
    }

    #[test]
    fn ade_scores() {
        let dgp = DgpConfig::Ade(AdeDgpConfig::default());
        let dml = neyman_orthogonality_check(&dgp, ScoreKind::AdeDml, &quick()).unwrap();
        assert!(dml.passes, "{dml:?}");
        let plug = neyman_orthogonality_check(&dgp, ScoreKind::AdePlugin, &quick()).unwrap();
        assert!(!plug.passes, "{plug:?}");
    }

    #[test]
    fn mismatched_kind_is_rejected() {
        let dgp = DgpConfig::Switchback(SwitchbackDgpConfig::default());
        assert_eq!(
            neyman_orthogonality_check(&dgp, ScoreKind::AdeDml, &quick()),
            Err(OrthogonalityError::WrongModel)
        );
    }
}
