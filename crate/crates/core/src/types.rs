//! Observations, trajectories and estimate reports.

use alloc::vec::Vec;
use core::fmt;

use crate::design::SwitchbackDesign;
use crate::estimators::Estimator;
use crate::normal;

/// One time step: covariates, treatment, shared state, outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub d: u8,
    pub h: Vec<f64>,
    pub y: f64,
}

/// Dependence structure assumed for the observed chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Geometrically ergodic, reversible chain.
    GeometricErgodic,
    /// Observations more than `m` steps apart are independent.
    MDependent { m: usize },
}

/// Ordered observations `W_1..W_T` plus the initial shared state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h0: Vec<f64>,
    pub obs: Vec<Observation>,
    pub regime: Regime,
    pub design: Option<SwitchbackDesign>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Covariate dimension, taken from the first observation.
    pub fn p_x(&self) -> usize {
        self.obs.first().map_or(0, |o| o.x.len())
    }

    /// Shared-state dimension.
    pub fn p_h(&self) -> usize {
        self.h0.len()
    }

    /// Observation at 1-based time `t`.
    pub fn at(&self, t: usize) -> &Observation {
        &self.obs[t - 1]
    }
}

/// A single broken trajectory invariant. Time indices are 1-based; `t = 0`
/// refers to the initial shared state.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    TreatmentNotBinary { t: usize, value: u8 },
    NonFiniteCovariate { t: usize },
    NonFiniteSharedState { t: usize },
    NonFiniteOutcome { t: usize },
    CovariateDimension { t: usize, expected: usize, found: usize },
    SharedStateDimension { t: usize, expected: usize, found: usize },
    InvalidDesign { reason: &'static str },
    DesignRegimeMismatch { regime_m: Option<usize>, design_m: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "trajectory has no observations"),
            Self::TreatmentNotBinary { t, value } => {
                write!(f, "treatment not binary at t={t} (found {value})")
            }
            Self::NonFiniteCovariate { t } => write!(f, "non-finite covariate at t={t}"),
            Self::NonFiniteSharedState { t } => write!(f, "non-finite shared state at t={t}"),
            Self::NonFiniteOutcome { t } => write!(f, "non-finite outcome at t={t}"),
            Self::CovariateDimension { t, expected, found } => {
                write!(f, "covariate dimension {found} at t={t}, expected {expected}")
            }
            Self::SharedStateDimension { t, expected, found } => {
                write!(f, "shared state dimension {found} at t={t}, expected {expected}")
            }
            Self::InvalidDesign { reason } => write!(f, "invalid switchback design: {reason}"),
            Self::DesignRegimeMismatch { regime_m, design_m } => match regime_m {
                Some(m) => write!(f, "regime is {m}-dependent but design has m={design_m}"),
                None => write!(f, "switchback design (m={design_m}) on a non m-dependent regime"),
            },
        }
    }
}

/// Checks every trajectory invariant and reports all violations at once.
pub fn validate_trajectory(traj: &Trajectory) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if traj.obs.is_empty() {
        out.push(Violation::Empty);
    }
    let p_x = traj.p_x();
    let p_h = traj.p_h();
    if traj.h0.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFiniteSharedState { t: 0 });
    }
    for (i, o) in traj.obs.iter().enumerate() {
        let t = i + 1;
        if o.d > 1 {
            out.push(Violation::TreatmentNotBinary { t, value: o.d });
        }
        if o.x.len() != p_x {
            out.push(Violation::CovariateDimension { t, expected: p_x, found: o.x.len() });
        }
        if o.h.len() != p_h {
            out.push(Violation::SharedStateDimension { t, expected: p_h, found: o.h.len() });
        }
        if o.x.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFiniteCovariate { t });
        }
        if o.h.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFiniteSharedState { t });
        }
        if !o.y.is_finite() {
            out.push(Violation::NonFiniteOutcome { t });
        }
    }
    if let Some(design) = &traj.design {
        if let Err(reason) = design.check() {
            out.push(Violation::InvalidDesign { reason });
        }
        match traj.regime {
            Regime::MDependent { m } if m == design.m => {}
            Regime::MDependent { m } => {
                out.push(Violation::DesignRegimeMismatch { regime_m: Some(m), design_m: design.m })
            }
            Regime::GeometricErgodic => {
                out.push(Violation::DesignRegimeMismatch { regime_m: None, design_m: design.m })
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Point estimate, variance and normal confidence interval for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimator: Estimator,
    pub psi_hat: f64,
    /// Raw variance estimate; may be negative for the m-dependent estimator.
    pub sigma2_hat: f64,
    /// Set when `sigma2_hat < 0`; the interval then uses zero variance.
    pub degenerate: bool,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    pub t_len: usize,
}

impl EstimateReport {
    /// Builds the report and its `(1 - alpha)` interval
    /// `psi_hat ± z * sqrt(max(sigma2, 0) / T)`.
    pub fn new(
        estimator: Estimator,
        psi_hat: f64,
        sigma2_hat: f64,
        t_len: usize,
        alpha: f64,
    ) -> Result<Self, crate::variance::VarianceError> {
        let degenerate = sigma2_hat < 0.0;
        let (ci_low, ci_high) =
            crate::variance::confidence_interval(psi_hat, sigma2_hat.max(0.0), t_len, alpha)?;
        Ok(Self { estimator, psi_hat, sigma2_hat, degenerate, ci_low, ci_high, alpha, t_len })
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn covers(&self, target: f64) -> bool {
        self.ci_low <= target && target <= self.ci_high
    }

    /// Critical value used for this report's interval.
    pub fn z(&self) -> f64 {
        normal::two_sided_critical(self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn obs(d: u8, h: f64) -> Observation {
        Observation { x: vec![0.5], d, h: vec![h], y: 1.0 }
    }

    fn traj(obs: Vec<Observation>) -> Trajectory {
        Trajectory { h0: vec![1.0], obs, regime: Regime::GeometricErgodic, design: None }
    }

    #[test]
    fn minimal_trajectory_is_valid() {
        assert_eq!(validate_trajectory(&traj(vec![obs(1, 1.0)])), Ok(()));
    }

    #[test]
    fn reports_every_violation_with_time_index() {
        let mut o = vec![obs(0, 1.0), obs(1, 1.0), obs(2, 1.0)];
        o[0].h[0] = f64::NAN;
        o[1].x.push(1.0);
        let errs = validate_trajectory(&traj(o)).unwrap_err();
        assert!(errs.contains(&Violation::TreatmentNotBinary { t: 3, value: 2 }));
        assert!(errs.contains(&Violation::NonFiniteSharedState { t: 1 }));
        assert!(errs.contains(&Violation::CovariateDimension { t: 2, expected: 1, found: 2 }));
        let msg = alloc::format!("{}", Violation::TreatmentNotBinary { t: 3, value: 2 });
        assert!(msg.starts_with("treatment not binary at t=3"));
        assert_eq!(
            alloc::format!("{}", Violation::NonFiniteSharedState { t: 1 }),
            "non-finite shared state at t=1"
        );
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        assert_eq!(validate_trajectory(&traj(vec![])), Err(vec![Violation::Empty]));
    }

    #[test]
    fn design_must_match_regime() {
        let mut t = traj(vec![obs(1, 1.0)]);
        t.design = Some(SwitchbackDesign { m: 2, block_len: 4, treat_prob: 0.5 });
        t.regime = Regime::MDependent { m: 3 };
        let errs = validate_trajectory(&t).unwrap_err();
        assert_eq!(errs, vec![Violation::DesignRegimeMismatch { regime_m: Some(3), design_m: 2 }]);
    }

    #[test]
    fn report_interval_contains_estimate() {
        let r = EstimateReport::new(Estimator::Dml4ssi, 1.0, 4.0, 100, 0.05).unwrap();
        assert!(r.ci_low <= 1.0 && 1.0 <= r.ci_high);
        assert!((r.width() - 2.0 * r.z() * 0.2).abs() < 1e-12);
        let neg = EstimateReport::new(Estimator::SbHt, 1.0, -0.5, 100, 0.05).unwrap();
        assert!(neg.degenerate);
        assert_eq!((neg.ci_low, neg.ci_high), (1.0, 1.0));
    }
}
