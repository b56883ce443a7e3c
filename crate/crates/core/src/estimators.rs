//! Point estimators as means of per-step scores.
//!
//! Every estimator returns its score series alongside the estimate so the
//! variance estimators can be applied afterwards. Means use compensated
//! summation.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::design::SwitchbackDesign;
use crate::math::{self, KahanSum};
use crate::nuisance::{NuisanceSet, PropensityModel};
use crate::types::{Observation, Regime, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Estimator {
    Dml4ssi,
    Plugin,
    HtNaive,
    DmlNaive,
    Ssac,
    SbHt,
}

impl Estimator {
    pub const ALL: [Estimator; 6] =
        [Self::Dml4ssi, Self::Plugin, Self::HtNaive, Self::DmlNaive, Self::Ssac, Self::SbHt];

    pub const fn label(self) -> &'static str {
        match self {
            Self::Dml4ssi => "dml4ssi",
            Self::Plugin => "plugin",
            Self::HtNaive => "ht-naive",
            Self::DmlNaive => "dml-naive",
            Self::Ssac => "ssac",
            Self::SbHt => "sb-ht",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownEstimator;

impl fmt::Display for UnknownEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of dml4ssi, plugin, ht-naive, dml-naive, ssac, sb-ht")
    }
}

impl FromStr for Estimator {
    type Err = UnknownEstimator;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|e| e.label() == s).ok_or(UnknownEstimator)
    }
}

/// Per-step scores whose mean is the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiSeries {
    pub values: Vec<f64>,
    pub estimator: Estimator,
    pub regime: Regime,
    /// Dependence horizon, when the trajectory declares one.
    pub m: Option<usize>,
}

impl PhiSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        math::mean(&self.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimateError {
    EmptyTrajectory,
    /// A score or nuisance output at step `t` (1-based) was not finite.
    NonFinite { t: usize },
    PropensityOutOfRange { t: usize, value: f64 },
    /// The outcome model for the naive estimator must not use the shared state.
    SharedStateIncluded,
    InvalidDesign(&'static str),
    /// The shared state lacks the `m` lagged treatments the window needs.
    MissingWindow { t: usize },
    ZeroWindowProbability { t: usize },
}

impl fmt::Display for EstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyTrajectory => f.write_str("empty trajectory"),
            Self::NonFinite { t } => write!(f, "non-finite score at t={t}"),
            Self::PropensityOutOfRange { t, value } => {
                write!(f, "propensity {value} at t={t} is outside (0, 1)")
            }
            Self::SharedStateIncluded => {
                f.write_str("naive estimator needs an outcome model without the shared state")
            }
            Self::InvalidDesign(r) => write!(f, "invalid design: {r}"),
            Self::MissingWindow { t } => write!(f, "treatment window unavailable at t={t}"),
            Self::ZeroWindowProbability { t } => {
                write!(f, "zero constant-window probability at t={t}")
            }
        }
    }
}

fn regime_m(regime: Regime) -> Option<usize> {
    match regime {
        Regime::GeometricErgodic => None,
        Regime::MDependent { m } => Some(m),
    }
}

fn collect(
    traj: &Trajectory,
    estimator: Estimator,
    mut score: impl FnMut(usize, &Observation) -> Result<f64, EstimateError>,
) -> Result<(f64, PhiSeries), EstimateError> {
    if traj.is_empty() {
        return Err(EstimateError::EmptyTrajectory);
    }
    let mut values = Vec::with_capacity(traj.len());
    let mut acc = KahanSum::new();
    for (i, o) in traj.obs.iter().enumerate() {
        let t = i + 1;
        let v = score(t, o)?;
        if !v.is_finite() {
            return Err(EstimateError::NonFinite { t });
        }
        acc.add(v);
        values.push(v);
    }
    let psi = acc.total() / values.len() as f64;
    Ok((psi, PhiSeries { values, estimator, regime: traj.regime, m: regime_m(traj.regime) }))
}

fn checked_propensity(m: f64, t: usize) -> Result<f64, EstimateError> {
    if m > 0.0 && m < 1.0 {
        Ok(m)
    } else if m.is_nan() {
        Err(EstimateError::NonFinite { t })
    } else {
        Err(EstimateError::PropensityOutOfRange { t, value: m })
    }
}

/// `d / m - (1 - d) / (1 - m)`.
#[inline]
fn ipw(d: u8, m: f64) -> f64 {
    if d == 1 {
        1.0 / m
    } else {
        -1.0 / (1.0 - m)
    }
}

fn phi_ade_at(o: &Observation, nuis: &NuisanceSet, t: usize) -> Result<f64, EstimateError> {
    let m = checked_propensity(nuis.propensity(&o.x), t)?;
    let plug_in = nuis.f.contrast(&o.x, &o.h, &o.h);
    let fitted = nuis.outcome(o.d, &o.x, &o.h);
    if !plug_in.is_finite() || !fitted.is_finite() {
        return Err(EstimateError::NonFinite { t });
    }
    Ok(plug_in + ipw(o.d, m) * (o.y - fitted))
}

/// Plug-in contrast plus inverse-propensity weighted residual for one step.
pub fn phi_ade(obs: &Observation, nuis: &NuisanceSet) -> Result<f64, EstimateError> {
    phi_ade_at(obs, nuis, 1)
}

pub fn psi_ade_dml(traj: &Trajectory, nuis: &NuisanceSet) -> Result<(f64, PhiSeries), EstimateError> {
    collect(traj, Estimator::Dml4ssi, |t, o| phi_ade_at(o, nuis, t))
}

/// Shared-state-as-covariates estimator: the ADE score with the observed
/// shared state and the single-unit propensity.
pub fn psi_ssac(traj: &Trajectory, nuis: &NuisanceSet) -> Result<(f64, PhiSeries), EstimateError> {
    collect(traj, Estimator::Ssac, |t, o| phi_ade_at(o, nuis, t))
}

/// Mean of `f(1, x, h) - f(0, x, h)` over observed states.
pub fn psi_plugin(traj: &Trajectory, nuis: &NuisanceSet) -> Result<(f64, PhiSeries), EstimateError> {
    collect(traj, Estimator::Plugin, |_, o| Ok(nuis.f.contrast(&o.x, &o.h, &o.h)))
}

/// Difference-in-means inverse-propensity estimator.
pub fn psi_ht_naive(
    traj: &Trajectory,
    propensity: &dyn PropensityModel,
) -> Result<(f64, PhiSeries), EstimateError> {
    collect(traj, Estimator::HtNaive, |t, o| {
        let m = checked_propensity(propensity.predict(&o.x), t)?;
        Ok(ipw(o.d, m) * o.y)
    })
}

/// ADE score with an outcome model fitted without the shared state.
pub fn psi_dml_naive(
    traj: &Trajectory,
    nuis_no_h: &NuisanceSet,
) -> Result<(f64, PhiSeries), EstimateError> {
    if nuis_no_h.includes_shared_state() {
        return Err(EstimateError::SharedStateIncluded);
    }
    collect(traj, Estimator::DmlNaive, |t, o| phi_ade_at(o, nuis_no_h, t))
}

/// Constant-window probabilities for `t = 1..=T`. They depend on `t` only
/// while the window can reach the initial partial block, i.e. for
/// `t < m + block_len`.
struct WindowTable {
    early: Vec<(f64, f64)>,
    steady: (f64, f64),
}

impl WindowTable {
    fn new(design: &SwitchbackDesign) -> Self {
        let stable = design.m + design.block_len;
        Self {
            early: (1..stable).map(|t| design.window_probs(t)).collect(),
            steady: design.window_probs(stable),
        }
    }

    fn get(&self, t: usize) -> (f64, f64) {
        self.early.get(t - 1).copied().unwrap_or(self.steady)
    }
}

/// Treatments `D_{t-m..t}` from the lag half of `h` and the current `d`.
fn window_state(o: &Observation, m: usize, t: usize) -> Result<Option<bool>, EstimateError> {
    if o.h.len() < m {
        return Err(EstimateError::MissingWindow { t });
    }
    let mut all_one = o.d == 1;
    let mut all_zero = o.d == 0;
    for &v in &o.h[..m] {
        if v == 1.0 {
            all_zero = false;
        } else if v == 0.0 {
            all_one = false;
        } else {
            return Err(EstimateError::MissingWindow { t });
        }
    }
    Ok(if all_one {
        Some(true)
    } else if all_zero {
        Some(false)
    } else {
        None
    })
}

/// `1{window = 1} / pi1 - 1{window = 0} / pi0`.
fn window_weight(
    o: &Observation,
    design: &SwitchbackDesign,
    table: &WindowTable,
    t: usize,
) -> Result<f64, EstimateError> {
    let Some(treated) = window_state(o, design.m, t)? else {
        return Ok(0.0);
    };
    let (ones, zeros) = table.get(t);
    let pi = if treated { ones } else { zeros };
    if !(pi > 0.0) {
        return Err(EstimateError::ZeroWindowProbability { t });
    }
    Ok(if treated { 1.0 / pi } else { -1.0 / pi })
}

fn counterfactual_states(h: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut h1 = h.to_vec();
    let mut h0 = h.to_vec();
    h1[..m].fill(1.0);
    h0[..m].fill(0.0);
    (h1, h0)
}

fn check_design(design: &SwitchbackDesign) -> Result<(), EstimateError> {
    design.check().map_err(EstimateError::InvalidDesign)
}

fn gate_score(
    o: &Observation,
    nuis: &NuisanceSet,
    design: &SwitchbackDesign,
    table: &WindowTable,
    t: usize,
) -> Result<f64, EstimateError> {
    let weight = window_weight(o, design, table, t)?;
    if o.h.len() < design.m {
        return Err(EstimateError::MissingWindow { t });
    }
    let (h1, h0) = counterfactual_states(&o.h, design.m);
    let plug_in = nuis.f.contrast(&o.x, &h1, &h0);
    if weight == 0.0 {
        return Ok(plug_in);
    }
    let fitted = nuis.outcome(o.d, &o.x, &o.h);
    if !fitted.is_finite() {
        return Err(EstimateError::NonFinite { t });
    }
    Ok(plug_in + weight * (o.y - fitted))
}

/// Switchback score at step `t` (1-based): plug-in contrast between the
/// all-treated and all-control shared states, plus the window-weighted residual.
pub fn phi_gate(
    traj: &Trajectory,
    t: usize,
    nuis: &NuisanceSet,
    design: &SwitchbackDesign,
) -> Result<f64, EstimateError> {
    check_design(design)?;
    if t == 0 || t > traj.len() {
        return Err(EstimateError::MissingWindow { t });
    }
    let table = WindowTable::new(design);
    gate_score(traj.at(t), nuis, design, &table, t)
}

pub fn psi_gate_dml(
    traj: &Trajectory,
    nuis: &NuisanceSet,
    design: &SwitchbackDesign,
) -> Result<(f64, PhiSeries), EstimateError> {
    check_design(design)?;
    let table = WindowTable::new(design);
    collect(traj, Estimator::Dml4ssi, |t, o| gate_score(o, nuis, design, &table, t))
}

/// Plug-in term of the switchback score alone.
pub fn psi_gate_plugin(
    traj: &Trajectory,
    nuis: &NuisanceSet,
    design: &SwitchbackDesign,
) -> Result<(f64, PhiSeries), EstimateError> {
    check_design(design)?;
    collect(traj, Estimator::Plugin, |t, o| {
        if o.h.len() < design.m {
            return Err(EstimateError::MissingWindow { t });
        }
        let (h1, h0) = counterfactual_states(&o.h, design.m);
        Ok(nuis.f.contrast(&o.x, &h1, &h0))
    })
}

/// Window-weighted outcome with exact design probabilities.
pub fn psi_sb_ht(
    traj: &Trajectory,
    design: &SwitchbackDesign,
) -> Result<(f64, PhiSeries), EstimateError> {
    check_design(design)?;
    let table = WindowTable::new(design);
    collect(traj, Estimator::SbHt, |t, o| Ok(window_weight(o, design, &table, t)? * o.y))
}
