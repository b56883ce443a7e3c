//! Long-run variance estimators for score series and normal intervals.

use core::fmt;

use crate::math::{self, KahanSum};
use crate::normal;
use crate::nuisance::PropensityModel;
use crate::types::Trajectory;

/// Default batch-size exponent.
pub const DEFAULT_THETA: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields))]
pub enum VarianceMethod {
    BatchMeans { theta: f64 },
    MDependent { m: usize },
    IidPlugin,
    HtPlugin,
}

impl VarianceMethod {
    pub fn validate(&self) -> Result<(), VarianceError> {
        match *self {
            Self::BatchMeans { theta } if !(theta > 0.0 && theta < 1.0) => {
                Err(VarianceError::InvalidTheta(theta))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BatchMeans { theta } => write!(f, "batch-means(theta={theta})"),
            Self::MDependent { m } => write!(f, "m-dependent(m={m})"),
            Self::IidPlugin => f.write_str("iid-plugin"),
            Self::HtPlugin => f.write_str("ht-plugin"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VarianceError {
    /// The series is too short for the requested estimator.
    TooShort { t_len: usize, needed: usize },
    InvalidTheta(f64),
    InvalidAlpha(f64),
    /// Interval construction needs a finite, nonnegative variance.
    InvalidVariance(f64),
    EmptyGroup { d: u8 },
    PropensityOutOfRange { t: usize, value: f64 },
}

impl fmt::Display for VarianceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooShort { t_len, needed } => {
                write!(f, "series of length {t_len} is too short (need {needed})")
            }
            Self::InvalidTheta(v) => write!(f, "theta must lie in (0, 1), got {v}"),
            Self::InvalidAlpha(v) => write!(f, "alpha must lie in (0, 1), got {v}"),
            Self::InvalidVariance(v) => write!(f, "variance must be finite and nonnegative, got {v}"),
            Self::EmptyGroup { d } => write!(f, "no units with d={d}"),
            Self::PropensityOutOfRange { t, value } => {
                write!(f, "propensity {value} at t={t} is outside (0, 1)")
            }
        }
    }
}

/// Raw m-dependent estimate; `degenerate` is set when it is negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MDepVariance {
    pub value: f64,
    pub degenerate: bool,
}

/// `(T1, T2)`: number of blocks and block length `floor(T^theta)`.
pub fn batch_layout(t_len: usize, theta: f64) -> Result<(usize, usize), VarianceError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(VarianceError::InvalidTheta(theta));
    }
    let raw = math::powf(t_len as f64, theta);
    // Guard against exact powers landing just below an integer.
    let near = libm::round(raw);
    let t2 = if (raw - near).abs() <= 1e-9 * near.max(1.0) { near } else { math::floor(raw) };
    let t2 = (t2 as usize).max(1);
    let t1 = t_len / t2;
    if t1 < 2 {
        return Err(VarianceError::TooShort { t_len, needed: 2 * t2 });
    }
    Ok((t1, t2))
}

/// Nonoverlapping batch means with block length `floor(T^theta)`. Block sums
/// are centered at `T2` times the full-sample mean; trailing steps beyond the
/// last full block enter the mean only.
pub fn var_batch_means(phis: &[f64], theta: f64) -> Result<f64, VarianceError> {
    let (t1, t2) = batch_layout(phis.len(), theta)?;
    let mean = math::mean(phis);
    let mut acc = KahanSum::new();
    for block in phis.chunks_exact(t2).take(t1) {
        let mut s = KahanSum::new();
        s.extend(block.iter().map(|v| v - mean));
        let dev = s.total();
        acc.add(dev * dev);
    }
    Ok(acc.total() / (t2 as f64 * (t1 - 1) as f64))
}

/// Sample variance plus twice the first `m` lag autocovariances, each lag
/// sum truncated at the start of the series.
pub fn var_mdep(phis: &[f64], m: usize) -> Result<MDepVariance, VarianceError> {
    let n = phis.len();
    if n < m + 1 || n == 0 {
        return Err(VarianceError::TooShort { t_len: n, needed: m + 1 });
    }
    let mean = math::mean(phis);
    let mut acc = KahanSum::new();
    for (t, &v) in phis.iter().enumerate() {
        let c = v - mean;
        acc.add(c * c);
        for i in 1..=m.min(t) {
            acc.add(2.0 * c * (phis[t - i] - mean));
        }
    }
    let value = acc.total() / n as f64;
    Ok(MDepVariance { value, degenerate: value < 0.0 })
}

/// `(1/T) sum (phi_t - mean)^2`.
pub fn var_iid_plugin(phis: &[f64]) -> Result<f64, VarianceError> {
    var_mdep(phis, 0).map(|v| v.value)
}

/// Difference-in-means variance with each unit centered at the opposite
/// group's mean outcome.
pub fn var_ht(traj: &Trajectory, propensity: &dyn PropensityModel) -> Result<f64, VarianceError> {
    let mut sums = [KahanSum::new(), KahanSum::new()];
    let mut counts = [0usize; 2];
    for o in &traj.obs {
        sums[o.d as usize].add(o.y);
        counts[o.d as usize] += 1;
    }
    for d in 0..2u8 {
        if counts[d as usize] == 0 {
            return Err(VarianceError::EmptyGroup { d });
        }
    }
    let y0 = sums[0].total() / counts[0] as f64;
    let y1 = sums[1].total() / counts[1] as f64;
    let mut acc = KahanSum::new();
    for (i, o) in traj.obs.iter().enumerate() {
        let m = propensity.predict(&o.x);
        if !(m > 0.0 && m < 1.0) {
            return Err(VarianceError::PropensityOutOfRange { t: i + 1, value: m });
        }
        let term = if o.d == 1 { (o.y - y0) / m } else { -(o.y - y1) / (1.0 - m) };
        acc.add(term * term);
    }
    Ok(acc.total() / traj.len() as f64)
}

/// `psi_hat ± z_{1 - alpha/2} sqrt(sigma2 / T)`.
pub fn confidence_interval(
    psi_hat: f64,
    sigma2: f64,
    t_len: usize,
    alpha: f64,
) -> Result<(f64, f64), VarianceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(VarianceError::InvalidAlpha(alpha));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(VarianceError::InvalidVariance(sigma2));
    }
    if t_len == 0 {
        return Err(VarianceError::TooShort { t_len, needed: 1 });
    }
    let half = normal::two_sided_critical(alpha) * math::sqrt(sigma2 / t_len as f64);
    Ok((psi_hat - half, psi_hat + half))
}
