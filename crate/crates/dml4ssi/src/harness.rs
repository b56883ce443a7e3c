//! Monte Carlo experiment runner.
//!
//! Replication `i` draws from four streams derived from the experiment root
//! `(base_seed, stream_root)` at indices `8 i + stage`:
//!
//! | stage | use |
//! |-------|-----|
//! | 0 | auxiliary trajectory |
//! | 1 | forest fits (`derive(0)` outcome, `derive(1)` propensity, `derive(2)` outcome without shared state) |
//! | 2 | inference trajectory |
//! | 3 | perturbation draws |
//!
//! Stages never share draws, so adding an estimator or changing `aux_T`
//! leaves every other quantity unchanged.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use dml4ssi_core::dgp::DgpConfig;
use dml4ssi_core::estimators::{self, EstimateError};
use dml4ssi_core::math::KahanSum;
use dml4ssi_core::nuisance::{
    fit_outcome_model, fit_propensity_model, oracle_nuisances_with, ForestParams, NuisanceSet,
    OutcomeModel, PropensityModel,
};
use dml4ssi_core::variance::{self, VarianceMethod, DEFAULT_THETA};
use dml4ssi_core::{EstimateReport, Estimator, PhiSeries, RngStream, Trajectory};
use rayon::prelude::*;

pub const STAGE_AUX: u64 = 0;
pub const STAGE_FIT: u64 = 1;
pub const STAGE_INFERENCE: u64 = 2;
pub const STAGE_PERTURBATION: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dgp: DgpConfig,
    pub t_len: usize,
    /// Auxiliary sample size; `None` means `t_len`.
    pub aux_t_len: Option<usize>,
    pub estimators: Vec<Estimator>,
    /// Overrides of [`default_variance`].
    pub variance: BTreeMap<Estimator, VarianceMethod>,
    pub alpha: f64,
    pub replications: usize,
    pub base_seed: u64,
    /// Stream id of the experiment root; sweeps give each grid point its own.
    pub stream_root: u64,
    pub jobs: usize,
    /// Use the simulator's true nuisances instead of fitted forests.
    pub oracle_nuisances: bool,
    pub forest: ForestParams,
    pub propensity_clip: Option<f64>,
}

impl Scenario {
    pub fn new(dgp: DgpConfig, t_len: usize, replications: usize) -> Self {
        let estimators = Self::all_estimators(&dgp);
        Self {
            dgp,
            t_len,
            aux_t_len: None,
            estimators,
            variance: BTreeMap::new(),
            alpha: 0.05,
            replications,
            base_seed: 0,
            stream_root: 0,
            jobs: 1,
            oracle_nuisances: false,
            forest: ForestParams::default(),
            propensity_clip: None,
        }
    }

    /// Every estimator that applies to the simulator.
    pub fn all_estimators(dgp: &DgpConfig) -> Vec<Estimator> {
        Estimator::ALL
            .into_iter()
            .filter(|e| *e != Estimator::SbHt || matches!(dgp, DgpConfig::Switchback(_)))
            .collect()
    }

    pub fn aux_len(&self) -> usize {
        self.aux_t_len.unwrap_or(self.t_len)
    }

    pub fn variance_for(&self, e: Estimator) -> VarianceMethod {
        self.variance.get(&e).copied().unwrap_or_else(|| default_variance(&self.dgp, e))
    }

    pub fn clip(&self) -> f64 {
        self.propensity_clip.unwrap_or(match &self.dgp {
            DgpConfig::Ade(c) => c.zeta,
            DgpConfig::Switchback(_) => 0.1,
        })
    }

    pub fn root(&self) -> RngStream {
        RngStream::new(self.base_seed, self.stream_root)
    }

    pub fn stage_stream(&self, index: u64, stage: u64) -> RngStream {
        self.root().derive(index * 8 + stage)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.dgp.validate().map_err(|e| e.to_string())?;
        if self.t_len == 0 || self.aux_len() == 0 {
            return Err("scenario.T and scenario.aux_T must be positive".into());
        }
        if self.replications == 0 {
            return Err("scenario.R must be positive".into());
        }
        if self.jobs == 0 {
            return Err("scenario.jobs must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err("scenario.alpha must lie in (0, 1)".into());
        }
        let clip = self.clip();
        if !(clip > 0.0 && clip < 0.5) {
            return Err("scenario.propensity_clip must lie in (0, 0.5)".into());
        }
        let mut seen = Vec::new();
        for &e in &self.estimators {
            if seen.contains(&e) {
                return Err(format!("estimator {e} listed twice"));
            }
            seen.push(e);
            if e == Estimator::SbHt && !matches!(self.dgp, DgpConfig::Switchback(_)) {
                return Err("sb-ht needs the switchback model".into());
            }
        }
        for (&e, method) in &self.variance {
            method.validate().map_err(|err| format!("variance for {e}: {err}"))?;
            if *method == VarianceMethod::HtPlugin && e != Estimator::HtNaive {
                return Err(format!("variance for {e}: ht-plugin applies to ht-naive only"));
            }
        }
        Ok(())
    }
}

/// Default variance pairing per estimator.
pub fn default_variance(dgp: &DgpConfig, e: Estimator) -> VarianceMethod {
    match (e, dgp) {
        (Estimator::HtNaive, _) => VarianceMethod::HtPlugin,
        (Estimator::Ssac | Estimator::DmlNaive, _) => VarianceMethod::IidPlugin,
        (_, DgpConfig::Ade(_)) => VarianceMethod::BatchMeans { theta: DEFAULT_THETA },
        (_, DgpConfig::Switchback(c)) => VarianceMethod::MDependent { m: c.design.m },
    }
}

/// One estimator's result within a replication.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutcome {
    pub estimator: Estimator,
    pub variance: VarianceMethod,
    pub report: Result<EstimateReport, String>,
}

impl EstimatorOutcome {
    pub fn covered(&self, psi_star: f64) -> bool {
        self.report.as_ref().is_ok_and(|r| r.covers(psi_star))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub index: usize,
    pub psi_star: f64,
    pub outcomes: Vec<EstimatorOutcome>,
}

/// Fitted (or oracle) nuisances a set of estimators needs.
#[derive(Clone, Default)]
pub struct Nuisances {
    pub full: Option<Result<NuisanceSet, String>>,
    pub no_state: Option<Result<NuisanceSet, String>>,
    pub propensity: Option<Result<Arc<dyn PropensityModel>, String>>,
}

fn needs_full(e: Estimator) -> bool {
    matches!(e, Estimator::Dml4ssi | Estimator::Plugin | Estimator::Ssac)
}

fn needs_propensity(dgp: &DgpConfig, e: Estimator, method: VarianceMethod) -> bool {
    match e {
        Estimator::Dml4ssi => matches!(dgp, DgpConfig::Ade(_)),
        Estimator::HtNaive | Estimator::DmlNaive | Estimator::Ssac => true,
        Estimator::Plugin | Estimator::SbHt => method == VarianceMethod::HtPlugin,
    }
}

/// Fits the nuisances required by `estimators` on `aux`, or returns the
/// oracle versions when `aux` is `None`.
pub fn fit_nuisances(
    scenario: &Scenario,
    aux: Option<&Trajectory>,
    fit_stream: RngStream,
) -> Nuisances {
    let dgp = &scenario.dgp;
    let want_full = scenario.estimators.iter().any(|&e| needs_full(e));
    let want_no_state = scenario.estimators.contains(&Estimator::DmlNaive);
    let want_m =
        scenario.estimators.iter().any(|&e| needs_propensity(dgp, e, scenario.variance_for(e)));
    let clip = scenario.clip();

    let Some(aux) = aux else {
        let full = oracle_nuisances_with(dgp, true);
        let no_state = oracle_nuisances_with(dgp, false);
        return Nuisances {
            propensity: want_m.then(|| Ok(Arc::clone(&full.m))),
            full: want_full.then(|| Ok(full)),
            no_state: want_no_state.then(|| Ok(no_state)),
        };
    };

    let params = |k: u64| scenario.forest.clone().with_seed(fit_stream.derive(k));
    let propensity: Option<Result<Arc<dyn PropensityModel>, String>> = want_m.then(|| {
        fit_propensity_model(aux, clip, &params(1))
            .map(Arc::from)
            .map_err(|e| format!("propensity fit: {e}"))
    });
    let with_outcome = |include_h: bool, k: u64| -> Result<NuisanceSet, String> {
        let f: Arc<dyn OutcomeModel> = fit_outcome_model(aux, include_h, &params(k))
            .map(Arc::from)
            .map_err(|e| format!("outcome fit: {e}"))?;
        let m: Arc<dyn PropensityModel> = match &propensity {
            Some(Ok(m)) => Arc::clone(m),
            Some(Err(e)) => return Err(e.clone()),
            // Not used by the requested estimators.
            None => Arc::new(dml4ssi_core::nuisance::ConstantPropensity(0.5)),
        };
        NuisanceSet::new(f, m, clip).map_err(|e| e.to_string())
    };
    Nuisances {
        full: want_full.then(|| with_outcome(true, 0)),
        no_state: want_no_state.then(|| with_outcome(false, 2)),
        propensity,
    }
}

fn take<'a, T>(slot: &'a Option<Result<T, String>>) -> Result<&'a T, String> {
    match slot {
        Some(Ok(v)) => Ok(v),
        Some(Err(e)) => Err(e.clone()),
        None => Err("nuisance not fitted".into()),
    }
}

fn point_estimate(
    dgp: &DgpConfig,
    e: Estimator,
    traj: &Trajectory,
    n: &Nuisances,
) -> Result<(f64, PhiSeries), String> {
    let est = |r: Result<(f64, PhiSeries), EstimateError>| r.map_err(|err| err.to_string());
    match (e, dgp) {
        (Estimator::Dml4ssi, DgpConfig::Ade(_)) => est(estimators::psi_ade_dml(traj, take(&n.full)?)),
        (Estimator::Dml4ssi, DgpConfig::Switchback(c)) => {
            est(estimators::psi_gate_dml(traj, take(&n.full)?, &c.design))
        }
        (Estimator::Plugin, DgpConfig::Ade(_)) => est(estimators::psi_plugin(traj, take(&n.full)?)),
        (Estimator::Plugin, DgpConfig::Switchback(c)) => {
            est(estimators::psi_gate_plugin(traj, take(&n.full)?, &c.design))
        }
        (Estimator::HtNaive, _) => {
            est(estimators::psi_ht_naive(traj, take(&n.propensity)?.as_ref()))
        }
        (Estimator::DmlNaive, _) => est(estimators::psi_dml_naive(traj, take(&n.no_state)?)),
        (Estimator::Ssac, _) => est(estimators::psi_ssac(traj, take(&n.full)?)),
        (Estimator::SbHt, DgpConfig::Switchback(c)) => est(estimators::psi_sb_ht(traj, &c.design)),
        (Estimator::SbHt, DgpConfig::Ade(_)) => Err("sb-ht needs the switchback model".into()),
    }
}

/// Raw variance estimate for one score series.
pub fn variance_estimate(
    method: VarianceMethod,
    phis: &PhiSeries,
    traj: &Trajectory,
    n: &Nuisances,
) -> Result<f64, String> {
    let v = match method {
        VarianceMethod::BatchMeans { theta } => variance::var_batch_means(&phis.values, theta),
        VarianceMethod::MDependent { m } => variance::var_mdep(&phis.values, m).map(|v| v.value),
        VarianceMethod::IidPlugin => variance::var_iid_plugin(&phis.values),
        VarianceMethod::HtPlugin => variance::var_ht(traj, take(&n.propensity)?.as_ref()),
    };
    v.map_err(|e| e.to_string())
}

/// Point estimate, variance and interval for every requested estimator.
pub fn estimate_all(scenario: &Scenario, traj: &Trajectory, n: &Nuisances) -> Vec<EstimatorOutcome> {
    scenario
        .estimators
        .iter()
        .map(|&e| {
            let method = scenario.variance_for(e);
            let report = point_estimate(&scenario.dgp, e, traj, n).and_then(|(psi, phis)| {
                let s2 = variance_estimate(method, &phis, traj, n)?;
                EstimateReport::new(e, psi, s2, traj.len(), scenario.alpha).map_err(|e| e.to_string())
            });
            EstimatorOutcome { estimator: e, variance: method, report }
        })
        .collect()
}

/// Target of the scenario at its horizon.
pub fn psi_star(scenario: &Scenario) -> f64 {
    scenario.dgp.truth(scenario.t_len).psi_star
}

pub fn run_replication(scenario: &Scenario, index: usize) -> ReplicationResult {
    let i = index as u64;
    let psi_star = psi_star(scenario);
    let fail_all = |msg: String| ReplicationResult {
        index,
        psi_star,
        outcomes: scenario
            .estimators
            .iter()
            .map(|&e| EstimatorOutcome {
                estimator: e,
                variance: scenario.variance_for(e),
                report: Err(msg.clone()),
            })
            .collect(),
    };
    let aux = if scenario.oracle_nuisances {
        None
    } else {
        match scenario.dgp.simulate(scenario.aux_len(), &scenario.stage_stream(i, STAGE_AUX)) {
            Ok(t) => Some(t),
            Err(e) => return fail_all(format!("auxiliary simulation: {e}")),
        }
    };
    let nuisances = fit_nuisances(scenario, aux.as_ref(), scenario.stage_stream(i, STAGE_FIT));
    let traj = match scenario.dgp.simulate(scenario.t_len, &scenario.stage_stream(i, STAGE_INFERENCE)) {
        Ok(t) => t,
        Err(e) => return fail_all(format!("simulation: {e}")),
    };
    ReplicationResult { index, psi_star, outcomes: estimate_all(scenario, &traj, &nuisances) }
}

/// Per-estimator aggregate over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub t_len: usize,
    /// Replications in which the estimator succeeded.
    pub replications: usize,
    pub mean_bias: f64,
    /// Sample standard deviation of the estimates.
    pub bias_sd: f64,
    pub mc_se: f64,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_ci_width: f64,
}

/// One row of `replications.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub replication: usize,
    pub estimator: Estimator,
    pub psi_hat: f64,
    pub sigma2_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub covered: bool,
    pub psi_star: f64,
    pub degenerate: bool,
}

pub fn replication_rows(results: &[ReplicationResult]) -> Vec<ReplicationRow> {
    results
        .iter()
        .flat_map(|r| {
            r.outcomes.iter().filter_map(move |o| {
                let rep = o.report.as_ref().ok()?;
                Some(ReplicationRow {
                    replication: r.index,
                    estimator: o.estimator,
                    psi_hat: rep.psi_hat,
                    sigma2_hat: rep.sigma2_hat,
                    ci_low: rep.ci_low,
                    ci_high: rep.ci_high,
                    covered: rep.covers(r.psi_star),
                    psi_star: r.psi_star,
                    degenerate: rep.degenerate,
                })
            })
        })
        .collect()
}

fn kahan_mean(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut acc = KahanSum::new();
    let mut n = 0;
    for v in values {
        acc.add(v);
        n += 1;
    }
    (acc.total() / n as f64, n)
}

/// Aggregates rows per estimator, in the order given.
pub fn summarize_rows(rows: &[ReplicationRow], estimators: &[Estimator], t_len: usize) -> Vec<EstimatorSummary> {
    estimators
        .iter()
        .map(|&e| {
            let mine: Vec<&ReplicationRow> = rows.iter().filter(|r| r.estimator == e).collect();
            let n = mine.len();
            if n == 0 {
                return EstimatorSummary {
                    estimator: e,
                    t_len,
                    replications: 0,
                    mean_bias: f64::NAN,
                    bias_sd: f64::NAN,
                    mc_se: f64::NAN,
                    coverage: f64::NAN,
                    coverage_se: f64::NAN,
                    mean_ci_width: f64::NAN,
                };
            }
            let (mean_bias, _) = kahan_mean(mine.iter().map(|r| r.psi_hat - r.psi_star));
            let (mean_psi, _) = kahan_mean(mine.iter().map(|r| r.psi_hat));
            let bias_sd = if n > 1 {
                let mut acc = KahanSum::new();
                for r in &mine {
                    let d = r.psi_hat - mean_psi;
                    acc.add(d * d);
                }
                (acc.total() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let (coverage, _) = kahan_mean(mine.iter().map(|r| f64::from(u8::from(r.covered))));
            let (mean_ci_width, _) = kahan_mean(mine.iter().map(|r| r.ci_high - r.ci_low));
            EstimatorSummary {
                estimator: e,
                t_len,
                replications: n,
                mean_bias,
                bias_sd,
                mc_se: bias_sd / (n as f64).sqrt(),
                coverage,
                coverage_se: (coverage * (1.0 - coverage) / n as f64).sqrt(),
                mean_ci_width,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub psi_star: f64,
    pub replications: Vec<ReplicationResult>,
    pub summaries: Vec<EstimatorSummary>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn summary(&self, e: Estimator) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == e)
    }

    /// Estimates of one estimator, in replication order.
    pub fn estimates(&self, e: Estimator) -> Vec<f64> {
        replication_rows(&self.replications)
            .into_iter()
            .filter(|r| r.estimator == e)
            .map(|r| r.psi_hat)
            .collect()
    }

    /// Distinct error messages per estimator, with counts.
    pub fn failures(&self) -> BTreeMap<Estimator, BTreeMap<String, usize>> {
        let mut out: BTreeMap<Estimator, BTreeMap<String, usize>> = BTreeMap::new();
        for r in &self.replications {
            for o in &r.outcomes {
                if let Err(msg) = &o.report {
                    *out.entry(o.estimator).or_default().entry(msg.clone()).or_default() += 1;
                }
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("every replication failed; first error: {0}")]
    AllFailed(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Runs `R` replications on up to `jobs` threads and aggregates them in index order.
pub fn run_experiment(scenario: &Scenario) -> Result<ExperimentReport, ExperimentError> {
    scenario.validate().map_err(ExperimentError::Invalid)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(scenario.jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let replications: Vec<ReplicationResult> = pool.install(|| {
        (0..scenario.replications).into_par_iter().map(|i| run_replication(scenario, i)).collect()
    });
    let any_ok = replications.iter().any(|r| r.outcomes.iter().any(|o| o.report.is_ok()));
    if !any_ok && !scenario.estimators.is_empty() {
        let first = replications
            .iter()
            .flat_map(|r| r.outcomes.iter())
            .find_map(|o| o.report.as_ref().err().cloned())
            .unwrap_or_default();
        return Err(ExperimentError::AllFailed(first));
    }
    let summaries = summarize_rows(&replication_rows(&replications), &scenario.estimators, scenario.t_len);
    Ok(ExperimentReport {
        scenario: scenario.clone(),
        psi_star: psi_star(scenario),
        replications,
        summaries,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// One experiment per horizon; grid point `k` uses stream root `1 + k`.
pub fn coverage_sweep(
    scenario: &Scenario,
    t_grid: &[usize],
) -> Result<Vec<ExperimentReport>, ExperimentError> {
    if t_grid.is_empty() {
        return Err(ExperimentError::Invalid("empty T grid".into()));
    }
    t_grid
        .iter()
        .enumerate()
        .map(|(k, &t_len)| {
            let s = Scenario { t_len, stream_root: 1 + k as u64, ..scenario.clone() };
            run_experiment(&s)
        })
        .collect()
}

/// `n` horizons evenly spaced on a log scale between `lo` and `hi`, rounded.
pub fn log_grid(lo: usize, hi: usize, n: usize) -> Vec<usize> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut grid: Vec<usize> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp().round() as usize)
        .collect();
    grid.dedup();
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use dml4ssi_core::dgp::{AdeDgpConfig, SwitchbackDgpConfig};

    fn zero_noise_ade() -> DgpConfig {
        DgpConfig::Ade(AdeDgpConfig { y_noise_sd: 0.0, h_noise_sd: 0.0, ..Default::default() })
    }

    #[test]
    fn oracle_zero_noise_is_exact() {
        let mut s = Scenario::new(zero_noise_ade(), 200, 1);
        s.estimators = vec![Estimator::Dml4ssi];
        s.oracle_nuisances = true;
        let r = run_replication(&s, 0);
        let rep = r.outcomes[0].report.as_ref().unwrap();
        assert_eq!(rep.psi_hat, 4.0);
        assert!(r.outcomes[0].covered(4.0));
    }

    #[test]
    fn replication_is_deterministic() {
        let mut s = Scenario::new(DgpConfig::Ade(AdeDgpConfig::default()), 100, 1);
        s.estimators = vec![Estimator::Dml4ssi];
        s.forest.n_trees = 5;
        assert_eq!(run_replication(&s, 3), run_replication(&s, 3));
    }

    #[test]
    fn switchback_reports_all_six() {
        let mut s = Scenario::new(DgpConfig::Switchback(SwitchbackDgpConfig::default()), 80, 1);
        s.forest.n_trees = 5;
        let r = run_replication(&s, 0);
        assert_eq!(r.outcomes.len(), 6);
        assert!(r.outcomes.iter().all(|o| o.report.is_ok()), "{:?}", r.outcomes);
    }

    #[test]
    fn single_replication_summary() {
        let mut s = Scenario::new(zero_noise_ade(), 50, 1);
        s.oracle_nuisances = true;
        s.estimators = vec![Estimator::Dml4ssi, Estimator::Plugin];
        let rep = run_experiment(&s).unwrap();
        let sum = rep.summary(Estimator::Dml4ssi).unwrap();
        assert_eq!(sum.replications, 1);
        assert_eq!((sum.mean_bias, sum.bias_sd, sum.coverage, sum.coverage_se), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn defaults_pair_variances() {
        let ade = DgpConfig::Ade(AdeDgpConfig::default());
        let sb = DgpConfig::Switchback(SwitchbackDgpConfig::default());
        assert_eq!(default_variance(&ade, Estimator::Dml4ssi), VarianceMethod::BatchMeans { theta: DEFAULT_THETA });
        assert_eq!(default_variance(&sb, Estimator::SbHt), VarianceMethod::MDependent { m: 5 });
        assert_eq!(default_variance(&sb, Estimator::Ssac), VarianceMethod::IidPlugin);
        assert_eq!(default_variance(&ade, Estimator::HtNaive), VarianceMethod::HtPlugin);
    }

    #[test]
    fn grid_is_log_spaced() {
        assert_eq!(log_grid(100, 10_000, 3), vec![100, 1000, 10_000]);
        assert_eq!(log_grid(100, 10_000, 10).len(), 10);
    }
}
