//! TOML configuration.
//!
//! ```toml
//! [dgp]
//! kind = "ade"              # or "switchback"
//! [dgp.ade]                 # optional overrides of the model defaults
//! zeta = 0.1
//!
//! [scenario]
//! T = 1000
//! aux_T = 1000              # defaults to T
//! R = 300
//! estimators = ["dml4ssi", "plugin"]
//! alpha = 0.05
//! base_seed = 1
//! jobs = 1
//! oracle_nuisances = false
//! T_grid = [100, 1000]      # turns `experiment` into a sweep
//! [scenario.variance]
//! dml4ssi = { kind = "batch-means", theta = 0.6666666666666666 }
//!
//! [forest]
//! n_trees = 200
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use dml4ssi_core::dgp::{AdeDgpConfig, DgpConfig, SwitchbackDgpConfig};
use dml4ssi_core::nuisance::ForestParams;
use dml4ssi_core::variance::VarianceMethod;
use dml4ssi_core::Estimator;
use serde::{Deserialize, Serialize};

use crate::harness::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpKind {
    Ade,
    Switchback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSection {
    pub kind: DgpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ade: Option<AdeDgpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switchback: Option<SwitchbackDgpConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(rename = "T")]
    pub t_len: usize,
    #[serde(rename = "aux_T", skip_serializing_if = "Option::is_none")]
    pub aux_t_len: Option<usize>,
    #[serde(rename = "R")]
    pub replications: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<Estimator>>,
    pub alpha: f64,
    pub base_seed: u64,
    pub jobs: usize,
    pub oracle_nuisances: bool,
    #[serde(rename = "T_grid", skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<usize>>,
    pub variance: BTreeMap<Estimator, VarianceMethod>,
    /// Clipping bound for fitted propensities; defaults to the model's `zeta`
    /// for the AR(1) model and 0.1 for the switchback model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propensity_clip: Option<f64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            t_len: 1000,
            aux_t_len: None,
            replications: 300,
            estimators: None,
            alpha: 0.05,
            base_seed: 0,
            jobs: 1,
            oracle_nuisances: false,
            t_grid: None,
            variance: BTreeMap::new(),
            propensity_clip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dgp: DgpSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub forest: ForestParams,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        toml::from_str(text).map_err(|e| ConfigFileError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigFileError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigFileError::Parse(m) => ConfigFileError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn dgp_config(&self) -> Result<DgpConfig, ConfigFileError> {
        let dgp = match self.dgp.kind {
            DgpKind::Ade => {
                if self.dgp.switchback.is_some() {
                    return Err(ConfigFileError::Invalid(
                        "dgp.switchback given but dgp.kind is \"ade\"".into(),
                    ));
                }
                DgpConfig::Ade(self.dgp.ade.clone().unwrap_or_default())
            }
            DgpKind::Switchback => {
                if self.dgp.ade.is_some() {
                    return Err(ConfigFileError::Invalid(
                        "dgp.ade given but dgp.kind is \"switchback\"".into(),
                    ));
                }
                DgpConfig::Switchback(self.dgp.switchback.clone().unwrap_or_default())
            }
        };
        dgp.validate().map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        Ok(dgp)
    }

    /// Validated scenario for a single experiment.
    pub fn scenario(&self) -> Result<Scenario, ConfigFileError> {
        let dgp = self.dgp_config()?;
        self.forest.validate().map_err(|e| ConfigFileError::Invalid(format!("forest: {e}")))?;
        let s = &self.scenario;
        let estimators = s.estimators.clone().unwrap_or_else(|| Scenario::all_estimators(&dgp));
        let scenario = Scenario {
            dgp,
            t_len: s.t_len,
            aux_t_len: s.aux_t_len,
            estimators,
            variance: s.variance.clone(),
            alpha: s.alpha,
            replications: s.replications,
            base_seed: s.base_seed,
            stream_root: 0,
            jobs: s.jobs,
            oracle_nuisances: s.oracle_nuisances,
            forest: self.forest.clone(),
            propensity_clip: s.propensity_clip,
        };
        scenario.validate().map_err(ConfigFileError::Invalid)?;
        if let Some(grid) = &s.t_grid {
            if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
                return Err(ConfigFileError::Invalid(
                    "scenario.T_grid must be a nonempty increasing list of positive integers".into(),
                ));
            }
        }
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = FileConfig::parse("[dgp]\nkind = \"ade\"\n").unwrap();
        let s = c.scenario().unwrap();
        assert_eq!(s.t_len, 1000);
        assert_eq!(s.dgp, DgpConfig::Ade(AdeDgpConfig::default()));
        assert_eq!(s.forest, ForestParams::default());
        assert_eq!(s.estimators.len(), 5);
    }

    #[test]
    fn nested_sections() {
        let text = r#"
[dgp]
kind = "switchback"
[dgp.switchback]
p_X = 2
[dgp.switchback.design]
m = 2
block_len = 4
treat_prob = 0.5

[scenario]
T = 50
estimators = ["dml4ssi", "sb-ht"]
[scenario.variance]
sb-ht = { kind = "m-dependent", m = 3 }
dml4ssi = { kind = "batch-means", theta = 0.6 }

[forest]
n_trees = 10
max_depth = 4
"#;
        let s = FileConfig::parse(text).unwrap().scenario().unwrap();
        assert_eq!(s.estimators, vec![Estimator::Dml4ssi, Estimator::SbHt]);
        assert_eq!(s.variance[&Estimator::SbHt], VarianceMethod::MDependent { m: 3 });
        assert_eq!(s.forest.max_depth, Some(4));
        let DgpConfig::Switchback(sb) = &s.dgp else { panic!() };
        assert_eq!((sb.p_x, sb.design.block_len), (2, 4));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            FileConfig::parse("[dgp]\nkind = \"ade\"\n[scenario]\nTT = 3\n"),
            Err(ConfigFileError::Parse(_))
        ));
        let bad = FileConfig::parse("[dgp]\nkind = \"ade\"\n[dgp.ade]\nzeta = 0.6\n").unwrap();
        let err = bad.scenario().unwrap_err().to_string();
        assert!(err.contains("zeta"), "{err}");
        let sb = FileConfig::parse("[dgp]\nkind = \"ade\"\n[scenario]\nestimators = [\"sb-ht\"]\n")
            .unwrap();
        assert!(sb.scenario().is_err());
    }
}
