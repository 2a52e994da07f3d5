//! Experiment configuration read from a sectioned TOML file.
//!
//! ```toml
//! [model]
//! layers = 12
//! hidden = 64
//!
//! [train]
//! epochs = 300
//! batch_size = "auto"
//!
//! [guidance]
//! tau = 1.0
//! steps = 30
//! candidates = 64
//!
//! [ps]
//! k0 = 0.3
//! k1 = 0.06
//! delta = 0.3
//!
//! [backend]
//! solver = "bnb"
//! time_limit = 60.0
//! ```
//!
//! Every section and key is optional; missing values take their defaults.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::backend::{BranchAndBound, BruteForce, ExternalSolver, MilpBackend, EXTERNAL_SOLVER_ENV};
use crate::downstream::{ApolloConfig, NdConfig, PmvbConfig, PsConfig, StrategyConfig};
use crate::error::{FmipError, Result};
use crate::flow::{Schedule, ScheduleKind};
use crate::guidance::GuidanceConfig;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// The `[guidance]` section: guidance strength plus the sampling loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub enabled: bool,
    pub gamma: f64,
    pub rho: f64,
    pub tau: f64,
    pub n_samples: usize,
    pub n_iter: usize,
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub candidates: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let g = GuidanceConfig::default();
        Self {
            enabled: g.enabled,
            gamma: g.gamma,
            rho: g.rho,
            tau: g.tau,
            n_samples: g.n_samples,
            n_iter: g.n_iter,
            steps: 30,
            schedule: ScheduleKind::Cosine,
            candidates: 64,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn guidance(&self) -> GuidanceConfig {
        GuidanceConfig {
            gamma: self.gamma,
            rho: self.rho,
            tau: self.tau,
            n_samples: self.n_samples,
            n_iter: self.n_iter,
            enabled: self.enabled,
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.schedule, self.steps)
    }

    pub fn validate(&self) -> Result<()> {
        self.guidance().validate()?;
        self.schedule()?;
        if self.candidates == 0 {
            return Err(FmipError::Config("guidance.candidates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Bnb,
    Brute,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub solver: SolverKind,
    /// Seconds per solve call.
    pub time_limit: f64,
    pub gap_tol: f64,
    /// Command template for the external solver; falls back to the
    /// `FMIP_EXTERNAL_SOLVER` environment variable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Bnb,
            time_limit: 60.0,
            gap_tol: 1e-6,
            command: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit > 0.0) || !(self.gap_tol >= 0.0) {
            return Err(FmipError::Config(format!("invalid backend config {self:?}")));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn MilpBackend>> {
        self.validate()?;
        Ok(match self.solver {
            SolverKind::Bnb => Box::new(BranchAndBound { gap_tol: self.gap_tol }),
            SolverKind::Brute => Box::new(BruteForce),
            SolverKind::External => match &self.command {
                Some(cmd) => Box::new(ExternalSolver { cmd_template: cmd.clone() }),
                None => Box::new(
                    ExternalSolver::from_env()
                        .ok_or_else(|| FmipError::Config(format!("external solver selected but neither backend.command nor {EXTERNAL_SOLVER_ENV} is set")))?,
                ),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FmipConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub guidance: SamplingConfig,
    pub nd: NdConfig,
    pub ps: PsConfig,
    pub pmvb: PmvbConfig,
    pub apollo: ApolloConfig,
    pub backend: BackendConfig,
}

impl FmipConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| FmipError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| FmipError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.guidance.validate()?;
        self.nd.validate()?;
        self.ps.validate()?;
        self.pmvb.validate()?;
        self.apollo.validate()?;
        self.backend.validate()
    }

    pub fn strategies(&self) -> StrategyConfig {
        StrategyConfig {
            nd: self.nd.clone(),
            ps: self.ps,
            pmvb: self.pmvb,
            apollo: self.apollo,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::BatchSize;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(FmipConfig::from_toml("").unwrap(), FmipConfig::default());
    }

    #[test]
    fn sections_parse_and_round_trip() {
        let text = r#"
            [model]
            layers = 2
            hidden = 16
            [train]
            epochs = 5
            batch_size = 4
            [guidance]
            tau = 0.1
            steps = 10
            schedule = "uniform"
            [nd]
            num_candidates = 10
            fix_fraction = 0.2
            [pmvb]
            conf = 0.5
            threshold = 0.8
            [apollo]
            iterations = 3
            [backend]
            solver = "brute"
            time_limit = 5.0
        "#;
        let cfg = FmipConfig::from_toml(text).unwrap();
        assert_eq!((cfg.model.layers, cfg.train.batch_size), (2, BatchSize::Fixed(4)));
        assert_eq!(cfg.guidance.schedule().unwrap().kind, ScheduleKind::Uniform);
        assert_eq!(cfg.apollo.iterations, 3);
        assert_eq!(cfg.backend.build().unwrap().name(), "brute");
        assert_eq!(FmipConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(FmipConfig::from_toml("[ps]\nk2 = 1.0").is_err());
        assert!(FmipConfig::from_toml("[guidance]\ntau = 0.0").is_err());
        assert!(FmipConfig::from_toml("[model]\nhidden = 7").is_err());
        assert!(FmipConfig::from_toml("[extra]\na = 1").is_err());
    }

    #[test]
    fn external_backend_uses_command() {
        let cfg = BackendConfig {
            solver: SolverKind::External,
            command: Some("true".into()),
            ..Default::default()
        };
        assert_eq!(cfg.build().unwrap().name(), "external");
    }
}
