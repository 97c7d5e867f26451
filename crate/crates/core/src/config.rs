//! Campaign configuration files and the components they describe.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{
    parse_verdict_marker, Executor, MockExecutor, RealExecutor, ToolchainConfig, VERDICT_MARKER,
};
use crate::gateway::{
    FixProbabilityTable, Gateway, HttpBackend, HttpConfig, ModelBackend, RetryPolicy,
    ScriptedBackend, StochasticBackend,
};
use crate::orchestrator::RunConfig;
use crate::strategy::InitialPerformanceTable;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Scripted,
    Stochastic,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "scripted" => Ok(BackendKind::Scripted),
            "stochastic" => Ok(BackendKind::Stochastic),
            "http" => Ok(BackendKind::Http),
            other => Err(format!("unknown backend {other:?} (scripted, stochastic, http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default)]
    pub kind: BackendKind,
    /// JSONL fixture file for the scripted backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    /// Fix-probability table for the stochastic backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http: Option<HttpConfig>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_attempts")]
    pub retry_attempts: u32,
    #[serde(default = "default_delay")]
    pub retry_delay_ms: u64,
}

fn default_in_flight() -> usize {
    8
}
fn default_attempts() -> u32 {
    3
}
fn default_delay() -> u64 {
    250
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::default(),
            fixtures: None,
            table: None,
            http: None,
            max_in_flight: default_in_flight(),
            retry_attempts: default_attempts(),
            retry_delay_ms: default_delay(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    #[default]
    Mock,
    Real,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecSection {
    #[serde(default)]
    pub mode: ExecMode,
    /// Mock verdict table (digest → verdict list).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<PathBuf>,
    /// Mock verdict for code without a table entry or marker, e.g. `WRONG_ANSWER`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_verdict: Option<String>,
    /// Toolchain file for real execution; host defaults otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toolchains: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    /// Replaces the iteration-0 table used by the greedy strategy and fallbacks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub corpus: PathBuf,
    pub run: RunConfig,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub exec: ExecSection,
    #[serde(default)]
    pub strategy: StrategySection,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Parse a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml_str(&read(path)?).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        for p in [
            &mut self.backend.fixtures,
            &mut self.backend.table,
            &mut self.exec.verdicts,
            &mut self.exec.toolchains,
            &mut self.strategy.performance_table,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ModelBackend>, ConfigError> {
        let b = &self.backend;
        Ok(match b.kind {
            BackendKind::Scripted => {
                let backend = match &b.fixtures {
                    Some(p) => ScriptedBackend::load(p).map_err(ConfigError::Invalid)?,
                    None => ScriptedBackend::new(),
                };
                Arc::new(backend)
            }
            BackendKind::Stochastic => {
                let p = b
                    .table
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("stochastic backend needs backend.table".into()))?;
                Arc::new(StochasticBackend::new(
                    FixProbabilityTable::load(p).map_err(ConfigError::Invalid)?,
                ))
            }
            BackendKind::Http => {
                let h = b
                    .http
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("http backend needs [backend.http]".into()))?;
                Arc::new(HttpBackend::new(h))
            }
        })
    }

    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        if self.backend.max_in_flight == 0 || self.backend.retry_attempts == 0 {
            return Err(ConfigError::Invalid(
                "backend.max_in_flight and backend.retry_attempts must be positive".into(),
            ));
        }
        Ok(Gateway::new(self.build_backend()?, self.backend.max_in_flight).with_retry(RetryPolicy {
            attempts: self.backend.retry_attempts,
            base_delay: Duration::from_millis(self.backend.retry_delay_ms),
        }))
    }

    /// Builds the executor; real mode fails if a configured language has no toolchain.
    pub fn build_executor(&self) -> Result<Box<dyn Executor>, ConfigError> {
        match self.exec.mode {
            ExecMode::Mock => {
                let mut mock = MockExecutor::new();
                if let Some(v) = &self.exec.default_verdict {
                    let script = parse_verdict_marker(&format!("{VERDICT_MARKER}{v}"))
                        .map_err(|e| ConfigError::Invalid(format!("exec.default_verdict: {e}")))?
                        .expect("marker present");
                    mock = mock.with_default(script);
                }
                if let Some(p) = &self.exec.verdicts {
                    mock.load_table(p).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                }
                Ok(Box::new(mock))
            }
            ExecMode::Real => {
                let tc = match &self.exec.toolchains {
                    Some(p) => ToolchainConfig::load(p).map_err(|e| ConfigError::Invalid(e.to_string()))?,
                    None => ToolchainConfig::host_defaults(),
                };
                tc.check_covers(&self.run.languages)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Box::new(RealExecutor::new(tc)))
            }
        }
    }

    pub fn performance_table(&self) -> Result<Option<InitialPerformanceTable>, ConfigError> {
        self.strategy
            .performance_table
            .as_ref()
            .map(|p| InitialPerformanceTable::load(p).map_err(|e| ConfigError::Invalid(e.to_string())))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ExecError;
    use crate::model::LanguageId;

    const MINIMAL: &str = r#"
corpus = "corpus"

[run]
strategy = "GREEDY"
languages = ["C", "Python"]
"#;

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg = EngineConfig::load(&path).unwrap();
        assert_eq!(cfg.corpus, dir.path().join("corpus"));
        assert_eq!(cfg.backend.kind, BackendKind::Scripted);
        assert_eq!(cfg.exec.mode, ExecMode::Mock);
        assert_eq!(cfg.run.max_iterations(), 2);
        let again = EngineConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = format!("{MINIMAL}\n[exec]\nmode = \"mock\"\nbogus = 1\n");
        assert!(matches!(EngineConfig::from_toml_str(&bad), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn stochastic_needs_table() {
        let mut cfg = EngineConfig::from_toml_str(MINIMAL).unwrap();
        cfg.backend.kind = BackendKind::Stochastic;
        assert!(cfg.build_backend().is_err());
        assert!("HTTP".parse::<BackendKind>().is_ok());
        assert!("grpc".parse::<BackendKind>().is_err());
    }

    #[test]
    fn real_mode_names_missing_language() {
        let dir = tempfile::tempdir().unwrap();
        let tc = dir.path().join("tc.toml");
        std::fs::write(&tc, "[languages.C]\nrun = \"{exe}\"\next = \"c\"\n").unwrap();
        let mut cfg = EngineConfig::from_toml_str(MINIMAL).unwrap();
        cfg.exec.mode = ExecMode::Real;
        cfg.exec.toolchains = Some(tc);
        let err = cfg.build_executor().err().unwrap().to_string();
        assert_eq!(err, ExecError::MissingToolchain(LanguageId::Python).to_string());
    }

    #[test]
    fn bad_default_verdict() {
        let mut cfg = EngineConfig::from_toml_str(MINIMAL).unwrap();
        cfg.exec.default_verdict = Some("MAYBE".into());
        assert!(cfg.build_executor().is_err());
        cfg.exec.default_verdict = Some("PASSED".into());
        assert!(cfg.build_executor().is_ok());
    }
}
