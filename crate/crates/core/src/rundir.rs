//! Run directories: everything needed to reproduce and measure one campaign.
//!
//! Layout: `config.toml` (resolved snapshot), `state.jsonl`, `ledger.jsonl`,
//! `history.jsonl`, `summary.json`, `run.log`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{AnalyticsError, EmptyListPolicy, MetricsReport, ReportInputs};
use crate::config::{ConfigError, EngineConfig};
use crate::corpus::{load_corpus, validate_corpus, Corpus, CorpusError};
use crate::model::{BugProgress, RepairCampaignState};
use crate::orchestrator::{run_campaign, CampaignError, CampaignOptions, CampaignOutcome, LedgerRow};

pub const CONFIG_FILE: &str = "config.toml";
pub const STATE_FILE: &str = "state.jsonl";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOG_FILE: &str = "run.log";

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0} already holds a run; choose an empty directory")]
    NotEmpty(PathBuf),
    #[error("{path}: incomplete run directory, missing {missing}")]
    Incomplete { path: PathBuf, missing: &'static str },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("corpus is not runnable: {0}")]
    Validation(String),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub corpus_fingerprint: String,
    pub bugs_total: usize,
    pub bugs_evaluated: usize,
    pub bugs_fixed: usize,
    pub max_iterations: u32,
    pub last_iteration: u32,
    pub message: String,
}

impl RunSummary {
    pub fn new(cfg: &EngineConfig, corpus: &Corpus, outcome: &CampaignOutcome) -> Self {
        let bugs = outcome.state.bugs();
        let evaluated = bugs.iter().filter(|b| !b.tallies.is_empty()).count();
        RunSummary {
            strategy: cfg.run.strategy.to_string(),
            seed: cfg.run.seed,
            corpus_fingerprint: corpus.fingerprint(),
            bugs_total: bugs.len(),
            bugs_evaluated: evaluated,
            bugs_fixed: bugs.iter().filter(|b| b.fixed).count(),
            max_iterations: outcome.state.max_iterations,
            last_iteration: outcome.last_iteration,
            message: format!("{evaluated}/{} bugs evaluated", bugs.len()),
        }
    }
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: EngineConfig,
    pub summary: RunSummary,
    pub state: RepairCampaignState,
    pub ledger: Vec<LedgerRow>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RunDirError> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("serializable"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, RunDirError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RunDirError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn prepare(dir: &Path) -> Result<(), RunDirError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(io_err(dir))?;
        if entries.next().is_some() {
            return Err(RunDirError::NotEmpty(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Load the corpus named by `cfg`, run the campaign and write `dir`.
///
/// `dir` must not exist or be empty. The log is appended as the campaign
/// finishes; a failed campaign leaves the config snapshot and a log line.
pub fn execute_run(cfg: &EngineConfig, dir: &Path) -> Result<RunSummary, RunDirError> {
    cfg.run.validate()?;
    let gateway = cfg.build_gateway()?;
    let executor = cfg.build_executor()?;
    let table = cfg.performance_table()?;
    let (corpus, _manifest) = load_corpus(&cfg.corpus)?;
    let diags = validate_corpus(&corpus, &cfg.run.languages);
    if !diags.is_empty() {
        let text: Vec<String> = diags.iter().map(|d| format!("{}: {}", d.subject, d.message)).collect();
        return Err(RunDirError::Validation(text.join("; ")));
    }

    prepare(dir)?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg.to_toml()).map_err(io_err(&cfg_path))?;
    let history = dir.join(HISTORY_FILE);
    let outcome = run_campaign(
        &corpus,
        &cfg.run,
        executor.as_ref(),
        &gateway,
        CampaignOptions {
            history_path: Some(&history),
            table_override: table,
        },
    );
    let log_path = dir.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(io_err(&log_path))?;
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            writeln!(log, "campaign failed: {e}").map_err(io_err(&log_path))?;
            return Err(e.into());
        }
    };
    for line in &outcome.log {
        writeln!(log, "{line}").map_err(io_err(&log_path))?;
    }
    if !history.exists() {
        fs::write(&history, "").map_err(io_err(&history))?;
    }
    write_jsonl(&dir.join(STATE_FILE), outcome.state.bugs())?;
    write_jsonl(&dir.join(LEDGER_FILE), &outcome.ledger)?;
    let summary = RunSummary::new(cfg, &corpus, &outcome);
    let summary_path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("serializable") + "\n";
    fs::write(&summary_path, text).map_err(io_err(&summary_path))?;
    writeln!(log, "{}", summary.message).map_err(io_err(&log_path))?;
    Ok(summary)
}

/// Read a completed run directory without modifying it.
pub fn load_run(dir: &Path) -> Result<LoadedRun, RunDirError> {
    for missing in [CONFIG_FILE, SUMMARY_FILE, STATE_FILE, LEDGER_FILE] {
        if !dir.join(missing).is_file() {
            return Err(RunDirError::Incomplete {
                path: dir.to_path_buf(),
                missing,
            });
        }
    }
    let config = EngineConfig::load(&dir.join(CONFIG_FILE))?;
    let summary_path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
    let summary: RunSummary = serde_json::from_str(&text).map_err(|e| RunDirError::Malformed {
        path: summary_path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let bugs: Vec<BugProgress> = read_jsonl(&dir.join(STATE_FILE))?;
    let ledger = read_jsonl(&dir.join(LEDGER_FILE))?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        config,
        state: RepairCampaignState::from_progress(bugs, summary.max_iterations),
        summary,
        ledger,
    })
}

impl LoadedRun {
    /// Metrics at `k` (the run's own Pass@k setting when `None`) and the
    /// given ranking cutoffs.
    pub fn metrics(
        &self,
        k: Option<u32>,
        ranking_ks: &[usize],
        map_policy: EmptyListPolicy,
    ) -> Result<MetricsReport, AnalyticsError> {
        MetricsReport::compute(&ReportInputs {
            state: &self.state,
            ledger: &self.ledger,
            strategy: &self.summary.strategy,
            corpus_fingerprint: &self.summary.corpus_fingerprint,
            k: k.unwrap_or(self.config.run.pass_k),
            ranking_ks,
            map_policy,
        })
    }
}

/// Where `metrics` writes when no output directory is given: a sibling of
/// the run directory named `<run>.metrics`, so the run stays untouched.
pub fn default_metrics_dir(run_dir: &Path) -> PathBuf {
    let name = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    run_dir.with_file_name(format!("{name}.metrics"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incomplete_dir_is_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_run(dir.path()).unwrap_err();
        assert!(matches!(err, RunDirError::Incomplete { missing: CONFIG_FILE, .. }));
    }

    #[test]
    fn metrics_dir_is_a_sibling() {
        assert_eq!(default_metrics_dir(Path::new("/tmp/runs/a")), PathBuf::from("/tmp/runs/a.metrics"));
    }

    #[test]
    fn refuses_non_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x"), "").unwrap();
        assert!(matches!(prepare(dir.path()), Err(RunDirError::NotEmpty(_))));
        prepare(&dir.path().join("fresh")).unwrap();
    }
}
