//! Judging code samples against test suites.
//!
//! Two executors share the [`Executor`] trait: [`RealExecutor`] compiles and
//! runs code with the configured toolchains under time and memory limits, and
//! [`MockExecutor`] derives verdicts from scripted tables so whole campaigns
//! can run without any compiler installed.

mod mock;
mod real;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CodeSample, LanguageId, LanguageSet, OutcomeCategory, TestCase};

pub use mock::{parse_verdict_marker, MockExecutor, VerdictScript, VERDICT_MARKER};
pub use real::RealExecutor;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no toolchain configured for {0}")]
    MissingToolchain(LanguageId),
    #[error("empty test suite")]
    NoTests,
    #[error("cannot aggregate an empty outcome list")]
    EmptyOutcomes,
    #[error("sandbox failure: {0}")]
    Infrastructure(String),
    #[error("toolchain config: {0}")]
    Config(String),
}

/// How a language's programs are built and started.
///
/// Command templates are run through `sh -c` with `{src}`, `{exe}` and
/// `{dir}` substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageToolchain {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile: Option<String>,
    pub run: String,
    pub ext: String,
    /// Base file name for the source; some languages need `Main` for a `Main` class.
    #[serde(default = "default_stem")]
    pub file_stem: String,
    /// Apply the memory limit as an address-space rlimit. Runtimes that
    /// reserve large virtual regions (JVM, Go) need this off and rely on the
    /// peak-RSS check alone.
    #[serde(default = "default_true")]
    pub address_space_limit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_timeout_ms: Option<u64>,
}

fn default_stem() -> String {
    "Main".to_string()
}

fn default_true() -> bool {
    true
}

/// Toolchains per language plus optional limit overrides.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolchainConfig {
    #[serde(default)]
    pub languages: BTreeMap<LanguageId, LanguageToolchain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_limit_mib: Option<u64>,
}

impl ToolchainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExecError> {
        toml::from_str(text).map_err(|e| ExecError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExecError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Every language of `set` must have an entry before anything runs.
    pub fn check_covers(&self, set: &LanguageSet) -> Result<(), ExecError> {
        match set.iter().find(|l| !self.languages.contains_key(l)) {
            Some(l) => Err(ExecError::MissingToolchain(l)),
            None => Ok(()),
        }
    }

    /// Commands for the toolchains commonly found on Linux hosts.
    pub fn host_defaults() -> Self {
        let entry = |compile: Option<&str>, run: &str, ext: &str| LanguageToolchain {
            compile: compile.map(str::to_string),
            run: run.to_string(),
            ext: ext.to_string(),
            file_stem: default_stem(),
            address_space_limit: true,
            compile_timeout_ms: None,
        };
        let mut languages = BTreeMap::new();
        languages.insert(
            LanguageId::C,
            entry(Some("gcc -O2 -o {exe} {src} -lm"), "{exe}", "c"),
        );
        languages.insert(
            LanguageId::Cpp,
            entry(Some("g++ -O2 -o {exe} {src}"), "{exe}", "cpp"),
        );
        languages.insert(
            LanguageId::Python,
            entry(Some("python3 -m py_compile {src}"), "python3 {src}", "py"),
        );
        languages.insert(
            LanguageId::Rust,
            entry(Some("rustc -O -o {exe} {src}"), "{exe}", "rs"),
        );
        let mut js = entry(Some("node --check {src}"), "node {src}", "js");
        js.address_space_limit = false;
        languages.insert(LanguageId::JavaScript, js);
        ToolchainConfig {
            languages,
            time_limit_ms: None,
            memory_limit_mib: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_index: usize,
    pub category: OutcomeCategory,
    pub wall_time_ms: u64,
    pub peak_memory_mib: u64,
    pub stdout_digest: String,
    pub stderr_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub sample_id: String,
    pub per_test: Vec<TestOutcome>,
    pub aggregate: OutcomeCategory,
    pub compiled: bool,
}

impl ExecutionReport {
    pub fn compilation_failure(sample_id: &str) -> Self {
        ExecutionReport {
            sample_id: sample_id.to_string(),
            per_test: Vec::new(),
            aggregate: OutcomeCategory::CompilationError,
            compiled: false,
        }
    }

    pub fn from_tests(sample_id: &str, per_test: Vec<TestOutcome>) -> Result<Self, ExecError> {
        let aggregate = classify_aggregate(&per_test)?;
        Ok(ExecutionReport {
            sample_id: sample_id.to_string(),
            per_test,
            aggregate,
            compiled: true,
        })
    }
}

/// PASSED when every test passed; otherwise the category of the first
/// failing test in suite order.
pub fn classify_aggregate(per_test: &[TestOutcome]) -> Result<OutcomeCategory, ExecError> {
    if per_test.is_empty() {
        return Err(ExecError::EmptyOutcomes);
    }
    Ok(per_test
        .iter()
        .map(|t| t.category)
        .find(|c| *c != OutcomeCategory::Passed)
        .unwrap_or(OutcomeCategory::Passed))
}

/// The single definition of a correct sample.
pub fn is_correct(report: &ExecutionReport) -> bool {
    report.aggregate == OutcomeCategory::Passed
}

/// Strip trailing whitespace on each line, then trailing newlines.
pub fn normalize_output(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for line in raw.lines() {
        out.push_str(line.trim_end());
        out.push('\n');
    }
    let trimmed = out.trim_end_matches('\n').len();
    out.truncate(trimmed);
    out
}

pub fn digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    crate::corpus::hex(&Sha256::digest(bytes))
}

/// Anything that can judge a sample against a test suite.
pub trait Executor: Send + Sync {
    fn execute(&self, sample: &CodeSample, tests: &[TestCase]) -> Result<ExecutionReport, ExecError>;

    /// Judge samples with at most `parallelism` running at once. Output order
    /// follows input order.
    fn execute_batch(
        &self,
        samples: &[CodeSample],
        tests: &[TestCase],
        parallelism: usize,
    ) -> Result<Vec<ExecutionReport>, ExecError> {
        if parallelism <= 1 || samples.len() <= 1 {
            return samples.iter().map(|s| self.execute(s, tests)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| ExecError::Infrastructure(e.to_string()))?;
        pool.install(|| samples.par_iter().map(|s| self.execute(s, tests)).collect())
    }
}

/// Per-category counts over a batch of reports.
pub fn outcome_totals(reports: &[ExecutionReport]) -> BTreeMap<OutcomeCategory, usize> {
    let mut totals = BTreeMap::new();
    for r in reports {
        *totals.entry(r.aggregate).or_insert(0) += 1;
    }
    totals
}

#[cfg(test)]
mod tests {
    use super::*;
    use OutcomeCategory::*;

    fn outcome(i: usize, category: OutcomeCategory) -> TestOutcome {
        TestOutcome {
            test_index: i,
            category,
            wall_time_ms: 0,
            peak_memory_mib: 0,
            stdout_digest: String::new(),
            stderr_digest: String::new(),
        }
    }

    fn outcomes(cats: &[OutcomeCategory]) -> Vec<TestOutcome> {
        cats.iter().enumerate().map(|(i, c)| outcome(i, *c)).collect()
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(classify_aggregate(&outcomes(&[Passed, Passed])).unwrap(), Passed);
        assert_eq!(
            classify_aggregate(&outcomes(&[Passed, WrongAnswer, RuntimeError])).unwrap(),
            WrongAnswer
        );
        assert_eq!(classify_aggregate(&outcomes(&[RuntimeError])).unwrap(), RuntimeError);
        assert!(matches!(classify_aggregate(&[]), Err(ExecError::EmptyOutcomes)));
    }

    #[test]
    fn aggregate_matches_brute_force_scan() {
        // all 6^3 suites of length 3
        for a in OutcomeCategory::ALL {
            for b in OutcomeCategory::ALL {
                for c in OutcomeCategory::ALL {
                    let suite = [a, b, c];
                    let mut expected = Passed;
                    for cat in suite {
                        if cat != Passed {
                            expected = cat;
                            break;
                        }
                    }
                    assert_eq!(classify_aggregate(&outcomes(&suite)).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn correctness_is_aggregate_passed() {
        let mut r = ExecutionReport::from_tests("s", outcomes(&[Passed])).unwrap();
        assert!(is_correct(&r));
        r.aggregate = WrongAnswer;
        assert!(!is_correct(&r));
        r.aggregate = MemoryLimitExceeded;
        assert!(!is_correct(&r));
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_output("1 2 \n3\t\n\n\n"), "1 2\n3");
        assert_eq!(normalize_output("a\r\nb"), "a\nb");
        assert_eq!(normalize_output(""), "");
        assert_eq!(normalize_output("x"), normalize_output("x\n"));
        assert_ne!(normalize_output(" x"), normalize_output("x"));
    }

    #[test]
    fn toolchain_config_parses_and_checks_coverage() {
        let cfg = ToolchainConfig::from_toml_str(
            r#"
            [languages.C]
            compile = "gcc -o {exe} {src}"
            run = "{exe}"
            ext = "c"

            [languages.Python]
            run = "python3 {src}"
            ext = "py"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.languages.len(), 2);
        let set = LanguageSet::new(vec![LanguageId::C, LanguageId::Python]).unwrap();
        cfg.check_covers(&set).unwrap();
        let set = LanguageSet::new(vec![LanguageId::C, LanguageId::Rust]).unwrap();
        match cfg.check_covers(&set) {
            Err(ExecError::MissingToolchain(l)) => assert_eq!(l, LanguageId::Rust),
            other => panic!("{other:?}"),
        }
        assert!(ToolchainConfig::from_toml_str("[languages.Cobol]\nrun='x'\next='c'").is_err());
    }
}
