use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{digest, normalize_output, ExecError, ExecutionReport, Executor, TestOutcome};
use crate::model::{CodeSample, OutcomeCategory, TestCase};

/// Inline marker the mock executor looks for, e.g. `// @verdict: WA,PASSED`.
pub const VERDICT_MARKER: &str = "@verdict:";

/// Scripted per-test verdicts. A list shorter than the suite repeats its
/// last entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictScript(pub Vec<OutcomeCategory>);

impl VerdictScript {
    pub fn uniform(cat: OutcomeCategory) -> Self {
        VerdictScript(vec![cat])
    }

    pub fn category_for(&self, test_index: usize) -> OutcomeCategory {
        let last = self.0.len() - 1;
        self.0[test_index.min(last)]
    }

    pub fn compiles(&self) -> bool {
        !self.0.contains(&OutcomeCategory::CompilationError)
    }

    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|c| c.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Find the last `@verdict:` marker in `code` and parse its list.
///
/// Returns `Ok(None)` when the code carries no marker.
pub fn parse_verdict_marker(code: &str) -> Result<Option<VerdictScript>, String> {
    let Some(line) = code.lines().rev().find(|l| l.contains(VERDICT_MARKER)) else {
        return Ok(None);
    };
    let start = line.find(VERDICT_MARKER).unwrap() + VERDICT_MARKER.len();
    let body = line[start..].trim();
    // allow the marker inside block comments
    let body = body.trim_end_matches("*/").trim_end_matches("-->").trim();
    let mut cats = Vec::new();
    for tok in body.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        cats.push(tok.parse::<OutcomeCategory>().map_err(|e| e.to_string())?);
    }
    if cats.is_empty() {
        return Err("verdict marker without categories".into());
    }
    Ok(Some(VerdictScript(cats)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictRow {
    digest: String,
    verdict: String,
}

/// Judges samples from scripted verdicts instead of running them.
///
/// Lookup order: the verdict table (keyed by SHA-256 of the code), then an
/// inline marker, then the default verdict. Blank code never compiles.
#[derive(Debug, Clone)]
pub struct MockExecutor {
    table: BTreeMap<String, VerdictScript>,
    default_verdict: VerdictScript,
}

impl Default for MockExecutor {
    fn default() -> Self {
        MockExecutor {
            table: BTreeMap::new(),
            default_verdict: VerdictScript::uniform(OutcomeCategory::WrongAnswer),
        }
    }
}

impl MockExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, verdict: VerdictScript) -> Self {
        self.default_verdict = verdict;
        self
    }

    pub fn insert(&mut self, code: &str, verdict: VerdictScript) {
        self.table.insert(digest(code.as_bytes()), verdict);
    }

    /// Load a verdict table: one `{"digest": ..., "verdict": "WA,PASSED"}` per line.
    pub fn load_table(&mut self, path: &Path) -> Result<(), ExecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExecError::Config(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: VerdictRow = serde_json::from_str(line)
                .map_err(|e| ExecError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            let script = parse_verdict_marker(&format!("{VERDICT_MARKER}{}", row.verdict))
                .map_err(|e| ExecError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?
                .expect("marker present");
            self.table.insert(row.digest, script);
        }
        Ok(())
    }

    pub fn verdict_for(&self, code: &str) -> VerdictScript {
        if code.trim().is_empty() {
            return VerdictScript::uniform(OutcomeCategory::CompilationError);
        }
        if let Some(v) = self.table.get(&digest(code.as_bytes())) {
            return v.clone();
        }
        match parse_verdict_marker(code) {
            Ok(Some(v)) => v,
            // an unreadable marker is what a broken program looks like
            Err(_) => VerdictScript::uniform(OutcomeCategory::CompilationError),
            Ok(None) => self.default_verdict.clone(),
        }
    }
}

impl Executor for MockExecutor {
    fn execute(&self, sample: &CodeSample, tests: &[TestCase]) -> Result<ExecutionReport, ExecError> {
        if tests.is_empty() {
            return Err(ExecError::NoTests);
        }
        let verdict = self.verdict_for(&sample.code);
        if !verdict.compiles() {
            return Ok(ExecutionReport::compilation_failure(&sample.sample_id));
        }
        let per_test = tests
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let category = verdict.category_for(i);
                let stdout = if category == OutcomeCategory::Passed {
                    normalize_output(&t.expected_output)
                } else {
                    format!("mock:{category}")
                };
                TestOutcome {
                    test_index: i,
                    category,
                    wall_time_ms: 0,
                    peak_memory_mib: 0,
                    stdout_digest: digest(stdout.as_bytes()),
                    stderr_digest: digest(b""),
                }
            })
            .collect();
        ExecutionReport::from_tests(&sample.sample_id, per_test)
    }
}
