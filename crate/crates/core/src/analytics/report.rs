//! Report files: one structured JSON document plus flat CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::campaign::{
    back_translation_account, pass_at_k_table, path_rows, ranking_table, transition_matrix,
    validity_lists, BackTranslationTally, PassAtKRow, PathRow, RankingRow, TransitionMatrix,
};
use super::{cliffs_delta, cliffs_magnitude, mww_test, AnalyticsError, EmptyListPolicy};
use crate::model::{LanguageId, RepairCampaignState};
use crate::orchestrator::{mean_path_length, LedgerRow, PathConvention};

pub const SCHEMA_VERSION: u32 = 1;

pub const REPORT_JSON: &str = "report.json";
pub const PASS_AT_K_CSV: &str = "pass_at_k.csv";
pub const RANKING_CSV: &str = "ranking.csv";
pub const TRANSITIONS_CSV: &str = "transitions.csv";
pub const PATHS_CSV: &str = "paths.csv";
pub const BACK_TRANSLATION_CSV: &str = "back_translation.csv";
pub const DIFFICULTY_CSV: &str = "difficulty.csv";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_CSV: &str = "comparison.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: schema version {found}, expected {SCHEMA_VERSION}")]
    Schema { path: PathBuf, found: u32 },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("comparison needs 2 or 3 runs, got {0}")]
    RunCount(usize),
    #[error("runs use different corpora ({0} vs {1})")]
    CorpusMismatch(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStatistics {
    /// Over every fixed bug, iteration-0 fixes counted as length 0.
    pub mean_all_fixed: Option<f64>,
    /// Over bugs fixed through translation only.
    pub mean_translation_fixed: Option<f64>,
    pub fixed_bugs: usize,
    pub total_bugs: usize,
    pub paths: Vec<PathRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub bug_id: String,
    pub source_language: LanguageId,
    pub difficulty: u32,
    pub fixed: bool,
    pub fixed_iteration: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub strategy: String,
    pub corpus_fingerprint: String,
    pub k: u32,
    pub iterations: u32,
    pub ranking_ks: Vec<usize>,
    pub map_policy: EmptyListPolicy,
    pub pass_at_k: Vec<PassAtKRow>,
    pub validity: BTreeMap<LanguageId, Vec<bool>>,
    pub ranking: Vec<RankingRow>,
    pub paths: PathStatistics,
    pub transitions: TransitionMatrix,
    pub back_translation: BTreeMap<LanguageId, BackTranslationTally>,
    pub difficulty: Vec<DifficultyRow>,
}

/// Inputs identifying the run a report describes.
pub struct ReportInputs<'a> {
    pub state: &'a RepairCampaignState,
    pub ledger: &'a [LedgerRow],
    pub strategy: &'a str,
    pub corpus_fingerprint: &'a str,
    pub k: u32,
    pub ranking_ks: &'a [usize],
    pub map_policy: EmptyListPolicy,
}

impl MetricsReport {
    pub fn compute(inp: &ReportInputs<'_>) -> Result<Self, AnalyticsError> {
        let iterations = inp.state.max_iterations;
        let validity = validity_lists(inp.state, iterations.saturating_sub(1) as usize);
        let ranking = ranking_table(&validity, inp.ranking_ks, inp.map_policy)?;
        let difficulty_of: BTreeMap<&str, u32> = inp
            .ledger
            .iter()
            .map(|r| (r.bug_id.as_str(), r.difficulty))
            .collect();
        let difficulty = inp
            .state
            .bugs()
            .iter()
            .map(|b| DifficultyRow {
                bug_id: b.bug_id.clone(),
                source_language: b.source_language,
                difficulty: difficulty_of.get(b.bug_id.as_str()).copied().unwrap_or(0),
                fixed: b.fixed,
                fixed_iteration: b.fixed_iteration,
            })
            .collect();
        Ok(MetricsReport {
            schema_version: SCHEMA_VERSION,
            strategy: inp.strategy.to_string(),
            corpus_fingerprint: inp.corpus_fingerprint.to_string(),
            k: inp.k,
            iterations,
            ranking_ks: inp.ranking_ks.to_vec(),
            map_policy: inp.map_policy,
            pass_at_k: pass_at_k_table(inp.state, inp.k, iterations)?,
            validity,
            ranking,
            paths: PathStatistics {
                mean_all_fixed: mean_path_length(inp.state, PathConvention::AllFixed),
                mean_translation_fixed: mean_path_length(inp.state, PathConvention::TranslationFixed),
                fixed_bugs: inp.state.bugs().iter().filter(|b| b.fixed).count(),
                total_bugs: inp.state.bugs().len(),
                paths: path_rows(inp.state),
            },
            transitions: transition_matrix(inp.ledger),
            back_translation: back_translation_account(inp.ledger),
            difficulty,
        })
    }

    /// Pass@k at the last iteration, per language.
    pub fn final_pass_at_k(&self) -> BTreeMap<LanguageId, f64> {
        let mut out = BTreeMap::new();
        for r in &self.pass_at_k {
            out.insert(r.language, r.pass_at_k);
        }
        out
    }

    /// Pass@k gain from iteration 0 to the last iteration, averaged over bugs.
    pub fn pass_at_k_gain(&self) -> f64 {
        let (mut first, mut last, mut bugs) = (0.0, 0.0, 0usize);
        let mut seen: BTreeMap<LanguageId, (f64, f64, usize)> = BTreeMap::new();
        for r in &self.pass_at_k {
            let e = seen.entry(r.language).or_insert((r.pass_at_k, r.pass_at_k, r.bugs));
            e.1 = r.pass_at_k;
        }
        for (f, l, n) in seen.values() {
            first += f * *n as f64;
            last += l * *n as f64;
            bugs += n;
        }
        if bugs == 0 {
            0.0
        } else {
            (last - first) / bugs as f64
        }
    }

    pub fn ranking_at(&self, scope: &str, k: usize) -> Option<&RankingRow> {
        self.ranking.iter().find(|r| r.scope == scope && r.k == k)
    }

    pub fn write_bundle(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir).map_err(|source| ReportError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_json(&dir.join(REPORT_JSON), self)?;
        write_csv(
            &dir.join(PASS_AT_K_CSV),
            &["language", "iteration", "bugs", "fixed", "pass_at_k"],
            self.pass_at_k.iter().map(|r| {
                vec![
                    r.language.name().to_string(),
                    r.iteration.to_string(),
                    r.bugs.to_string(),
                    r.fixed.to_string(),
                    float(r.pass_at_k),
                ]
            }),
        )?;
        write_csv(
            &dir.join(RANKING_CSV),
            &["strategy", "scope", "k", "precision", "recall", "f1", "map", "ndcg"],
            self.ranking.iter().map(|r| {
                vec![
                    self.strategy.clone(),
                    r.scope.clone(),
                    r.k.to_string(),
                    float(r.precision),
                    opt(r.recall),
                    opt(r.f1),
                    opt(r.map),
                    float(r.ndcg),
                ]
            }),
        )?;
        write_csv(
            &dir.join(TRANSITIONS_CSV),
            &["pre", "post", "bugs", "tests", "unchanged", "changed"],
            self.transitions.cells.iter().map(|c| {
                let o = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
                vec![
                    c.pre.as_str().to_string(),
                    c.post.as_str().to_string(),
                    c.bugs.to_string(),
                    o(c.tests),
                    o(c.unchanged),
                    o(c.changed),
                ]
            }),
        )?;
        write_csv(
            &dir.join(PATHS_CSV),
            &["bug_id", "source_language", "fixed", "fixed_iteration", "path_length", "path"],
            self.paths.paths.iter().map(|p| {
                vec![
                    p.bug_id.clone(),
                    p.source_language.name().to_string(),
                    p.fixed.to_string(),
                    p.fixed_iteration.map(|f| f.to_string()).unwrap_or_default(),
                    p.path.len().to_string(),
                    p.path.iter().map(|l| l.name()).collect::<Vec<_>>().join(">"),
                ]
            }),
        )?;
        write_csv(
            &dir.join(BACK_TRANSLATION_CSV),
            &["language", "bugs_preserved", "bugs_lost", "samples_before", "samples_after"],
            self.back_translation.iter().map(|(l, t)| {
                vec![
                    l.name().to_string(),
                    t.bugs_preserved.to_string(),
                    t.bugs_lost.to_string(),
                    t.samples_before.to_string(),
                    t.samples_after.to_string(),
                ]
            }),
        )?;
        write_csv(
            &dir.join(DIFFICULTY_CSV),
            &["bug_id", "source_language", "difficulty", "fixed", "fixed_iteration"],
            self.difficulty.iter().map(|d| {
                vec![
                    d.bug_id.clone(),
                    d.source_language.name().to_string(),
                    d.difficulty.to_string(),
                    d.fixed.to_string(),
                    d.fixed_iteration.map(|f| f.to_string()).unwrap_or_default(),
                ]
            }),
        )
    }

    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        let path = dir.join(REPORT_JSON);
        let text = fs::read_to_string(&path).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|source| ReportError::Json { path: path.clone(), source })?;
        let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(ReportError::Schema { path, found });
        }
        serde_json::from_value(value).map_err(|source| ReportError::Json { path, source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunColumn {
    pub label: String,
    pub strategy: String,
    /// Pass@k per iteration, pooled over all bugs.
    pub pass_curve: Vec<f64>,
    pub final_pass_at_k: BTreeMap<LanguageId, f64>,
    pub pass_at_k_gain: f64,
    pub mean_path_all_fixed: Option<f64>,
    pub mean_path_translation_fixed: Option<f64>,
    pub map: BTreeMap<usize, Option<f64>>,
    pub ndcg: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub x: String,
    pub y: String,
    /// Languages in both runs; the samples are their final Pass@k values.
    pub languages: Vec<LanguageId>,
    pub u: f64,
    pub p_value: f64,
    pub cliffs_delta: f64,
    pub magnitude: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub corpus_fingerprint: String,
    pub k: u32,
    pub runs: Vec<RunColumn>,
    pub tests: Vec<PairTest>,
}

fn pooled_curve(r: &MetricsReport) -> Vec<f64> {
    let mut by_it: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for row in &r.pass_at_k {
        let e = by_it.entry(row.iteration).or_default();
        e.0 += row.pass_at_k * row.bugs as f64;
        e.1 += row.bugs;
    }
    by_it.values().map(|(s, n)| if *n == 0 { 0.0 } else { s / *n as f64 }).collect()
}

impl ComparisonReport {
    /// Compares 2 or 3 labelled runs. Every later run is tested against the
    /// first.
    pub fn compute(runs: &[(String, MetricsReport)]) -> Result<Self, ReportError> {
        if !(2..=3).contains(&runs.len()) {
            return Err(ReportError::RunCount(runs.len()));
        }
        let base = &runs[0].1;
        for (_, r) in &runs[1..] {
            if r.corpus_fingerprint != base.corpus_fingerprint {
                return Err(ReportError::CorpusMismatch(
                    base.corpus_fingerprint.clone(),
                    r.corpus_fingerprint.clone(),
                ));
            }
        }
        let columns = runs
            .iter()
            .map(|(label, r)| RunColumn {
                label: label.clone(),
                strategy: r.strategy.clone(),
                pass_curve: pooled_curve(r),
                final_pass_at_k: r.final_pass_at_k(),
                pass_at_k_gain: r.pass_at_k_gain(),
                mean_path_all_fixed: r.paths.mean_all_fixed,
                mean_path_translation_fixed: r.paths.mean_translation_fixed,
                map: r.ranking.iter().filter(|x| x.scope == "ALL").map(|x| (x.k, x.map)).collect(),
                ndcg: r.ranking.iter().filter(|x| x.scope == "ALL").map(|x| (x.k, x.ndcg)).collect(),
            })
            .collect::<Vec<_>>();
        let mut tests = Vec::new();
        let x_final = &columns[0].final_pass_at_k;
        for col in &columns[1..] {
            let languages: Vec<LanguageId> =
                x_final.keys().filter(|l| col.final_pass_at_k.contains_key(l)).copied().collect();
            let xs: Vec<f64> = languages.iter().map(|l| x_final[l]).collect();
            let ys: Vec<f64> = languages.iter().map(|l| col.final_pass_at_k[l]).collect();
            let mw = mww_test(&xs, &ys)?;
            let delta = cliffs_delta(&xs, &ys)?;
            tests.push(PairTest {
                x: columns[0].label.clone(),
                y: col.label.clone(),
                languages,
                u: mw.u,
                p_value: mw.p_value,
                cliffs_delta: delta,
                magnitude: cliffs_magnitude(delta).to_string(),
            });
        }
        Ok(ComparisonReport {
            schema_version: SCHEMA_VERSION,
            corpus_fingerprint: base.corpus_fingerprint.clone(),
            k: base.k,
            runs: columns,
            tests,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir).map_err(|source| ReportError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_json(&dir.join(COMPARISON_JSON), self)?;
        let iterations = self.runs.iter().map(|r| r.pass_curve.len()).max().unwrap_or(0);
        let mut header = vec!["metric".to_string()];
        header.extend(self.runs.iter().map(|r| r.label.clone()));
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut push = |name: String, f: &dyn Fn(&RunColumn) -> String| {
            let mut row = vec![name];
            row.extend(self.runs.iter().map(f));
            rows.push(row);
        };
        push("strategy".into(), &|r| r.strategy.clone());
        for it in 0..iterations {
            push(format!("pass_at_k[{it}]"), &|r| r.pass_curve.get(it).map(|v| float(*v)).unwrap_or_default());
        }
        push("pass_at_k_gain".into(), &|r| float(r.pass_at_k_gain));
        push("mean_path_all_fixed".into(), &|r| opt(r.mean_path_all_fixed));
        push("mean_path_translation_fixed".into(), &|r| opt(r.mean_path_translation_fixed));
        let ks: Vec<usize> = self.runs[0].map.keys().copied().collect();
        for k in ks {
            push(format!("map@{k}"), &|r| r.map.get(&k).copied().flatten().map(float).unwrap_or_default());
            push(format!("ndcg@{k}"), &|r| r.ndcg.get(&k).copied().map(float).unwrap_or_default());
        }
        for t in &self.tests {
            let mut row = vec![format!("test:{}:{}", t.x, t.y)];
            row.push(format!(
                "U={} p={} delta={} ({})",
                float(t.u),
                float(t.p_value),
                float(t.cliffs_delta),
                t.magnitude
            ));
            rows.push(row);
        }
        let path = dir.join(COMPARISON_CSV);
        let mut w = csv::WriterBuilder::new()
            .flexible(true)
            .from_path(&path)
            .map_err(|source| ReportError::Csv { path: path.clone(), source })?;
        let wrap = |source| ReportError::Csv { path: path.clone(), source };
        w.write_record(&header).map_err(wrap)?;
        for r in rows {
            w.write_record(&r).map_err(wrap)?;
        }
        w.flush().map_err(|source| ReportError::Io { path: path.clone(), source })
    }
}

fn float(v: f64) -> String {
    // +0.0 folds a negative zero into zero
    format!("{:.6}", v + 0.0)
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), ReportError> {
    let wrap = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BugInstance, OutcomeCategory};
    use crate::orchestrator::RowMode;

    fn inputs() -> (RepairCampaignState, Vec<LedgerRow>) {
        let bugs: Vec<BugInstance> = [("a", LanguageId::C), ("b", LanguageId::Go)]
            .iter()
            .map(|(id, l)| BugInstance {
                bug_id: id.to_string(),
                source_language: *l,
                code: String::new(),
                problem_id: "p".into(),
                initial_outcome: OutcomeCategory::WrongAnswer,
                error_type: "WRONG_ANSWER".into(),
            })
            .collect();
        let mut s = RepairCampaignState::new(&bugs, 3);
        s.mark_iteration_result("a", 0, 20, 20).unwrap();
        s.mark_iteration_result("b", 0, 20, 0).unwrap();
        s.record_target("b", LanguageId::Rust).unwrap();
        s.mark_iteration_result("b", 1, 20, 20).unwrap();
        let ledger = ["a", "b"]
            .iter()
            .map(|id| LedgerRow {
                bug_id: id.to_string(),
                iteration: 0,
                source_language: LanguageId::C,
                difficulty: 1200,
                mode: RowMode::Direct,
                target_language: None,
                decision: None,
                source_report: None,
                translation: None,
                repair_reports: vec![],
                back_reports: vec![],
                n: 20,
                target_correct: 0,
                c: 0,
                error: None,
            })
            .collect();
        (s, ledger)
    }

    fn report() -> MetricsReport {
        let (s, ledger) = inputs();
        MetricsReport::compute(&ReportInputs {
            state: &s,
            ledger: &ledger,
            strategy: "reasoning",
            corpus_fingerprint: "fp",
            k: 10,
            ranking_ks: &[1, 2],
            map_policy: EmptyListPolicy::Exclude,
        })
        .unwrap()
    }

    #[test]
    fn compute_and_round_trip() {
        let r = report();
        assert_eq!(r.pass_at_k.len(), 6);
        assert_eq!(r.paths.mean_all_fixed, Some(0.5));
        assert_eq!(r.paths.mean_translation_fixed, Some(1.0));
        assert_eq!(r.validity[&LanguageId::Go], vec![true, false]);
        assert!((r.pass_at_k_gain() - 0.5).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        r.write_bundle(dir.path()).unwrap();
        assert_eq!(MetricsReport::load(dir.path()).unwrap(), r);
        let csv = fs::read_to_string(dir.path().join(PASS_AT_K_CSV)).unwrap();
        assert!(csv.starts_with("language,iteration,bugs,fixed,pass_at_k\nC,0,1,1,1.000000\n"));
        let paths = fs::read_to_string(dir.path().join(PATHS_CSV)).unwrap();
        assert!(paths.contains("b,Go,true,1,1,Rust"));
    }

    #[test]
    fn schema_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(REPORT_JSON), "{\"schema_version\": 9}").unwrap();
        assert!(matches!(MetricsReport::load(dir.path()), Err(ReportError::Schema { found: 9, .. })));
    }

    #[test]
    fn self_comparison_is_null() {
        let r = report();
        let cmp = ComparisonReport::compute(&[("x".into(), r.clone()), ("y".into(), r.clone())]).unwrap();
        assert_eq!(cmp.tests[0].cliffs_delta, 0.0);
        assert!((cmp.tests[0].p_value - 1.0).abs() < 1e-9);
        let mut other = r.clone();
        other.corpus_fingerprint = "zz".into();
        assert!(matches!(
            ComparisonReport::compute(&[("x".into(), r.clone()), ("y".into(), other)]),
            Err(ReportError::CorpusMismatch(..))
        ));
        assert!(matches!(ComparisonReport::compute(&[("x".into(), r)]), Err(ReportError::RunCount(1))));
        let dir = tempfile::tempdir().unwrap();
        cmp.write(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(COMPARISON_CSV)).unwrap();
        assert!(text.starts_with("metric,x,y\nstrategy,reasoning,reasoning\n"));
    }
}
