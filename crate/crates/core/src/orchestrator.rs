//! The campaign loop: direct repair at iteration 0, then decide, translate,
//! repair in the target, back-translate and validate, one iteration at a
//! time.
//!
//! Bugs within an iteration run concurrently up to the parallelism cap.
//! Their results are applied in corpus order at the iteration barrier, which
//! is also where history entries are written, so the schedule never shows up
//! in the output.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::exec::{is_correct, ExecError, ExecutionReport, Executor};
use crate::gateway::{BugContext, Gateway, GatewayError, Task, TaskRequest};
use crate::history::{
    Characteristics, Encoder, HistoryEntry, HistoryError, HistorySource, HistoryStore,
    RepairSummary, DEFAULT_RETRIEVAL_K,
};
use crate::model::{
    remaining_for, BugInstance, CodeSample, LanguageId, LanguageSet, ModelError, OutcomeCategory,
    Provenance, RepairCampaignState,
};
use crate::seed::derive_seed;
use crate::strategy::{
    DecisionRecord, InitialPerformanceTable, Selector, StrategyError, StrategyKind,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("bug {bug_id}: {message}")]
    Corpus { bug_id: String, message: String },
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn default_sample_count() -> u32 {
    20
}
fn default_pass_k() -> u32 {
    10
}
fn default_retrieval_k() -> usize {
    DEFAULT_RETRIEVAL_K
}
fn default_true() -> bool {
    true
}
fn default_parallelism() -> usize {
    1
}

/// How mean translation-path length treats bugs fixed without translation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PathConvention {
    /// Every fixed bug counts; direct fixes have length 0.
    #[default]
    AllFixed,
    /// Only bugs fixed through translation count.
    TranslationFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: StrategyKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sample_count")]
    pub sample_count: u32,
    #[serde(default = "default_pass_k")]
    pub pass_k: u32,
    /// Total iterations including iteration 0; defaults to the set size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u32>,
    #[serde(default = "default_retrieval_k")]
    pub retrieval_k: usize,
    #[serde(default = "default_true")]
    pub translation_enabled: bool,
    #[serde(default = "default_true")]
    pub history_enabled: bool,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub languages: LanguageSet,
    #[serde(default)]
    pub path_convention: PathConvention,
}

impl RunConfig {
    pub fn new(strategy: StrategyKind, languages: LanguageSet) -> Self {
        RunConfig {
            strategy,
            seed: 0,
            sample_count: default_sample_count(),
            pass_k: default_pass_k(),
            max_iterations: None,
            retrieval_k: default_retrieval_k(),
            translation_enabled: true,
            history_enabled: true,
            parallelism: 1,
            languages,
            path_convention: PathConvention::default(),
        }
    }

    pub fn max_iterations(&self) -> u32 {
        self.max_iterations.unwrap_or(self.languages.len() as u32)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.sample_count == 0 {
            return Err(CampaignError::Config("sample_count must be >= 1".into()));
        }
        if self.pass_k == 0 || self.pass_k > self.sample_count {
            return Err(CampaignError::Config(format!(
                "pass_k must be in 1..={} (got {})",
                self.sample_count, self.pass_k
            )));
        }
        if self.max_iterations() == 0 {
            return Err(CampaignError::Config("max_iterations must be >= 1".into()));
        }
        if self.retrieval_k == 0 {
            return Err(CampaignError::Config("retrieval_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationEvent {
    pub bug_id: String,
    pub iteration: u32,
    pub source_language: LanguageId,
    pub target_language: LanguageId,
    pub pre_outcome: OutcomeCategory,
    pub post_outcome: OutcomeCategory,
    /// Index-aligned (pre, post) per-test outcomes.
    pub per_test: Vec<(OutcomeCategory, OutcomeCategory)>,
}

impl TranslationEvent {
    fn new(
        bug: &BugInstance,
        iteration: u32,
        target: LanguageId,
        pre: &ExecutionReport,
        post: &ExecutionReport,
    ) -> Self {
        TranslationEvent {
            bug_id: bug.bug_id.clone(),
            iteration,
            source_language: bug.source_language,
            target_language: target,
            pre_outcome: pre.aggregate,
            post_outcome: post.aggregate,
            per_test: pre
                .per_test
                .iter()
                .zip(&post.per_test)
                .map(|(a, b)| (a.category, b.category))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RowMode {
    Direct,
    Translation,
}

/// Everything that happened to one bug in one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub bug_id: String,
    pub iteration: u32,
    pub source_language: LanguageId,
    pub difficulty: u32,
    pub mode: RowMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_language: Option<LanguageId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionRecord>,
    /// The buggy source program, judged once at iteration 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_report: Option<ExecutionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<TranslationEvent>,
    /// Repair samples judged in the repair language (source for direct rows).
    pub repair_reports: Vec<ExecutionReport>,
    /// Back-translations of target-correct samples, judged in the source language.
    pub back_reports: Vec<ExecutionReport>,
    pub n: u32,
    /// Correct samples in the repair language.
    pub target_correct: u32,
    /// Correct samples in the source language; the tally that counts.
    pub c: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct CampaignOutcome {
    pub state: RepairCampaignState,
    pub ledger: Vec<LedgerRow>,
    pub table: InitialPerformanceTable,
    /// Highest iteration index executed.
    pub last_iteration: u32,
    pub log: Vec<String>,
}

/// Optional pieces of a campaign.
#[derive(Default)]
pub struct CampaignOptions<'a> {
    /// Persist history here; in memory otherwise.
    pub history_path: Option<&'a Path>,
    /// Replaces the table computed from iteration 0.
    pub table_override: Option<InitialPerformanceTable>,
}

fn bug_context(corpus: &Corpus, bug: &BugInstance) -> BugContext {
    let p = corpus.problem_of(bug);
    BugContext {
        bug_id: bug.bug_id.clone(),
        source_language: bug.source_language,
        description: p.description.clone(),
        input_spec: p.input_spec.clone(),
        output_spec: p.output_spec.clone(),
        difficulty: p.difficulty,
        initial_outcome: bug.initial_outcome,
        error_type: bug.error_type.clone(),
    }
}

fn characteristics(corpus: &Corpus, bug: &BugInstance) -> Characteristics {
    Characteristics {
        language: bug.source_language,
        difficulty: corpus.difficulty_of(bug),
        outcome: bug.initial_outcome,
        error_type: bug.error_type.clone(),
    }
}

#[derive(Debug)]
enum StepError {
    Gateway(GatewayError),
    Exec(ExecError),
}

impl std::fmt::Display for StepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepError::Gateway(e) => write!(f, "{e}"),
            StepError::Exec(e) => write!(f, "{e}"),
        }
    }
}

impl From<GatewayError> for StepError {
    fn from(e: GatewayError) -> Self {
        StepError::Gateway(e)
    }
}

impl From<ExecError> for StepError {
    fn from(e: ExecError) -> Self {
        StepError::Exec(e)
    }
}

struct Engine<'a> {
    corpus: &'a Corpus,
    config: &'a RunConfig,
    executor: &'a dyn Executor,
    gateway: &'a Gateway,
}

impl Engine<'_> {
    fn seed(&self, bug: &BugInstance, iteration: u32, task: Task, index: usize) -> u64 {
        derive_seed(&[
            b"task",
            &self.config.seed.to_le_bytes(),
            bug.bug_id.as_bytes(),
            &iteration.to_le_bytes(),
            task.as_str().as_bytes(),
            &(index as u64).to_le_bytes(),
        ])
    }

    fn judge(&self, sample: &CodeSample, bug: &BugInstance) -> Result<ExecutionReport, ExecError> {
        self.executor.execute(sample, &self.corpus.problem_of(bug).tests)
    }

    fn base_row(&self, bug: &BugInstance, iteration: u32, mode: RowMode) -> LedgerRow {
        LedgerRow {
            bug_id: bug.bug_id.clone(),
            iteration,
            source_language: bug.source_language,
            difficulty: self.corpus.difficulty_of(bug),
            mode,
            target_language: None,
            decision: None,
            source_report: None,
            translation: None,
            repair_reports: Vec::new(),
            back_reports: Vec::new(),
            n: self.config.sample_count,
            target_correct: 0,
            c: 0,
            error: None,
        }
    }

    /// Repair in the source language; used at iteration 0 and for every
    /// iteration when translation is off.
    fn direct(&self, bug: &BugInstance, iteration: u32) -> LedgerRow {
        let mut row = self.base_row(bug, iteration, RowMode::Direct);
        if iteration == 0 {
            let sample = CodeSample {
                sample_id: format!("{}/source", bug.bug_id),
                bug_id: bug.bug_id.clone(),
                iteration: 0,
                language: bug.source_language,
                code: bug.code.clone(),
                provenance: Provenance::DirectRepair,
            };
            match self.judge(&sample, bug) {
                Ok(r) => row.source_report = Some(r),
                Err(e) => row.error = Some(format!("judging source: {e}")),
            }
        }
        let result = (|| -> Result<Vec<ExecutionReport>, StepError> {
            let req = TaskRequest::repair(
                bug_context(self.corpus, bug),
                iteration,
                bug.source_language,
                bug.code.clone(),
                bug.error_type.clone(),
                self.config.sample_count as usize,
                self.seed(bug, iteration, Task::Repair, 0),
            );
            let codes = self.gateway.generate_samples(&req)?;
            let mut reports = Vec::with_capacity(codes.len());
            for (i, code) in codes.into_iter().enumerate() {
                let s = CodeSample::new(bug, iteration, bug.source_language, Provenance::DirectRepair, i, code);
                reports.push(self.judge(&s, bug)?);
            }
            Ok(reports)
        })();
        match result {
            Ok(reports) => {
                let c = reports.iter().filter(|r| is_correct(r)).count() as u32;
                row.repair_reports = reports;
                row.target_correct = c;
                row.c = c;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }

    /// Translate, repair in `target`, back-translate and validate.
    fn translated(
        &self,
        bug: &BugInstance,
        iteration: u32,
        decision: DecisionRecord,
        source_report: Option<&ExecutionReport>,
    ) -> LedgerRow {
        let target = decision.chosen;
        let mut row = self.base_row(bug, iteration, RowMode::Translation);
        row.target_language = Some(target);
        row.decision = Some(decision);
        let ctx = bug_context(self.corpus, bug);
        let src = bug.source_language;

        let result = (|| -> Result<(), StepError> {
            let req = TaskRequest::translate(
                Task::Translate,
                ctx.clone(),
                iteration,
                src,
                target,
                bug.code.clone(),
                self.seed(bug, iteration, Task::Translate, 0),
            );
            let translated = self.gateway.generate_samples(&req)?.remove(0);
            let tsample = CodeSample::new(bug, iteration, target, Provenance::TranslatedBug, 0, translated.clone());
            let post = self.judge(&tsample, bug)?;
            if let Some(pre) = source_report {
                row.translation = Some(TranslationEvent::new(bug, iteration, target, pre, &post));
            }
            if translated.trim().is_empty() {
                // nothing to repair; the translation itself failed to produce code
                return Ok(());
            }

            let req = TaskRequest::repair(
                ctx.clone(),
                iteration,
                target,
                translated,
                post.aggregate.as_str().to_string(),
                self.config.sample_count as usize,
                self.seed(bug, iteration, Task::Repair, 0),
            );
            let codes = self.gateway.generate_samples(&req)?;
            for (i, code) in codes.into_iter().enumerate() {
                let s = CodeSample::new(bug, iteration, target, Provenance::TargetRepair, i, code);
                let report = self.judge(&s, bug)?;
                let ok = is_correct(&report);
                row.repair_reports.push(report);
                if !ok {
                    continue;
                }
                row.target_correct += 1;
                let req = TaskRequest::translate(
                    Task::BackTranslate,
                    ctx.clone(),
                    iteration,
                    target,
                    src,
                    s.code.clone(),
                    self.seed(bug, iteration, Task::BackTranslate, i),
                );
                let back = self.gateway.generate_samples(&req)?.remove(0);
                let bs = CodeSample::new(bug, iteration, src, Provenance::BackTranslated, i, back);
                let back_report = self.judge(&bs, bug)?;
                if is_correct(&back_report) {
                    row.c += 1;
                }
                row.back_reports.push(back_report);
            }
            Ok(())
        })();
        if let Err(e) = result {
            row.error = Some(e.to_string());
            row.c = 0;
        }
        row
    }
}

fn entry_for(
    store: &HistoryStore,
    corpus: &Corpus,
    bug: &BugInstance,
    row: &LedgerRow,
) -> Result<HistoryEntry, HistoryError> {
    let fixed = row.c > 0;
    let (source, successful, target) = match row.mode {
        RowMode::Direct => (
            HistorySource::InitialDirect,
            if fixed { vec![bug.source_language] } else { vec![] },
            None,
        ),
        RowMode::Translation => (
            HistorySource::TranslationBased,
            match (fixed, row.target_language) {
                (true, Some(t)) => vec![t],
                _ => vec![],
            },
            row.target_language,
        ),
    };
    store.make_entry(
        &bug.bug_id,
        source,
        characteristics(corpus, bug),
        RepairSummary {
            fixed,
            successful_targets: successful,
            n: row.n,
            c: row.c,
            target,
        },
        row.iteration,
    )
}

fn check_corpus(corpus: &Corpus, set: &LanguageSet) -> Result<(), CampaignError> {
    for b in &corpus.bugs {
        let fail = |message: String| CampaignError::Corpus {
            bug_id: b.bug_id.clone(),
            message,
        };
        if !set.contains(b.source_language) {
            return Err(fail(format!("language {} is not in the configured set", b.source_language)));
        }
        match corpus.problems.get(&b.problem_id) {
            None => return Err(fail(format!("unknown problem {}", b.problem_id))),
            Some(p) if p.tests.is_empty() => {
                return Err(fail(format!("problem {} has no tests", b.problem_id)))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Run a whole campaign over `corpus`.
pub fn run_campaign(
    corpus: &Corpus,
    config: &RunConfig,
    executor: &dyn Executor,
    gateway: &Gateway,
    options: CampaignOptions<'_>,
) -> Result<CampaignOutcome, CampaignError> {
    config.validate()?;
    check_corpus(corpus, &config.languages)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| CampaignError::Pool(e.to_string()))?;
    let engine = Engine {
        corpus,
        config,
        executor,
        gateway,
    };
    let encoder = Encoder::new(config.languages.clone());
    let mut store = match options.history_path {
        Some(p) => HistoryStore::open(p, encoder)?,
        None => HistoryStore::in_memory(encoder),
    };
    let max_iterations = config.max_iterations();
    let mut state = RepairCampaignState::new(&corpus.bugs, max_iterations);
    let mut ledger: Vec<LedgerRow> = Vec::new();
    let mut log = Vec::new();

    // iteration 0
    let rows: Vec<LedgerRow> = pool.install(|| corpus.bugs.par_iter().map(|b| engine.direct(b, 0)).collect());
    let source_reports: BTreeMap<String, ExecutionReport> = rows
        .iter()
        .filter_map(|r| r.source_report.clone().map(|s| (r.bug_id.clone(), s)))
        .collect();
    let mut batch = Vec::new();
    for (bug, row) in corpus.bugs.iter().zip(&rows) {
        state.mark_iteration_result(&bug.bug_id, 0, row.n, row.c)?;
        if config.history_enabled {
            batch.push(entry_for(&store, corpus, bug, row)?);
        }
    }
    if config.history_enabled {
        store.upsert_batch(batch)?;
    }
    let fixed0 = rows.iter().filter(|r| r.c > 0).count();
    log.push(format!("iteration 0: {} bugs, {fixed0} fixed", rows.len()));
    ledger.extend(rows);

    let table = match options.table_override {
        Some(t) => t,
        None => InitialPerformanceTable::from_tallies(
            state.bugs().iter().map(|b| {
                let t = b.tallies[&0];
                (b.source_language, t.n, t.c)
            }),
            config.pass_k,
        )?,
    };

    let mut last_iteration = 0;
    for iteration in 1..max_iterations {
        let active: Vec<(&BugInstance, Vec<LanguageId>)> = corpus
            .bugs
            .iter()
            .zip(state.bugs())
            .filter(|(_, p)| !p.fixed)
            .map(|(b, p)| (b, remaining_for(p, &config.languages)))
            .filter(|(_, rem)| !config.translation_enabled || !rem.is_empty())
            .collect();
        if active.is_empty() {
            break;
        }
        last_iteration = iteration;
        let selector = Selector {
            kind: config.strategy,
            run_seed: config.seed,
            table: &table,
            gateway: Some(gateway),
        };
        let store_ref = &store;
        let state_ref = &state;
        let rows: Vec<Result<LedgerRow, CampaignError>> = pool.install(|| {
            active
                .par_iter()
                .map(|(bug, remaining)| {
                    if !config.translation_enabled {
                        return Ok(engine.direct(bug, iteration));
                    }
                    let retrieval = if config.history_enabled {
                        Some(store_ref.retrieve(&bug.bug_id, &characteristics(corpus, bug), config.retrieval_k)?)
                    } else {
                        None
                    };
                    let attempted = &state_ref.bug(&bug.bug_id)?.attempted_targets;
                    let decision = selector.select(
                        &bug_context(corpus, bug),
                        iteration,
                        remaining,
                        attempted,
                        retrieval.as_ref(),
                    )?;
                    Ok(engine.translated(bug, iteration, decision, source_reports.get(&bug.bug_id)))
                })
                .collect()
        });

        let mut batch = Vec::new();
        let mut fixed = 0;
        let mut count = 0;
        for ((bug, _), row) in active.iter().zip(rows) {
            let row = row?;
            if let Some(t) = row.target_language {
                state.record_target(&bug.bug_id, t)?;
            }
            state.mark_iteration_result(&bug.bug_id, iteration, row.n, row.c)?;
            if config.history_enabled && row.mode == RowMode::Translation {
                batch.push(entry_for(&store, corpus, bug, &row)?);
            }
            fixed += usize::from(row.c > 0);
            count += 1;
            ledger.push(row);
        }
        if !batch.is_empty() {
            store.upsert_batch(batch)?;
        }
        log.push(format!("iteration {iteration}: {count} bugs, {fixed} fixed"));
    }

    Ok(CampaignOutcome {
        state,
        ledger,
        table,
        last_iteration,
        log,
    })
}

/// Targets attempted for a bug up to and including its fixing iteration.
pub fn translation_path(
    state: &RepairCampaignState,
    bug_id: &str,
) -> Result<Vec<LanguageId>, ModelError> {
    let b = state.bug(bug_id)?;
    let mut path = b.attempted_targets.clone();
    if let Some(f) = b.fixed_iteration {
        path.truncate(f as usize);
    }
    Ok(path)
}

/// Mean path length over fixed bugs; `None` when no bug qualifies.
pub fn mean_path_length(state: &RepairCampaignState, convention: PathConvention) -> Option<f64> {
    let lens: Vec<usize> = state
        .bugs()
        .iter()
        .filter(|b| b.fixed)
        .map(|b| translation_path(state, &b.bug_id).expect("bug exists").len())
        .filter(|len| convention == PathConvention::AllFixed || *len > 0)
        .collect();
    if lens.is_empty() {
        return None;
    }
    Some(lens.iter().sum::<usize>() as f64 / lens.len() as f64)
}
