//! Uniform access to the repair / translation / decision model.
//!
//! The gateway owns prompt construction, response parsing, retries and the
//! in-flight cap. Backends only turn a prompt into raw completions.

mod follow;
mod http;
mod parse;
mod prompt;
mod scripted;
mod stochastic;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LanguageId, OutcomeCategory};

pub use follow::{follow_history, parse_feedback_line};
pub use http::{HttpBackend, HttpConfig};
pub use parse::{extract_code, parse_final_answer};
pub use prompt::{build_prompt, NO_RECORDS};
pub use scripted::{parse_fixture_line, FixtureEntry, ScriptedBackend};
pub use stochastic::{FixProbabilityTable, StochasticBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Task {
    Repair,
    Translate,
    BackTranslate,
    DecideTarget,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Repair => "REPAIR",
            Task::Translate => "TRANSLATE",
            Task::BackTranslate => "BACK_TRANSLATE",
            Task::DecideTarget => "DECIDE_TARGET",
        }
    }
}

/// What the model needs to know about the bug being worked on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugContext {
    pub bug_id: String,
    pub source_language: LanguageId,
    pub description: String,
    pub input_spec: String,
    pub output_spec: String,
    pub difficulty: u32,
    pub initial_outcome: OutcomeCategory,
    pub error_type: String,
}

/// One retrieved historical repair, as shown to the decision model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub bug_id: String,
    pub similarity: f64,
    pub language: LanguageId,
    pub difficulty: u32,
    pub outcome: OutcomeCategory,
    pub error_type: String,
    pub target: Option<LanguageId>,
    pub fixed: bool,
    pub successful_targets: Vec<LanguageId>,
    pub n: u32,
    pub c: u32,
}

/// The two feedback partitions rendered into a decision prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryContext {
    pub initial: Vec<FeedbackRecord>,
    pub translation: Vec<FeedbackRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub task: Task,
    pub bug: BugContext,
    pub iteration: u32,
    /// Code the task operates on. Empty for decisions.
    pub code: String,
    /// Language of `code`; for decisions, the bug's source language.
    pub language: LanguageId,
    /// Destination language for translation tasks.
    pub target_language: Option<LanguageId>,
    /// Error label shown in repair prompts.
    pub error_type: String,
    pub candidates: Vec<LanguageId>,
    pub attempted: Vec<LanguageId>,
    pub history: Option<HistoryContext>,
    pub sample_count: usize,
    pub seed: u64,
    pub temperature: Option<f64>,
}

impl TaskRequest {
    fn base(task: Task, bug: BugContext, iteration: u32, seed: u64) -> Self {
        let language = bug.source_language;
        let error_type = bug.error_type.clone();
        TaskRequest {
            task,
            bug,
            iteration,
            code: String::new(),
            language,
            target_language: None,
            error_type,
            candidates: Vec::new(),
            attempted: Vec::new(),
            history: None,
            sample_count: 1,
            seed,
            temperature: None,
        }
    }

    pub fn repair(
        bug: BugContext,
        iteration: u32,
        language: LanguageId,
        code: String,
        error_type: String,
        sample_count: usize,
        seed: u64,
    ) -> Self {
        TaskRequest {
            code,
            language,
            error_type,
            sample_count,
            ..Self::base(Task::Repair, bug, iteration, seed)
        }
    }

    pub fn translate(
        task: Task,
        bug: BugContext,
        iteration: u32,
        from: LanguageId,
        to: LanguageId,
        code: String,
        seed: u64,
    ) -> Self {
        debug_assert!(matches!(task, Task::Translate | Task::BackTranslate));
        TaskRequest {
            code,
            language: from,
            target_language: Some(to),
            ..Self::base(task, bug, iteration, seed)
        }
    }

    pub fn decide(
        bug: BugContext,
        iteration: u32,
        candidates: Vec<LanguageId>,
        attempted: Vec<LanguageId>,
        history: Option<HistoryContext>,
        seed: u64,
    ) -> Self {
        TaskRequest {
            candidates,
            attempted,
            history,
            ..Self::base(Task::DecideTarget, bug, iteration, seed)
        }
    }

    /// The language a fixture or stochastic table keys this request by.
    pub fn key_language(&self) -> LanguageId {
        match self.task {
            Task::Repair => self.language,
            Task::Translate | Task::BackTranslate => self.target_language.unwrap_or(self.language),
            Task::DecideTarget => self.bug.source_language,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub chosen_language: LanguageId,
    pub rationale: String,
    pub fallback: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Connection-level failures; retried.
    #[error("transport: {0}")]
    Transport(String),
    /// The backend answered but the answer is unusable; never retried.
    #[error("content: {0}")]
    Content(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("request is missing `{0}`")]
    MissingField(&'static str),
    #[error("decision request has no candidate languages")]
    NoCandidates,
    #[error("{task} failed after {attempts} attempt(s): {source}")]
    Backend {
        task: &'static str,
        attempts: u32,
        #[source]
        source: BackendError,
    },
}

/// A model that turns prompts into completions.
pub trait ModelBackend: Send + Sync {
    /// Return up to `request.sample_count` raw completions for `prompt`.
    fn complete(&self, request: &TaskRequest, prompt: &str) -> Result<Vec<String>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct Gateway {
    backend: Arc<dyn ModelBackend>,
    retry: RetryPolicy,
    slots: Slots,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ModelBackend>, max_in_flight: usize) -> Self {
        Gateway {
            backend,
            retry: RetryPolicy::default(),
            slots: Slots {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn call(&self, request: &TaskRequest, prompt: &str) -> Result<Vec<String>, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _slot = self.slots.acquire();
                self.backend.complete(request, prompt)
            };
            match result {
                Ok(v) => return Ok(v),
                Err(BackendError::Transport(_)) if attempt < self.retry.attempts => {
                    std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
                }
                Err(source) => {
                    return Err(GatewayError::Backend {
                        task: request.task.as_str(),
                        attempts: attempt,
                        source,
                    })
                }
            }
        }
    }

    /// Generate exactly `sample_count` code texts for a repair or translation task.
    pub fn generate_samples(&self, request: &TaskRequest) -> Result<Vec<String>, GatewayError> {
        if request.task == Task::DecideTarget {
            return Err(GatewayError::MissingField("code"));
        }
        let prompt = build_prompt(request)?;
        let want = request.sample_count.max(1);
        let mut out = Vec::with_capacity(want);
        let mut empty_rounds = 0;
        while out.len() < want {
            let mut req = request.clone();
            req.sample_count = want - out.len();
            let texts = self.call(&req, &prompt)?;
            if texts.is_empty() {
                empty_rounds += 1;
                if empty_rounds >= self.retry.attempts {
                    return Err(GatewayError::Backend {
                        task: request.task.as_str(),
                        attempts: empty_rounds,
                        source: BackendError::Content("backend returned no completions".into()),
                    });
                }
                continue;
            }
            out.extend(texts.iter().map(|t| extract_code(t)));
        }
        out.truncate(want);
        Ok(out)
    }

    /// Ask the model for a target language. Replies that don't name a
    /// candidate resolve to `fallback(candidates)` with rationale "fallback".
    pub fn decide_target(
        &self,
        request: &TaskRequest,
        fallback: impl FnOnce(&[LanguageId]) -> LanguageId,
    ) -> Result<DecisionResponse, GatewayError> {
        if request.task != Task::DecideTarget {
            return Err(GatewayError::MissingField("candidates"));
        }
        if request.candidates.is_empty() {
            return Err(GatewayError::NoCandidates);
        }
        if let [only] = request.candidates[..] {
            return Ok(DecisionResponse {
                chosen_language: only,
                rationale: "only remaining candidate".into(),
                fallback: false,
            });
        }
        let prompt = build_prompt(request)?;
        let reply = self.call(request, &prompt)?.into_iter().next().unwrap_or_default();
        match parse_final_answer(&reply) {
            Some(lang) if request.candidates.contains(&lang) => Ok(DecisionResponse {
                chosen_language: lang,
                rationale: reply,
                fallback: false,
            }),
            _ => Ok(DecisionResponse {
                chosen_language: fallback(&request.candidates),
                rationale: "fallback".into(),
                fallback: true,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    pub(crate) fn ctx() -> BugContext {
        BugContext {
            bug_id: "b1".into(),
            source_language: LanguageId::C,
            description: "Sum two integers.".into(),
            input_spec: "Two integers a and b.".into(),
            output_spec: "Print a+b.".into(),
            difficulty: 1200,
            initial_outcome: OutcomeCategory::WrongAnswer,
            error_type: "WRONG_ANSWER".into(),
        }
    }

    struct Canned(Vec<String>);
    impl ModelBackend for Canned {
        fn complete(&self, r: &TaskRequest, _: &str) -> Result<Vec<String>, BackendError> {
            Ok(self.0.iter().cycle().take(r.sample_count).cloned().collect())
        }
    }

    struct Flaky {
        calls: AtomicUsize,
        failures: usize,
        kind: fn(String) -> BackendError,
    }
    impl ModelBackend for Flaky {
        fn complete(&self, r: &TaskRequest, _: &str) -> Result<Vec<String>, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                return Err((self.kind)("boom".into()));
            }
            Ok(vec!["```c\nint main(){}\n```".into(); r.sample_count])
        }
    }

    fn no_delay() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::ZERO,
        }
    }

    #[test]
    fn generates_exact_count() {
        let gw = Gateway::new(Arc::new(Canned(vec!["```c\nx\n```".into()])), 4);
        let req = TaskRequest::repair(ctx(), 0, LanguageId::C, "x".into(), "WA".into(), 20, 0);
        let out = gw.generate_samples(&req).unwrap();
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|s| s == "x"));
    }

    #[test]
    fn unfenced_reply_is_empty_sample() {
        let gw = Gateway::new(Arc::new(Canned(vec!["I cannot help".into()])), 1);
        let req = TaskRequest::repair(ctx(), 0, LanguageId::C, "x".into(), "WA".into(), 1, 0);
        assert_eq!(gw.generate_samples(&req).unwrap(), vec![String::new()]);
    }

    #[test]
    fn transport_errors_are_retried_content_errors_not() {
        let flaky = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            failures: 2,
            kind: BackendError::Transport,
        });
        let gw = Gateway::new(flaky.clone(), 1).with_retry(no_delay());
        let req = TaskRequest::repair(ctx(), 0, LanguageId::C, "x".into(), "WA".into(), 2, 0);
        assert_eq!(gw.generate_samples(&req).unwrap().len(), 2);
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);

        let flaky = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            failures: 5,
            kind: BackendError::Transport,
        });
        let gw = Gateway::new(flaky.clone(), 1).with_retry(no_delay());
        match gw.generate_samples(&req) {
            Err(GatewayError::Backend { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }

        let flaky = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            failures: 5,
            kind: BackendError::Content,
        });
        let gw = Gateway::new(flaky.clone(), 1).with_retry(no_delay());
        assert!(gw.generate_samples(&req).is_err());
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn decisions_validate_against_candidates() {
        use LanguageId::*;
        let req = |cands: Vec<LanguageId>| TaskRequest::decide(ctx(), 1, cands, vec![Kotlin], None, 0);

        let gw = Gateway::new(Arc::new(Canned(vec!["thinking...\nFinal choice:\nTARGET: C++".into()])), 1);
        let d = gw.decide_target(&req(vec![Cpp, Go]), |c| c[0]).unwrap();
        assert_eq!(d.chosen_language, Cpp);
        assert!(!d.fallback);

        let gw = Gateway::new(Arc::new(Canned(vec!["TARGET: Kotlin".into()])), 1);
        let d = gw.decide_target(&req(vec![Cpp, Go]), |c| c[1]).unwrap();
        assert_eq!(d.chosen_language, Go);
        assert_eq!(d.rationale, "fallback");
        assert!(d.fallback);

        let gw = Gateway::new(Arc::new(Canned(vec!["TARGET: Rust".into()])), 1);
        let d = gw.decide_target(&req(vec![Go]), |_| unreachable!()).unwrap();
        assert_eq!(d.chosen_language, Go);

        assert!(matches!(
            gw.decide_target(&req(vec![]), |c| c[0]),
            Err(GatewayError::NoCandidates)
        ));
    }

    #[test]
    fn in_flight_cap_is_enforced() {
        struct Counting {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl ModelBackend for Counting {
            fn complete(&self, r: &TaskRequest, _: &str) -> Result<Vec<String>, BackendError> {
                let cur = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(cur, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(vec!["```\nx\n```".into(); r.sample_count])
            }
        }
        let backend = Arc::new(Counting {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let gw = Gateway::new(backend.clone(), 2);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let req = TaskRequest::repair(ctx(), 0, LanguageId::C, "x".into(), "WA".into(), 1, 0);
                    gw.generate_samples(&req).unwrap();
                });
            }
        });
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
    }
}
