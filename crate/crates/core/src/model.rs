//! Domain vocabulary shared by the whole engine: languages, outcomes, bugs,
//! samples and per-bug campaign bookkeeping.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MIN_DIFFICULTY: u32 = 800;
pub const MAX_DIFFICULTY: u32 = 3500;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown language tag `{0}`")]
    UnknownLanguage(String),
    #[error("unknown outcome category `{0}`")]
    UnknownOutcome(String),
    #[error("unknown bug `{0}`")]
    UnknownBug(String),
    #[error("bug `{bug_id}` already has a record for iteration {iteration}")]
    DuplicateIteration { bug_id: String, iteration: u32 },
    #[error("invalid tally n={n} c={c}: need n >= c >= 0")]
    InvalidTally { n: u32, c: u32 },
    #[error("language set is empty")]
    EmptyLanguageSet,
    #[error("language {0} appears twice in the language set")]
    DuplicateLanguage(LanguageId),
    #[error("{0} is not a member of the configured language set")]
    NotInSet(LanguageId),
    #[error("{0} was already attempted for bug `{1}`")]
    RepeatedTarget(LanguageId, String),
    #[error("{0} is the source language of bug `{1}`")]
    SourceAsTarget(LanguageId, String),
}

/// One of the programming languages the engine knows how to route bugs through.
///
/// Variant order is the canonical declaration order and doubles as the
/// default language-set order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LanguageId {
    C,
    CSharp,
    Cpp,
    Go,
    Java,
    JavaScript,
    Kotlin,
    Php,
    Python,
    Ruby,
    Rust,
}

impl LanguageId {
    pub const ALL: [LanguageId; 11] = [
        LanguageId::C,
        LanguageId::CSharp,
        LanguageId::Cpp,
        LanguageId::Go,
        LanguageId::Java,
        LanguageId::JavaScript,
        LanguageId::Kotlin,
        LanguageId::Php,
        LanguageId::Python,
        LanguageId::Ruby,
        LanguageId::Rust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LanguageId::C => "C",
            LanguageId::CSharp => "C#",
            LanguageId::Cpp => "C++",
            LanguageId::Go => "Go",
            LanguageId::Java => "Java",
            LanguageId::JavaScript => "JavaScript",
            LanguageId::Kotlin => "Kotlin",
            LanguageId::Php => "PHP",
            LanguageId::Python => "Python",
            LanguageId::Ruby => "Ruby",
            LanguageId::Rust => "Rust",
        }
    }

    /// Info string used on markdown code fences.
    pub fn fence_tag(self) -> &'static str {
        match self {
            LanguageId::C => "c",
            LanguageId::CSharp => "csharp",
            LanguageId::Cpp => "cpp",
            LanguageId::Go => "go",
            LanguageId::Java => "java",
            LanguageId::JavaScript => "javascript",
            LanguageId::Kotlin => "kotlin",
            LanguageId::Php => "php",
            LanguageId::Python => "python",
            LanguageId::Ruby => "ruby",
            LanguageId::Rust => "rust",
        }
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LanguageId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        let lang = match key.as_str() {
            "c" => LanguageId::C,
            "c#" | "csharp" | "cs" => LanguageId::CSharp,
            "c++" | "cpp" | "cxx" => LanguageId::Cpp,
            "go" | "golang" => LanguageId::Go,
            "java" => LanguageId::Java,
            "javascript" | "js" | "node" => LanguageId::JavaScript,
            "kotlin" | "kt" => LanguageId::Kotlin,
            "php" => LanguageId::Php,
            "python" | "py" | "python3" => LanguageId::Python,
            "ruby" | "rb" => LanguageId::Ruby,
            "rust" | "rs" => LanguageId::Rust,
            _ => return Err(ModelError::UnknownLanguage(s.to_string())),
        };
        Ok(lang)
    }
}

impl Serialize for LanguageId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for LanguageId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// The ordered set of languages a campaign works over. Order is used for
/// every deterministic tie-break.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct LanguageSet(Vec<LanguageId>);

impl LanguageSet {
    pub fn new(languages: Vec<LanguageId>) -> Result<Self, ModelError> {
        if languages.is_empty() {
            return Err(ModelError::EmptyLanguageSet);
        }
        for (i, lang) in languages.iter().enumerate() {
            if languages[..i].contains(lang) {
                return Err(ModelError::DuplicateLanguage(*lang));
            }
        }
        Ok(LanguageSet(languages))
    }

    pub fn contains(&self, lang: LanguageId) -> bool {
        self.0.contains(&lang)
    }

    /// Position of `lang` in the set, used as the tie-break rank.
    pub fn rank(&self, lang: LanguageId) -> Option<usize> {
        self.0.iter().position(|l| *l == lang)
    }

    pub fn index(&self, lang: LanguageId) -> Option<usize> {
        self.rank(lang)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = LanguageId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[LanguageId] {
        &self.0
    }
}

impl Default for LanguageSet {
    fn default() -> Self {
        LanguageSet(LanguageId::ALL.to_vec())
    }
}

impl<'de> Deserialize<'de> for LanguageSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let langs = Vec::<LanguageId>::deserialize(deserializer)?;
        LanguageSet::new(langs).map_err(serde::de::Error::custom)
    }
}

/// Six-way execution verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeCategory {
    CompilationError,
    RuntimeError,
    MemoryLimitExceeded,
    TimeLimitExceeded,
    WrongAnswer,
    Passed,
}

impl OutcomeCategory {
    pub const ALL: [OutcomeCategory; 6] = [
        OutcomeCategory::CompilationError,
        OutcomeCategory::RuntimeError,
        OutcomeCategory::MemoryLimitExceeded,
        OutcomeCategory::TimeLimitExceeded,
        OutcomeCategory::WrongAnswer,
        OutcomeCategory::Passed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeCategory::CompilationError => "COMPILATION_ERROR",
            OutcomeCategory::RuntimeError => "RUNTIME_ERROR",
            OutcomeCategory::MemoryLimitExceeded => "MEMORY_LIMIT_EXCEEDED",
            OutcomeCategory::TimeLimitExceeded => "TIME_LIMIT_EXCEEDED",
            OutcomeCategory::WrongAnswer => "WRONG_ANSWER",
            OutcomeCategory::Passed => "PASSED",
        }
    }

    /// Position in [`OutcomeCategory::ALL`]; used for one-hot encodings and matrices.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OutcomeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeCategory {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase().replace([' ', '-'], "_");
        let cat = match key.as_str() {
            "COMPILATION_ERROR" | "CE" => OutcomeCategory::CompilationError,
            "RUNTIME_ERROR" | "RE" => OutcomeCategory::RuntimeError,
            "MEMORY_LIMIT_EXCEEDED" | "MLE" => OutcomeCategory::MemoryLimitExceeded,
            "TIME_LIMIT_EXCEEDED" | "TLE" => OutcomeCategory::TimeLimitExceeded,
            "WRONG_ANSWER" | "WA" => OutcomeCategory::WrongAnswer,
            "PASSED" | "OK" | "AC" => OutcomeCategory::Passed,
            _ => return Err(ModelError::UnknownOutcome(s.to_string())),
        };
        Ok(cat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
    pub time_limit_ms: u64,
    pub memory_limit_mib: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub problem_id: String,
    pub description: String,
    pub input_spec: String,
    pub output_spec: String,
    pub difficulty: u32,
    pub tests: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugInstance {
    pub bug_id: String,
    pub source_language: LanguageId,
    pub code: String,
    pub problem_id: String,
    pub initial_outcome: OutcomeCategory,
    pub error_type: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    DirectRepair,
    TranslatedBug,
    TargetRepair,
    BackTranslated,
}

/// One piece of generated (or translated) code awaiting judgement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSample {
    pub sample_id: String,
    pub bug_id: String,
    pub iteration: u32,
    pub language: LanguageId,
    pub code: String,
    pub provenance: Provenance,
}

impl CodeSample {
    pub fn new(
        bug: &BugInstance,
        iteration: u32,
        language: LanguageId,
        provenance: Provenance,
        index: usize,
        code: String,
    ) -> Self {
        let tag = match provenance {
            Provenance::DirectRepair => "direct",
            Provenance::TranslatedBug => "translated",
            Provenance::TargetRepair => "target",
            Provenance::BackTranslated => "back",
        };
        CodeSample {
            sample_id: format!("{}/it{}/{}/{}", bug.bug_id, iteration, tag, index),
            bug_id: bug.bug_id.clone(),
            iteration,
            language,
            code,
            provenance,
        }
    }
}

/// Samples generated / samples correct for one (bug, iteration).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub n: u32,
    pub c: u32,
}

/// Campaign progress for a single bug.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugProgress {
    pub bug_id: String,
    pub source_language: LanguageId,
    pub fixed: bool,
    pub fixed_iteration: Option<u32>,
    pub attempted_targets: Vec<LanguageId>,
    pub tallies: BTreeMap<u32, Tally>,
}

impl BugProgress {
    fn new(bug: &BugInstance) -> Self {
        BugProgress {
            bug_id: bug.bug_id.clone(),
            source_language: bug.source_language,
            fixed: false,
            fixed_iteration: None,
            attempted_targets: Vec::new(),
            tallies: BTreeMap::new(),
        }
    }
}

/// Per-bug iteration history for a whole campaign, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairCampaignState {
    pub max_iterations: u32,
    bugs: Vec<BugProgress>,
}

impl RepairCampaignState {
    pub fn new<'a>(bugs: impl IntoIterator<Item = &'a BugInstance>, max_iterations: u32) -> Self {
        RepairCampaignState {
            max_iterations,
            bugs: bugs.into_iter().map(BugProgress::new).collect(),
        }
    }

    pub fn from_progress(bugs: Vec<BugProgress>, max_iterations: u32) -> Self {
        RepairCampaignState {
            max_iterations,
            bugs,
        }
    }

    pub fn bugs(&self) -> &[BugProgress] {
        &self.bugs
    }

    pub fn bug(&self, bug_id: &str) -> Result<&BugProgress, ModelError> {
        self.bugs
            .iter()
            .find(|b| b.bug_id == bug_id)
            .ok_or_else(|| ModelError::UnknownBug(bug_id.to_string()))
    }

    fn bug_mut(&mut self, bug_id: &str) -> Result<&mut BugProgress, ModelError> {
        self.bugs
            .iter_mut()
            .find(|b| b.bug_id == bug_id)
            .ok_or_else(|| ModelError::UnknownBug(bug_id.to_string()))
    }

    /// Record the tallies of one (bug, iteration). The first iteration with
    /// `c > 0` becomes the fixing iteration; later successes don't move it.
    pub fn mark_iteration_result(
        &mut self,
        bug_id: &str,
        iteration: u32,
        n: u32,
        c: u32,
    ) -> Result<(), ModelError> {
        if c > n {
            return Err(ModelError::InvalidTally { n, c });
        }
        let bug = self.bug_mut(bug_id)?;
        if bug.tallies.contains_key(&iteration) {
            return Err(ModelError::DuplicateIteration {
                bug_id: bug_id.to_string(),
                iteration,
            });
        }
        bug.tallies.insert(iteration, Tally { n, c });
        if c > 0 && !bug.fixed {
            bug.fixed = true;
            bug.fixed_iteration = Some(iteration);
        }
        Ok(())
    }

    /// Register `target` as attempted for the bug. Rejects repeats and the
    /// source language.
    pub fn record_target(&mut self, bug_id: &str, target: LanguageId) -> Result<(), ModelError> {
        let bug = self.bug_mut(bug_id)?;
        if target == bug.source_language {
            return Err(ModelError::SourceAsTarget(target, bug_id.to_string()));
        }
        if bug.attempted_targets.contains(&target) {
            return Err(ModelError::RepeatedTarget(target, bug_id.to_string()));
        }
        bug.attempted_targets.push(target);
        Ok(())
    }

    /// Languages still available as translation targets for `bug_id`, in set order.
    pub fn remaining_targets(
        &self,
        bug_id: &str,
        language_set: &LanguageSet,
    ) -> Result<Vec<LanguageId>, ModelError> {
        let bug = self.bug(bug_id)?;
        Ok(remaining_for(bug, language_set))
    }
}

pub(crate) fn remaining_for(bug: &BugProgress, language_set: &LanguageSet) -> Vec<LanguageId> {
    language_set
        .iter()
        .filter(|l| *l != bug.source_language && !bug.attempted_targets.contains(l))
        .collect()
}
