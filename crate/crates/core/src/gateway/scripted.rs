use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{follow_history, BackendError, ModelBackend, Task, TaskRequest};
use crate::model::LanguageId;

/// One fixture line: canned replies for a (bug, task, language) key,
/// optionally pinned to an iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub bug_id: String,
    pub task: Task,
    pub language: LanguageId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u32>,
    pub responses: Vec<String>,
}

pub fn parse_fixture_line(line: &str) -> Result<FixtureEntry, String> {
    let entry: FixtureEntry = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if entry.responses.is_empty() {
        return Err("fixture entry has no responses".into());
    }
    if entry.bug_id.is_empty() {
        return Err("fixture entry has an empty bug_id".into());
    }
    Ok(entry)
}

type Key = (String, Task, LanguageId, Option<u32>);

/// Replays recorded replies. Keys are the bug, task and the request's key
/// language (see [`TaskRequest::key_language`]); an iteration-pinned entry
/// wins over an unpinned one.
///
/// Unscripted requests get neutral answers: repairs yield no code,
/// translations echo their input, and decisions follow the history blocks.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    entries: BTreeMap<Key, Vec<String>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: FixtureEntry) {
        self.entries.insert(
            (entry.bug_id, entry.task, entry.language, entry.iteration),
            entry.responses,
        );
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut backend = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            backend.insert(parse_fixture_line(line).map_err(|e| format!("line {}: {e}", i + 1))?);
        }
        Ok(backend)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_jsonl(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, r: &TaskRequest) -> Option<&Vec<String>> {
        let lang = r.key_language();
        let id = r.bug.bug_id.clone();
        self.entries
            .get(&(id.clone(), r.task, lang, Some(r.iteration)))
            .or_else(|| self.entries.get(&(id, r.task, lang, None)))
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, r: &TaskRequest, prompt: &str) -> Result<Vec<String>, BackendError> {
        let n = r.sample_count.max(1);
        if let Some(responses) = self.lookup(r) {
            return Ok(responses.iter().cycle().take(n).cloned().collect());
        }
        let reply = match r.task {
            Task::Repair => "no fixture for this request".to_string(),
            Task::Translate | Task::BackTranslate => {
                let to = r.target_language.unwrap_or(r.language);
                format!("```{}\n{}\n```", to.fence_tag(), r.code)
            }
            Task::DecideTarget => follow_history(prompt, &r.candidates, r.seed),
        };
        Ok(vec![reply; n])
    }
}
