//! Loading multilingual bug corpora from disk.
//!
//! Layout under a corpus root:
//!
//! ```text
//! problems.jsonl          one problem per line
//! bugs/<language>.jsonl   one buggy submission per line
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BugInstance, LanguageId, LanguageSet, OutcomeCategory, ProblemSpec, TestCase, MAX_DIFFICULTY,
    MIN_DIFFICULTY,
};

pub const DEFAULT_TIME_LIMIT_MS: u64 = 2000;
pub const DEFAULT_MEMORY_LIMIT_MIB: u64 = 256;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("bug `{bug_id}` references missing problem `{problem_id}`")]
    MissingProblem { bug_id: String, problem_id: String },
    #[error("duplicate bug id `{0}`")]
    DuplicateBug(String),
    #[error("duplicate problem id `{0}`")]
    DuplicateProblem(String),
}

/// Raw bug record as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BugRecord {
    pub bug_id: String,
    pub lang: String,
    pub source_code: String,
    pub problem_id: String,
    pub exec_outcome: String,
    pub difficulty: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestRecord {
    pub input: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_limit_mib: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemRecord {
    pub problem_id: String,
    pub description: String,
    pub input_spec: String,
    pub output_spec: String,
    pub tests: Vec<TestRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_limit_mib: Option<u64>,
}

/// A validated bug record: language and outcome parsed, difficulty in range.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedBug {
    pub bug: BugInstance,
    pub difficulty: u32,
}

/// Parse one line of a `bugs/*.jsonl` file.
pub fn parse_bug_line(line: &str) -> Result<ParsedBug, String> {
    let rec: BugRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let lang: LanguageId = rec.lang.parse().map_err(|e: crate::model::ModelError| e.to_string())?;
    let outcome: OutcomeCategory = rec
        .exec_outcome
        .parse()
        .map_err(|e: crate::model::ModelError| e.to_string())?;
    if outcome == OutcomeCategory::Passed {
        return Err(format!("bug `{}` has outcome PASSED", rec.bug_id));
    }
    if !(MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&rec.difficulty) {
        return Err(format!(
            "difficulty {} outside [{MIN_DIFFICULTY}, {MAX_DIFFICULTY}]",
            rec.difficulty
        ));
    }
    if rec.bug_id.is_empty() {
        return Err("empty bug_id".into());
    }
    Ok(ParsedBug {
        bug: BugInstance {
            bug_id: rec.bug_id,
            source_language: lang,
            code: rec.source_code,
            problem_id: rec.problem_id,
            initial_outcome: outcome,
            error_type: rec.exec_outcome,
        },
        difficulty: rec.difficulty,
    })
}

/// Parse one line of `problems.jsonl`. Difficulty is filled in later from
/// the bugs that reference the problem.
pub fn parse_problem_line(line: &str) -> Result<ProblemSpec, String> {
    let rec: ProblemRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.problem_id.is_empty() {
        return Err("empty problem_id".into());
    }
    let default_time = rec.time_limit_ms.unwrap_or(DEFAULT_TIME_LIMIT_MS);
    let default_mem = rec.memory_limit_mib.unwrap_or(DEFAULT_MEMORY_LIMIT_MIB);
    let mut tests = Vec::with_capacity(rec.tests.len());
    for (i, t) in rec.tests.into_iter().enumerate() {
        let time_limit_ms = t.time_limit_ms.unwrap_or(default_time);
        let memory_limit_mib = t.memory_limit_mib.unwrap_or(default_mem);
        if time_limit_ms == 0 || memory_limit_mib == 0 {
            return Err(format!("test {i}: limits must be strictly positive"));
        }
        tests.push(TestCase {
            input: t.input,
            expected_output: t.output,
            time_limit_ms,
            memory_limit_mib,
        });
    }
    Ok(ProblemSpec {
        problem_id: rec.problem_id,
        description: rec.description,
        input_spec: rec.input_spec,
        output_spec: rec.output_spec,
        difficulty: 0,
        tests,
    })
}

/// Per-language bug counts of a loaded corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub language_counts: BTreeMap<LanguageId, usize>,
    pub total: usize,
}

impl CorpusManifest {
    pub fn from_bugs(root: PathBuf, bugs: &[BugInstance]) -> Self {
        let mut language_counts = BTreeMap::new();
        for b in bugs {
            *language_counts.entry(b.source_language).or_insert(0) += 1;
        }
        CorpusManifest {
            root,
            language_counts,
            total: bugs.len(),
        }
    }
}

/// Bugs plus the problems they reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub bugs: Vec<BugInstance>,
    pub problems: BTreeMap<String, ProblemSpec>,
}

impl Corpus {
    pub fn problem_of(&self, bug: &BugInstance) -> &ProblemSpec {
        &self.problems[&bug.problem_id]
    }

    pub fn difficulty_of(&self, bug: &BugInstance) -> u32 {
        self.problem_of(bug).difficulty
    }

    pub fn bug(&self, bug_id: &str) -> Option<&BugInstance> {
        self.bugs.iter().find(|b| b.bug_id == bug_id)
    }

    /// Stable digest over bug ids, languages and code; two runs over the same
    /// corpus share it.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for b in &self.bugs {
            h.update(b.bug_id.as_bytes());
            h.update([0]);
            h.update(b.source_language.name().as_bytes());
            h.update([0]);
            h.update(b.code.as_bytes());
            h.update([0xff]);
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load `problems.jsonl` and every `bugs/*.jsonl` under `root`.
///
/// Bug files are read in file-name order and records keep their line order,
/// so loading is deterministic.
pub fn load_corpus(root: &Path) -> Result<(Corpus, CorpusManifest), CorpusError> {
    let problems_path = root.join("problems.jsonl");
    let mut problems = BTreeMap::new();
    for (i, line) in read(&problems_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p = parse_problem_line(line).map_err(|message| CorpusError::Malformed {
            path: problems_path.clone(),
            line: i + 1,
            message,
        })?;
        if problems.contains_key(&p.problem_id) {
            return Err(CorpusError::DuplicateProblem(p.problem_id));
        }
        problems.insert(p.problem_id.clone(), p);
    }

    let bugs_dir = root.join("bugs");
    let mut files: Vec<PathBuf> = fs::read_dir(&bugs_dir)
        .map_err(|source| CorpusError::Io {
            path: bugs_dir.clone(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();

    let mut bugs = Vec::new();
    let mut seen = BTreeSet::new();
    let mut difficulty: BTreeMap<String, (u32, String)> = BTreeMap::new();
    for file in &files {
        let file_lang = file
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<LanguageId>().ok());
        for (i, line) in read(file)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| CorpusError::Malformed {
                path: file.clone(),
                line: i + 1,
                message,
            };
            let parsed = parse_bug_line(line).map_err(malformed)?;
            if let Some(fl) = file_lang {
                if fl != parsed.bug.source_language {
                    return Err(malformed(format!(
                        "record language {} in file for {fl}",
                        parsed.bug.source_language
                    )));
                }
            }
            if !seen.insert(parsed.bug.bug_id.clone()) {
                return Err(CorpusError::DuplicateBug(parsed.bug.bug_id));
            }
            if !problems.contains_key(&parsed.bug.problem_id) {
                return Err(CorpusError::MissingProblem {
                    bug_id: parsed.bug.bug_id,
                    problem_id: parsed.bug.problem_id,
                });
            }
            match difficulty.get(&parsed.bug.problem_id) {
                Some((d, other)) if *d != parsed.difficulty => {
                    return Err(malformed(format!(
                        "difficulty {} conflicts with {d} given by bug `{other}`",
                        parsed.difficulty
                    )));
                }
                Some(_) => {}
                None => {
                    difficulty.insert(
                        parsed.bug.problem_id.clone(),
                        (parsed.difficulty, parsed.bug.bug_id.clone()),
                    );
                }
            }
            bugs.push(parsed.bug);
        }
    }
    for (pid, (d, _)) in difficulty {
        if let Some(p) = problems.get_mut(&pid) {
            p.difficulty = d;
        }
    }
    let manifest = CorpusManifest::from_bugs(root.to_path_buf(), &bugs);
    Ok((Corpus { bugs, problems }, manifest))
}

/// Write a corpus back out in the on-disk layout.
pub fn write_corpus(root: &Path, corpus: &Corpus) -> std::io::Result<()> {
    fs::create_dir_all(root.join("bugs"))?;
    let mut problems = String::new();
    for p in corpus.problems.values() {
        let rec = ProblemRecord {
            problem_id: p.problem_id.clone(),
            description: p.description.clone(),
            input_spec: p.input_spec.clone(),
            output_spec: p.output_spec.clone(),
            tests: p
                .tests
                .iter()
                .map(|t| TestRecord {
                    input: t.input.clone(),
                    output: t.expected_output.clone(),
                    time_limit_ms: Some(t.time_limit_ms),
                    memory_limit_mib: Some(t.memory_limit_mib),
                })
                .collect(),
            time_limit_ms: None,
            memory_limit_mib: None,
        };
        problems.push_str(&serde_json::to_string(&rec).expect("problem record serializes"));
        problems.push('\n');
    }
    fs::write(root.join("problems.jsonl"), problems)?;
    let mut per_lang: BTreeMap<LanguageId, String> = BTreeMap::new();
    for b in &corpus.bugs {
        let rec = BugRecord {
            bug_id: b.bug_id.clone(),
            lang: b.source_language.name().to_string(),
            source_code: b.code.clone(),
            problem_id: b.problem_id.clone(),
            exec_outcome: b.initial_outcome.as_str().to_string(),
            difficulty: corpus.difficulty_of(b),
        };
        let out = per_lang.entry(b.source_language).or_default();
        out.push_str(&serde_json::to_string(&rec).expect("bug record serializes"));
        out.push('\n');
    }
    for (lang, body) in per_lang {
        fs::write(root.join("bugs").join(format!("{}.jsonl", lang.name())), body)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub subject: String,
    pub message: String,
}

/// Usability checks over an in-memory corpus. An empty result means the
/// corpus can be run.
pub fn validate_corpus(corpus: &Corpus, language_set: &LanguageSet) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for p in corpus.problems.values() {
        if p.tests.is_empty() {
            out.push(Diagnostic {
                subject: p.problem_id.clone(),
                message: "problem has no tests".into(),
            });
        }
        let referenced = corpus.bugs.iter().any(|b| b.problem_id == p.problem_id);
        if referenced && !(MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&p.difficulty) {
            out.push(Diagnostic {
                subject: p.problem_id.clone(),
                message: format!(
                    "difficulty {} outside [{MIN_DIFFICULTY}, {MAX_DIFFICULTY}]",
                    p.difficulty
                ),
            });
        }
        for (i, t) in p.tests.iter().enumerate() {
            if t.time_limit_ms == 0 || t.memory_limit_mib == 0 {
                out.push(Diagnostic {
                    subject: p.problem_id.clone(),
                    message: format!("test {i} has a zero limit"),
                });
            }
        }
    }
    for b in &corpus.bugs {
        if !language_set.contains(b.source_language) {
            out.push(Diagnostic {
                subject: b.bug_id.clone(),
                message: format!("language {} is not in the configured set", b.source_language),
            });
        }
        if !corpus.problems.contains_key(&b.problem_id) {
            out.push(Diagnostic {
                subject: b.bug_id.clone(),
                message: format!("missing problem `{}`", b.problem_id),
            });
        }
        if b.initial_outcome == OutcomeCategory::Passed {
            out.push(Diagnostic {
                subject: b.bug_id.clone(),
                message: "initial outcome is PASSED".into(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(root: &Path, rel: &str, body: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, body).unwrap();
    }

    fn bug_line(id: &str, lang: &str, pid: &str, diff: u32) -> String {
        format!(
            r#"{{"bug_id":"{id}","lang":"{lang}","source_code":"x","problem_id":"{pid}","exec_outcome":"WRONG_ANSWER","difficulty":{diff}}}"#
        )
    }

    const PROBLEM: &str = r#"{"problem_id":"p1","description":"d","input_spec":"i","output_spec":"o","tests":[{"input":"1\n","output":"1\n"}]}"#;

    fn fixture(root: &Path) {
        write(root, "problems.jsonl", &format!("{PROBLEM}\n"));
        write(
            root,
            "bugs/C.jsonl",
            &format!("{}\n{}\n", bug_line("c1", "C", "p1", 1200), bug_line("c2", "C", "p1", 1200)),
        );
        write(
            root,
            "bugs/Python.jsonl",
            &format!("{}\n{}\n", bug_line("py1", "Python", "p1", 1200), bug_line("py2", "Python", "p1", 1200)),
        );
        write(
            root,
            "bugs/Rust.jsonl",
            &format!("{}\n{}\n", bug_line("rs1", "Rust", "p1", 1200), bug_line("rs2", "Rust", "p1", 1200)),
        );
    }

    #[test]
    fn six_bug_fixture_counts() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let (corpus, manifest) = load_corpus(dir.path()).unwrap();
        assert_eq!(manifest.total, 6);
        assert_eq!(manifest.language_counts[&LanguageId::C], 2);
        assert_eq!(manifest.language_counts[&LanguageId::Python], 2);
        assert_eq!(manifest.language_counts[&LanguageId::Rust], 2);
        assert_eq!(manifest.language_counts.values().sum::<usize>(), manifest.total);
        assert_eq!(corpus.problems["p1"].difficulty, 1200);
        assert_eq!(corpus.problems["p1"].tests[0].time_limit_ms, DEFAULT_TIME_LIMIT_MS);
        let set = LanguageSet::default();
        assert!(validate_corpus(&corpus, &set).is_empty());
    }

    #[test]
    fn loading_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let a = load_corpus(dir.path()).unwrap();
        let b = load_corpus(dir.path()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.fingerprint(), b.0.fingerprint());
    }

    #[test]
    fn out_of_range_difficulty_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "problems.jsonl", PROBLEM);
        write(
            dir.path(),
            "bugs/C.jsonl",
            &format!("{}\n{}\n", bug_line("c1", "C", "p1", 1200), bug_line("c2", "C", "p1", 3600)),
        );
        match load_corpus(dir.path()) {
            Err(CorpusError::Malformed { path, line, message }) => {
                assert!(path.ends_with("bugs/C.jsonl"));
                assert_eq!(line, 2);
                assert!(message.contains("3600"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_problem_and_duplicate_bug() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "problems.jsonl", PROBLEM);
        write(dir.path(), "bugs/C.jsonl", &bug_line("c1", "C", "p9", 1200));
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::MissingProblem { .. })));

        write(
            dir.path(),
            "bugs/C.jsonl",
            &format!("{}\n{}\n", bug_line("c1", "C", "p1", 1200), bug_line("c1", "C", "p1", 1200)),
        );
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::DuplicateBug(_))));
    }

    #[test]
    fn malformed_json_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "problems.jsonl", &format!("{PROBLEM}\n{{oops\n"));
        write(dir.path(), "bugs/C.jsonl", "");
        let err = load_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("problems.jsonl:2"), "{err}");
    }

    #[test]
    fn validate_reports_each_problem() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let (mut corpus, _) = load_corpus(dir.path()).unwrap();
        let set = LanguageSet::new(vec![LanguageId::C, LanguageId::Python, LanguageId::Rust]).unwrap();
        assert!(validate_corpus(&corpus, &set).is_empty());

        corpus.problems.get_mut("p1").unwrap().tests.clear();
        assert_eq!(validate_corpus(&corpus, &set).len(), 1);

        fixture(dir.path());
        let (mut corpus, _) = load_corpus(dir.path()).unwrap();
        corpus.bugs[0].source_language = LanguageId::Go;
        let diags = validate_corpus(&corpus, &set);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("Go"));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let (corpus, _) = load_corpus(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_corpus(out.path(), &corpus).unwrap();
        let (again, _) = load_corpus(out.path()).unwrap();
        assert_eq!(again.problems, corpus.problems);
        let mut ids: Vec<_> = corpus.bugs.iter().map(|b| &b.bug_id).collect();
        let mut ids2: Vec<_> = again.bugs.iter().map(|b| &b.bug_id).collect();
        ids.sort();
        ids2.sort();
        assert_eq!(ids, ids2);
    }
}
