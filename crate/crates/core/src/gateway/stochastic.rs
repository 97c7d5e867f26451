use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{follow_history, BackendError, ModelBackend, Task, TaskRequest};
use crate::exec::{parse_verdict_marker, VerdictScript, VERDICT_MARKER};
use crate::model::{LanguageId, OutcomeCategory};
use crate::seed::rng_for;

/// Per-language fix probabilities by difficulty band.
///
/// `band_edges` are ascending ratings; a bug of difficulty `d` falls in band
/// `i` = number of edges `<= d`. A language row shorter than the band count
/// repeats its last value; languages without a row use `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixProbabilityTable {
    #[serde(default)]
    pub band_edges: Vec<u32>,
    #[serde(default)]
    pub languages: BTreeMap<LanguageId, Vec<f64>>,
    #[serde(default)]
    pub default: f64,
    /// Chance that each per-test verdict survives translation of buggy code.
    #[serde(default = "one")]
    pub translation_consistency: f64,
    /// Chance that a correct target sample stays correct after back-translation.
    #[serde(default = "one")]
    pub back_translation_fidelity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl FixProbabilityTable {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let t: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.band_edges.windows(2).all(|w| w[0] < w[1]) {
            return Err("band_edges must be strictly ascending".into());
        }
        for (lang, row) in &self.languages {
            if row.is_empty() {
                return Err(format!("{lang}: empty probability row"));
            }
            if let Some(p) = row.iter().find(|p| !is_prob(**p)) {
                return Err(format!("{lang}: probability {p} outside [0, 1]"));
            }
        }
        for (name, p) in [
            ("default", self.default),
            ("translation_consistency", self.translation_consistency),
            ("back_translation_fidelity", self.back_translation_fidelity),
        ] {
            if !is_prob(p) {
                return Err(format!("{name}: {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn band(&self, difficulty: u32) -> usize {
        self.band_edges.iter().filter(|e| **e <= difficulty).count()
    }

    pub fn fix_probability(&self, lang: LanguageId, difficulty: u32) -> f64 {
        match self.languages.get(&lang) {
            Some(row) => row[self.band(difficulty).min(row.len() - 1)],
            None => self.default,
        }
    }
}

fn comment(lang: LanguageId) -> &'static str {
    match lang {
        LanguageId::Python | LanguageId::Ruby => "#",
        _ => "//",
    }
}

fn program(lang: LanguageId, what: &str, verdict: &VerdictScript) -> String {
    let c = comment(lang);
    format!(
        "```{}\n{c} {what}\n{c} {VERDICT_MARKER} {}\n```",
        lang.fence_tag(),
        verdict.render()
    )
}

/// Seeded simulation of a repair model, judged by the mock executor.
///
/// Repairs carry a `PASSED` verdict marker with the table's probability for
/// (language, difficulty band), else `WRONG_ANSWER`. Translations copy the
/// input's verdicts, each kept with `translation_consistency`; back-
/// translations keep a `PASSED` program passing with
/// `back_translation_fidelity`. Decisions follow the history blocks.
#[derive(Debug, Clone)]
pub struct StochasticBackend {
    table: FixProbabilityTable,
}

impl StochasticBackend {
    pub fn new(table: FixProbabilityTable) -> Self {
        StochasticBackend { table }
    }

    pub fn table(&self) -> &FixProbabilityTable {
        &self.table
    }

    fn input_verdict(r: &TaskRequest) -> VerdictScript {
        match parse_verdict_marker(&r.code) {
            Ok(Some(v)) => v,
            Ok(None) => VerdictScript::uniform(r.bug.initial_outcome),
            Err(_) => VerdictScript::uniform(OutcomeCategory::CompilationError),
        }
    }
}

impl ModelBackend for StochasticBackend {
    fn complete(&self, r: &TaskRequest, prompt: &str) -> Result<Vec<String>, BackendError> {
        let n = r.sample_count.max(1);
        if r.task == Task::DecideTarget {
            return Ok(vec![follow_history(prompt, &r.candidates, r.seed)]);
        }
        let lang = r.key_language();
        let table_seed = self.table.seed.to_le_bytes();
        let req_seed = r.seed.to_le_bytes();
        let out = (0..n)
            .map(|i| {
                let idx = (i as u64).to_le_bytes();
                let mut rng = rng_for(&[b"stochastic", &table_seed, &req_seed, &idx]);
                match r.task {
                    Task::Repair => {
                        let p = self.table.fix_probability(lang, r.bug.difficulty);
                        let cat = if rng.random_bool(p) {
                            OutcomeCategory::Passed
                        } else {
                            OutcomeCategory::WrongAnswer
                        };
                        let what = format!("repair of {} sample {i}", r.bug.bug_id);
                        program(lang, &what, &VerdictScript::uniform(cat))
                    }
                    Task::Translate => {
                        let keep = self.table.translation_consistency;
                        let cats = Self::input_verdict(r)
                            .0
                            .into_iter()
                            .map(|cat| {
                                if rng.random_bool(keep) {
                                    return cat;
                                }
                                let others: Vec<_> =
                                    OutcomeCategory::ALL.into_iter().filter(|c| *c != cat).collect();
                                *others.choose(&mut rng).expect("five other categories")
                            })
                            .collect();
                        let what = format!("translation of {} into {lang}", r.bug.bug_id);
                        program(lang, &what, &VerdictScript(cats))
                    }
                    Task::BackTranslate => {
                        let v = Self::input_verdict(r);
                        let passing = v.0.iter().all(|c| *c == OutcomeCategory::Passed);
                        let v = if passing && !rng.random_bool(self.table.back_translation_fidelity) {
                            VerdictScript::uniform(OutcomeCategory::WrongAnswer)
                        } else {
                            v
                        };
                        let what = format!("back-translation of {} sample {i}", r.bug.bug_id);
                        program(lang, &what, &v)
                    }
                    Task::DecideTarget => unreachable!("handled above"),
                }
            })
            .collect();
        Ok(out)
    }
}
