//! Target-language selection policies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::pass_at_k;
use crate::gateway::{BugContext, Gateway, GatewayError, HistoryContext, TaskRequest};
use crate::history::RetrievalResult;
use crate::model::LanguageId;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("no remaining target languages for {0}")]
    NoCandidates(String),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("performance table: {0}")]
    Table(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyKind {
    Greedy,
    Random,
    Reasoning,
    ReasoningNoHistory,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Greedy => "GREEDY",
            StrategyKind::Random => "RANDOM",
            StrategyKind::Reasoning => "REASONING",
            StrategyKind::ReasoningNoHistory => "REASONING_NO_HISTORY",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "greedy" => Ok(StrategyKind::Greedy),
            "random" => Ok(StrategyKind::Random),
            "reasoning" => Ok(StrategyKind::Reasoning),
            "reasoning_no_history" => Ok(StrategyKind::ReasoningNoHistory),
            _ => Err(StrategyError::UnknownStrategy(s.to_string())),
        }
    }
}

/// Iteration-0 Pass@k per language.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InitialPerformanceTable(pub BTreeMap<LanguageId, f64>);

impl InitialPerformanceTable {
    /// Mean Pass@k over bugs of each language from `(language, n, c)` tallies.
    pub fn from_tallies(
        tallies: impl IntoIterator<Item = (LanguageId, u32, u32)>,
        k: u32,
    ) -> Result<Self, StrategyError> {
        let mut sums: BTreeMap<LanguageId, (f64, usize)> = BTreeMap::new();
        for (lang, n, c) in tallies {
            let v = pass_at_k(n, c, k.min(n)).map_err(|e| StrategyError::Table(e.to_string()))?;
            let s = sums.entry(lang).or_insert((0.0, 0));
            s.0 += v;
            s.1 += 1;
        }
        Ok(InitialPerformanceTable(
            sums.into_iter().map(|(l, (s, n))| (l, s / n as f64)).collect(),
        ))
    }

    pub fn from_json(text: &str) -> Result<Self, StrategyError> {
        let t: Self = serde_json::from_str(text).map_err(|e| StrategyError::Table(e.to_string()))?;
        if let Some((l, v)) = t.0.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(StrategyError::Table(format!("{l}: {v} outside [0, 1]")));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, StrategyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StrategyError::Table(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn get(&self, lang: LanguageId) -> f64 {
        self.0.get(&lang).copied().unwrap_or(0.0)
    }
}

/// What a strategy chose for one (bug, iteration), as written to the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub strategy: StrategyKind,
    pub chosen: LanguageId,
    pub candidates: Vec<LanguageId>,
    pub rationale: String,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn first_max(candidates: &[LanguageId], score: impl Fn(LanguageId) -> f64) -> Option<LanguageId> {
    let mut best: Option<(LanguageId, f64)> = None;
    for &c in candidates {
        let s = score(c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c)
}

/// Candidate with the highest table value; ties go to the earlier candidate.
pub fn select_greedy(
    candidates: &[LanguageId],
    table: &InitialPerformanceTable,
) -> Option<LanguageId> {
    first_max(candidates, |l| table.get(l))
}

/// Uniform pick from a stream keyed by (run seed, bug) and positioned by the
/// number of targets already attempted, so the draw never depends on
/// scheduling.
pub fn select_random(
    run_seed: u64,
    bug_id: &str,
    attempted: usize,
    candidates: &[LanguageId],
) -> Option<LanguageId> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        b"random-strategy",
        &run_seed.to_le_bytes(),
        bug_id.as_bytes(),
    ]));
    rng.set_stream(attempted as u64);
    candidates.choose(&mut rng).copied()
}

/// Share of translation neighbours that were fixed through each language.
pub fn translation_success_rate(retrieval: Option<&RetrievalResult>, lang: LanguageId) -> f64 {
    let Some(r) = retrieval else { return 0.0 };
    if r.translation.is_empty() {
        return 0.0;
    }
    let hits = r
        .translation
        .iter()
        .filter(|n| n.entry.result.successful_targets.contains(&lang))
        .count();
    hits as f64 / r.translation.len() as f64
}

/// Fallback for unusable decisions: translation-success rate, then the
/// greedy table, then candidate order.
pub fn fallback_choice(
    candidates: &[LanguageId],
    retrieval: Option<&RetrievalResult>,
    table: &InitialPerformanceTable,
) -> Option<LanguageId> {
    let mut best: Option<(LanguageId, f64, f64)> = None;
    for &c in candidates {
        let key = (translation_success_rate(retrieval, c), table.get(c));
        if best.is_none_or(|(_, r, t)| key.0 > r || (key.0 == r && key.1 > t)) {
            best = Some((c, key.0, key.1));
        }
    }
    best.map(|(c, _, _)| c)
}

pub fn history_context(retrieval: &RetrievalResult) -> HistoryContext {
    HistoryContext {
        initial: retrieval.initial.iter().map(|n| n.to_feedback()).collect(),
        translation: retrieval.translation.iter().map(|n| n.to_feedback()).collect(),
    }
}

/// Everything a strategy needs besides the bug itself.
pub struct Selector<'a> {
    pub kind: StrategyKind,
    pub run_seed: u64,
    pub table: &'a InitialPerformanceTable,
    /// Required for the reasoning strategies.
    pub gateway: Option<&'a Gateway>,
}

impl Selector<'_> {
    pub fn select(
        &self,
        bug: &BugContext,
        iteration: u32,
        candidates: &[LanguageId],
        attempted: &[LanguageId],
        retrieval: Option<&RetrievalResult>,
    ) -> Result<DecisionRecord, StrategyError> {
        if candidates.is_empty() {
            return Err(StrategyError::NoCandidates(bug.bug_id.clone()));
        }
        let record = |chosen, rationale: String, fallback, error| DecisionRecord {
            strategy: self.kind,
            chosen,
            candidates: candidates.to_vec(),
            rationale,
            fallback,
            error,
        };
        match self.kind {
            StrategyKind::Greedy => {
                let chosen = select_greedy(candidates, self.table).expect("non-empty");
                let why = format!("initial pass@k {:.4}", self.table.get(chosen));
                Ok(record(chosen, why, false, None))
            }
            StrategyKind::Random => {
                let chosen = select_random(self.run_seed, &bug.bug_id, attempted.len(), candidates)
                    .expect("non-empty");
                Ok(record(chosen, "uniform draw".into(), false, None))
            }
            StrategyKind::Reasoning | StrategyKind::ReasoningNoHistory => {
                let history = match (self.kind, retrieval) {
                    (StrategyKind::Reasoning, Some(r)) => Some(history_context(r)),
                    _ => None,
                };
                let seed = derive_seed(&[
                    b"decide",
                    &self.run_seed.to_le_bytes(),
                    bug.bug_id.as_bytes(),
                    &iteration.to_le_bytes(),
                ]);
                let request = TaskRequest::decide(
                    bug.clone(),
                    iteration,
                    candidates.to_vec(),
                    attempted.to_vec(),
                    history,
                    seed,
                );
                let visible = if self.kind == StrategyKind::Reasoning { retrieval } else { None };
                let fallback = |c: &[LanguageId]| {
                    fallback_choice(c, visible, self.table).expect("non-empty")
                };
                let Some(gateway) = self.gateway else {
                    let chosen = fallback(candidates);
                    return Ok(record(chosen, "fallback".into(), true, Some("no gateway".into())));
                };
                match gateway.decide_target(&request, fallback) {
                    Ok(d) => Ok(record(d.chosen_language, d.rationale, d.fallback, None)),
                    Err(e @ GatewayError::Backend { .. }) => {
                        let chosen = fallback(candidates);
                        Ok(record(chosen, "fallback".into(), true, Some(e.to_string())))
                    }
                    Err(e) => Err(e.into()),
                }
            }
        }
    }
}
