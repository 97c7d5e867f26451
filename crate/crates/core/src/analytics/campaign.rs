//! Measurements over a finished campaign's state and ledger.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    f1_at_k, map_at_k, ndcg_at_k, pass_at_k, precision_at_k, recall_at_k, AnalyticsError,
    EmptyListPolicy,
};
use crate::model::{LanguageId, OutcomeCategory, RepairCampaignState};
use crate::orchestrator::{translation_path, LedgerRow, RowMode};

/// Per source language: `rel[j - 1]` is true when some bug of that language
/// first became fixed at iteration `j >= 1`. Lists have length `len`.
pub fn validity_lists(state: &RepairCampaignState, len: usize) -> BTreeMap<LanguageId, Vec<bool>> {
    let mut lists: BTreeMap<LanguageId, Vec<bool>> = BTreeMap::new();
    for b in state.bugs() {
        let rel = lists.entry(b.source_language).or_insert_with(|| vec![false; len]);
        if let Some(f) = b.fixed_iteration {
            if f >= 1 && (f as usize) <= len {
                rel[f as usize - 1] = true;
            }
        }
    }
    lists
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKRow {
    pub language: LanguageId,
    pub iteration: u32,
    pub bugs: usize,
    pub fixed: usize,
    pub pass_at_k: f64,
}

/// Cumulative-best Pass@k per (language, iteration) for iterations
/// `0..iterations`: a bug fixed at iteration `f` contributes the Pass@k of
/// its iteration-`f` tally from `f` on, and 0 before.
pub fn pass_at_k_table(
    state: &RepairCampaignState,
    k: u32,
    iterations: u32,
) -> Result<Vec<PassAtKRow>, AnalyticsError> {
    let mut by_lang: BTreeMap<LanguageId, Vec<(Option<u32>, f64)>> = BTreeMap::new();
    for b in state.bugs() {
        let best = match b.fixed_iteration {
            Some(f) => {
                let t = b.tallies[&f];
                pass_at_k(t.n, t.c, k.min(t.n))?
            }
            None => 0.0,
        };
        by_lang.entry(b.source_language).or_default().push((b.fixed_iteration, best));
    }
    let mut rows = Vec::new();
    for (lang, bugs) in by_lang {
        for it in 0..iterations {
            let done: Vec<f64> = bugs
                .iter()
                .filter(|(f, _)| f.is_some_and(|f| f <= it))
                .map(|(_, v)| *v)
                .collect();
            rows.push(PassAtKRow {
                language: lang,
                iteration: it,
                bugs: bugs.len(),
                fixed: done.len(),
                pass_at_k: done.iter().fold(0.0, |a, v| a + v) / bugs.len() as f64,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    /// A language name, or `ALL` for the aggregate.
    pub scope: String,
    pub k: usize,
    pub precision: f64,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub map: Option<f64>,
    pub ndcg: f64,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Ranking metrics per language and aggregated, for each `k` that fits the
/// list length. Precision and NDCG average over every language; recall, F1
/// and MAP over languages with at least one valid iteration (MAP per
/// `policy`).
pub fn ranking_table(
    lists: &BTreeMap<LanguageId, Vec<bool>>,
    ks: &[usize],
    policy: EmptyListPolicy,
) -> Result<Vec<RankingRow>, AnalyticsError> {
    let mut rows = Vec::new();
    let len = lists.values().map(Vec::len).next().unwrap_or(0);
    for &k in ks.iter().filter(|k| **k >= 1 && **k <= len) {
        let (mut ps, mut rs, mut fs, mut ns) = (vec![], vec![], vec![], vec![]);
        for (lang, rel) in lists {
            let p = precision_at_k(rel, k)?;
            let r = recall_at_k(rel, k)?;
            let f = r.map(|_| f1_at_k(rel, k)).transpose()?;
            let n = ndcg_at_k(rel, k)?;
            let ap = map_at_k(std::slice::from_ref(rel), k, policy)?;
            rows.push(RankingRow {
                scope: lang.name().to_string(),
                k,
                precision: p,
                recall: r,
                f1: f,
                map: ap,
                ndcg: n,
            });
            ps.push(p);
            ns.push(n);
            rs.extend(r);
            fs.extend(f);
        }
        let all: Vec<Vec<bool>> = lists.values().cloned().collect();
        rows.push(RankingRow {
            scope: "ALL".into(),
            k,
            precision: mean(&ps).unwrap_or(0.0),
            recall: mean(&rs),
            f1: mean(&fs),
            map: map_at_k(&all, k, policy)?,
            ndcg: mean(&ns).unwrap_or(0.0),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCell {
    pub pre: OutcomeCategory,
    pub post: OutcomeCategory,
    pub bugs: u64,
    /// Per-test counts, kept for PASSED / WRONG_ANSWER cells only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unchanged: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// All 36 cells, row-major in taxonomy order.
    pub cells: Vec<TransitionCell>,
    pub total_events: u64,
}

impl TransitionMatrix {
    pub fn cell(&self, pre: OutcomeCategory, post: OutcomeCategory) -> &TransitionCell {
        &self.cells[pre.index() * OutcomeCategory::ALL.len() + post.index()]
    }
}

fn annotated(c: OutcomeCategory) -> bool {
    matches!(c, OutcomeCategory::Passed | OutcomeCategory::WrongAnswer)
}

/// Outcomes of buggy code before and after translation.
pub fn transition_matrix(ledger: &[LedgerRow]) -> TransitionMatrix {
    let mut cells: Vec<TransitionCell> = OutcomeCategory::ALL
        .iter()
        .flat_map(|pre| {
            OutcomeCategory::ALL.iter().map(move |post| {
                let ann = annotated(*pre) && annotated(*post);
                TransitionCell {
                    pre: *pre,
                    post: *post,
                    bugs: 0,
                    tests: ann.then_some(0),
                    unchanged: ann.then_some(0),
                    changed: ann.then_some(0),
                }
            })
        })
        .collect();
    let mut total = 0;
    for ev in ledger.iter().filter_map(|r| r.translation.as_ref()) {
        total += 1;
        let cell = &mut cells[ev.pre_outcome.index() * OutcomeCategory::ALL.len() + ev.post_outcome.index()];
        cell.bugs += 1;
        if let (Some(t), Some(u), Some(c)) = (&mut cell.tests, &mut cell.unchanged, &mut cell.changed) {
            for (a, b) in &ev.per_test {
                *t += 1;
                if a == b {
                    *u += 1;
                } else {
                    *c += 1;
                }
            }
        }
    }
    TransitionMatrix {
        cells,
        total_events: total,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackTranslationTally {
    pub bugs_preserved: u64,
    pub bugs_lost: u64,
    pub samples_before: u64,
    pub samples_after: u64,
}

/// Per source language, counted over translation rows: a row with at least
/// one target-correct sample is preserved when at least one back-translation
/// is source-correct, lost otherwise.
pub fn back_translation_account(ledger: &[LedgerRow]) -> BTreeMap<LanguageId, BackTranslationTally> {
    let mut out: BTreeMap<LanguageId, BackTranslationTally> = BTreeMap::new();
    for r in ledger.iter().filter(|r| r.mode == RowMode::Translation) {
        let t = out.entry(r.source_language).or_default();
        if r.target_correct > 0 {
            if r.c > 0 {
                t.bugs_preserved += 1;
            } else {
                t.bugs_lost += 1;
            }
        }
        t.samples_before += u64::from(r.target_correct);
        t.samples_after += u64::from(r.c);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRow {
    pub bug_id: String,
    pub source_language: LanguageId,
    pub fixed: bool,
    pub fixed_iteration: Option<u32>,
    pub path: Vec<LanguageId>,
}

pub fn path_rows(state: &RepairCampaignState) -> Vec<PathRow> {
    state
        .bugs()
        .iter()
        .map(|b| PathRow {
            bug_id: b.bug_id.clone(),
            source_language: b.source_language,
            fixed: b.fixed,
            fixed_iteration: b.fixed_iteration,
            path: translation_path(state, &b.bug_id).expect("bug exists"),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BugInstance;
    use crate::orchestrator::TranslationEvent;
    use LanguageId::*;
    use OutcomeCategory::*;

    fn state(bugs: &[(&str, LanguageId)], max: u32) -> RepairCampaignState {
        let bugs: Vec<BugInstance> = bugs
            .iter()
            .map(|(id, l)| BugInstance {
                bug_id: id.to_string(),
                source_language: *l,
                code: String::new(),
                problem_id: "p".into(),
                initial_outcome: WrongAnswer,
                error_type: "WRONG_ANSWER".into(),
            })
            .collect();
        RepairCampaignState::new(&bugs, max)
    }

    fn row(mode: RowMode, lang: LanguageId, target_correct: u32, c: u32) -> LedgerRow {
        LedgerRow {
            bug_id: "b".into(),
            iteration: 1,
            source_language: lang,
            difficulty: 1000,
            mode,
            target_language: None,
            decision: None,
            source_report: None,
            translation: None,
            repair_reports: vec![],
            back_reports: vec![],
            n: 20,
            target_correct,
            c,
            error: None,
        }
    }

    #[test]
    fn validity_examples() {
        let mut s = state(&[("a", C), ("b", C), ("c", Go), ("d", Go)], 5);
        for (id, fix) in [("a", 1), ("b", 3), ("c", 0)] {
            for it in 0..fix {
                s.mark_iteration_result(id, it, 20, 0).unwrap();
            }
            s.mark_iteration_result(id, fix, 20, 1).unwrap();
        }
        let lists = validity_lists(&s, 4);
        assert_eq!(lists[&C], vec![true, false, true, false]);
        assert_eq!(lists[&Go], vec![false; 4]);
        assert!(!lists.contains_key(&Rust));
    }

    #[test]
    fn cumulative_pass_at_k() {
        let mut s = state(&[("a", C), ("b", C)], 3);
        s.mark_iteration_result("a", 0, 20, 0).unwrap();
        s.mark_iteration_result("a", 1, 20, 20).unwrap();
        s.mark_iteration_result("b", 0, 20, 0).unwrap();
        let rows = pass_at_k_table(&s, 10, 3).unwrap();
        let v: Vec<f64> = rows.iter().map(|r| r.pass_at_k).collect();
        assert_eq!(v, vec![0.0, 0.5, 0.5]);
        assert!(rows.windows(2).all(|w| w[0].pass_at_k <= w[1].pass_at_k));
    }

    #[test]
    fn transitions_and_conservation() {
        let ev = |pre, post, per_test: Vec<(OutcomeCategory, OutcomeCategory)>| {
            let mut r = row(RowMode::Translation, C, 0, 0);
            r.translation = Some(TranslationEvent {
                bug_id: "b".into(),
                iteration: 1,
                source_language: C,
                target_language: Go,
                pre_outcome: pre,
                post_outcome: post,
                per_test,
            });
            r
        };
        let ledger = vec![
            ev(Passed, Passed, vec![(Passed, Passed); 5]),
            ev(WrongAnswer, Passed, vec![(WrongAnswer, Passed), (Passed, Passed)]),
            ev(RuntimeError, WrongAnswer, vec![(RuntimeError, WrongAnswer)]),
            ev(WrongAnswer, WrongAnswer, vec![(Passed, Passed), (WrongAnswer, WrongAnswer), (Passed, WrongAnswer)]),
            row(RowMode::Direct, C, 0, 0),
        ];
        let m = transition_matrix(&ledger);
        assert_eq!(m.total_events, 4);
        let pp = m.cell(Passed, Passed);
        assert_eq!((pp.bugs, pp.unchanged, pp.changed), (1, Some(5), Some(0)));
        let wp = m.cell(WrongAnswer, Passed);
        assert_eq!((wp.bugs, wp.unchanged, wp.changed), (1, Some(1), Some(1)));
        assert_eq!(m.cell(RuntimeError, WrongAnswer).unchanged, None);
        assert_eq!(m.cell(WrongAnswer, WrongAnswer).changed, Some(1));
        assert_eq!(m.cells.iter().map(|c| c.bugs).sum::<u64>(), m.total_events);
    }

    #[test]
    fn back_translation_examples() {
        let ledger = vec![
            row(RowMode::Translation, C, 3, 3),
            row(RowMode::Translation, C, 2, 0),
            row(RowMode::Translation, Go, 0, 0),
            row(RowMode::Direct, C, 5, 5),
        ];
        let acc = back_translation_account(&ledger);
        assert_eq!(
            acc[&C],
            BackTranslationTally {
                bugs_preserved: 1,
                bugs_lost: 1,
                samples_before: 5,
                samples_after: 3
            }
        );
        assert_eq!(acc[&Go], BackTranslationTally::default());
    }

    #[test]
    fn ranking_table_aggregates() {
        let lists: BTreeMap<_, _> = [(C, vec![true, false, true]), (Go, vec![false, false, false])].into();
        let rows = ranking_table(&lists, &[1, 3, 4], EmptyListPolicy::Exclude).unwrap();
        assert_eq!(rows.len(), 6);
        let all3 = rows.iter().find(|r| r.scope == "ALL" && r.k == 3).unwrap();
        assert!((all3.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(all3.recall, Some(1.0));
        assert!((all3.map.unwrap() - 5.0 / 6.0).abs() < 1e-12);
        let go1 = rows.iter().find(|r| r.scope == "Go" && r.k == 1).unwrap();
        assert_eq!((go1.recall, go1.f1, go1.map), (None, None, None));
    }
}
