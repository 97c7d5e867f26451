//! Seeded synthetic corpora paired with a fix-probability table, for
//! simulated campaigns under the stochastic backend.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::corpus::Corpus;
use crate::exec::{MockExecutor, VERDICT_MARKER};
use crate::gateway::{FixProbabilityTable, Gateway, StochasticBackend};
use crate::model::{BugInstance, LanguageId, LanguageSet, OutcomeCategory, ProblemSpec, TestCase};
use crate::orchestrator::{run_campaign, CampaignError, CampaignOptions, CampaignOutcome, RunConfig};
use crate::seed::rng_for;
use crate::strategy::StrategyKind;

/// How one language is represented in the corpus and how well the
/// simulated model repairs code written in it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLanguage {
    pub language: LanguageId,
    pub bugs: usize,
    /// Share of this language's bugs drawn from the easy band.
    pub easy_fraction: f64,
    pub p_easy: f64,
    pub p_hard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub languages: Vec<SyntheticLanguage>,
    /// Easy bugs get ratings below this edge, hard bugs at or above it.
    pub hard_edge: u32,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 200 bugs over five languages with skewed strengths:
    ///
    /// * Go: only easy bugs, repairs those reliably, never a hard one.
    /// * Rust: only hard bugs, and the only language that repairs hard bugs.
    /// * C, Java, Python: mostly easy bugs, cannot repair hard ones.
    ///
    /// Iteration-0 success ranks Go first and Rust last, so a table-driven
    /// choice reaches Rust late; history of fixed hard bugs points at Rust.
    pub fn skewed(seed: u64) -> Self {
        let lang = |language, bugs, easy_fraction, p_easy, p_hard| SyntheticLanguage {
            language,
            bugs,
            easy_fraction,
            p_easy,
            p_hard,
        };
        SyntheticSpec {
            languages: vec![
                lang(LanguageId::C, 50, 0.6, 0.3, 0.0),
                lang(LanguageId::Go, 30, 1.0, 0.9, 0.0),
                lang(LanguageId::Java, 50, 0.6, 0.3, 0.0),
                lang(LanguageId::Python, 50, 0.6, 0.3, 0.0),
                lang(LanguageId::Rust, 20, 0.0, 0.9, 0.04),
            ],
            hard_edge: 2000,
            seed,
        }
    }

    pub fn language_set(&self) -> LanguageSet {
        LanguageSet::new(self.languages.iter().map(|l| l.language).collect()).expect("distinct languages")
    }

    pub fn table(&self) -> FixProbabilityTable {
        FixProbabilityTable {
            band_edges: vec![self.hard_edge],
            languages: self
                .languages
                .iter()
                .map(|l| (l.language, vec![l.p_easy, l.p_hard]))
                .collect(),
            default: 0.0,
            translation_consistency: 1.0,
            back_translation_fidelity: 1.0,
            seed: self.seed,
        }
    }

    /// Easy bugs fail with `WRONG_ANSWER`, hard ones with
    /// `TIME_LIMIT_EXCEEDED`; each bug has its own one-test problem.
    pub fn corpus(&self) -> Corpus {
        let mut rng = rng_for(&[b"synthetic-corpus", &self.seed.to_le_bytes()]);
        let mut bugs = Vec::new();
        let mut problems = BTreeMap::new();
        for l in &self.languages {
            let easy = (l.bugs as f64 * l.easy_fraction).round() as usize;
            for i in 0..l.bugs {
                let hard = i >= easy;
                let difficulty = if hard {
                    rng.random_range(self.hard_edge / 100..=35) * 100
                } else {
                    rng.random_range(8..self.hard_edge / 100) * 100
                };
                let outcome = if hard {
                    OutcomeCategory::TimeLimitExceeded
                } else {
                    OutcomeCategory::WrongAnswer
                };
                let id = format!("{}-{i:03}", l.language.fence_tag());
                let problem_id = format!("p-{id}");
                problems.insert(
                    problem_id.clone(),
                    ProblemSpec {
                        problem_id: problem_id.clone(),
                        description: format!("synthetic problem for {id}"),
                        input_spec: "one line".into(),
                        output_spec: "one line".into(),
                        difficulty,
                        tests: vec![TestCase {
                            input: "1\n".into(),
                            expected_output: "1\n".into(),
                            time_limit_ms: 1000,
                            memory_limit_mib: 256,
                        }],
                    },
                );
                let c = if matches!(l.language, LanguageId::Python | LanguageId::Ruby) { "#" } else { "//" };
                bugs.push(BugInstance {
                    bug_id: id.clone(),
                    source_language: l.language,
                    code: format!("{c} synthetic bug {id}\n{c} {VERDICT_MARKER} {}\n", outcome.as_str()),
                    problem_id,
                    initial_outcome: outcome,
                    error_type: outcome.as_str().to_string(),
                });
            }
        }
        Corpus { bugs, problems }
    }
}

/// Retrieval depth for simulations: deep enough to reach past a bug's
/// same-language neighbours.
pub const SIMULATION_RETRIEVAL_K: usize = 40;

/// Run one simulated campaign over `spec` with the stochastic backend and
/// the mock executor.
pub fn simulate(
    spec: &SyntheticSpec,
    strategy: StrategyKind,
    translation_enabled: bool,
    parallelism: usize,
) -> Result<CampaignOutcome, CampaignError> {
    let corpus = spec.corpus();
    let mut config = RunConfig::new(strategy, spec.language_set());
    config.seed = spec.seed;
    config.retrieval_k = SIMULATION_RETRIEVAL_K;
    config.translation_enabled = translation_enabled;
    config.parallelism = parallelism;
    let gateway = Gateway::new(Arc::new(StochasticBackend::new(spec.table())), parallelism.max(1) * 2);
    run_campaign(&corpus, &config, &MockExecutor::new(), &gateway, CampaignOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_corpus;

    #[test]
    fn skewed_corpus_shape() {
        let spec = SyntheticSpec::skewed(3);
        let corpus = spec.corpus();
        assert_eq!(corpus.bugs.len(), 200);
        assert!(validate_corpus(&corpus, &spec.language_set()).is_empty());
        let table = spec.table();
        table.validate().unwrap();
        for b in &corpus.bugs {
            let d = corpus.difficulty_of(b);
            let hard = b.initial_outcome == OutcomeCategory::TimeLimitExceeded;
            assert_eq!(hard, d >= spec.hard_edge, "{}", b.bug_id);
            assert!((800..=3500).contains(&d));
        }
        assert_eq!(corpus, SyntheticSpec::skewed(3).corpus());
        assert_ne!(corpus, SyntheticSpec::skewed(4).corpus());
    }
}
