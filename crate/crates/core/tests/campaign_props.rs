use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use transrepair_core::analytics::{pass_at_k_table, validity_lists};
use transrepair_core::corpus::Corpus;
use transrepair_core::exec::MockExecutor;
use transrepair_core::gateway::{FixtureEntry, Gateway, ScriptedBackend, Task};
use transrepair_core::model::{BugInstance, LanguageId, LanguageSet, OutcomeCategory, ProblemSpec, TestCase};
use transrepair_core::orchestrator::{run_campaign, CampaignOptions, CampaignOutcome, RowMode, RunConfig};
use transrepair_core::strategy::StrategyKind;

#[derive(Debug, Clone)]
struct BugPlan {
    source: usize,
    outcome: usize,
    /// Per language: how many replies and how many of them pass.
    replies: Vec<(usize, usize)>,
    target_hint: Option<usize>,
}

fn reply(pass: bool) -> String {
    let v = if pass { "PASSED" } else { "WRONG_ANSWER" };
    format!("```\n// @verdict: {v}\n```")
}

fn build(langs: &[LanguageId], plans: &[BugPlan]) -> (Corpus, ScriptedBackend) {
    let mut bugs = Vec::new();
    let mut problems = BTreeMap::new();
    let mut backend = ScriptedBackend::new();
    for (i, p) in plans.iter().enumerate() {
        let id = format!("b{i:02}");
        let source = langs[p.source % langs.len()];
        let outcome = OutcomeCategory::ALL[1 + p.outcome % 5];
        problems.insert(
            id.clone(),
            ProblemSpec {
                problem_id: id.clone(),
                description: String::new(),
                input_spec: String::new(),
                output_spec: String::new(),
                difficulty: 800 + 100 * (i as u32 % 20),
                tests: vec![TestCase {
                    input: "1\n".into(),
                    expected_output: "1\n".into(),
                    time_limit_ms: 1000,
                    memory_limit_mib: 64,
                }],
            },
        );
        bugs.push(BugInstance {
            bug_id: id.clone(),
            source_language: source,
            code: format!("// @verdict: {}\n", outcome.as_str()),
            problem_id: id.clone(),
            initial_outcome: outcome,
            error_type: outcome.as_str().into(),
        });
        for (l, (n, good)) in langs.iter().zip(&p.replies) {
            let responses = (0..*n).map(|j| reply(j < *good)).collect();
            backend.insert(FixtureEntry {
                bug_id: id.clone(),
                task: Task::Repair,
                language: *l,
                iteration: None,
                responses,
            });
        }
        if let Some(h) = p.target_hint {
            backend.insert(FixtureEntry {
                bug_id: id.clone(),
                task: Task::DecideTarget,
                language: source,
                iteration: None,
                responses: vec![format!("TARGET: {}", LanguageId::ALL[h % LanguageId::ALL.len()].name())],
            });
        }
    }
    (Corpus { bugs, problems }, backend)
}

fn plan() -> impl Strategy<Value = BugPlan> {
    (
        0usize..5,
        0usize..5,
        prop::collection::vec((1usize..4, 0usize..2), 5),
        prop::option::of(0usize..16),
    )
        .prop_map(|(source, outcome, replies, target_hint)| BugPlan {
            source,
            outcome,
            replies: replies.into_iter().map(|(n, g)| (n, g.min(n))).collect(),
            target_hint,
        })
}

fn strategy_kind() -> impl Strategy<Value = StrategyKind> {
    prop_oneof![
        Just(StrategyKind::Greedy),
        Just(StrategyKind::Random),
        Just(StrategyKind::Reasoning),
        Just(StrategyKind::ReasoningNoHistory),
    ]
}

fn run(corpus: &Corpus, config: &RunConfig, backend: Arc<ScriptedBackend>) -> CampaignOutcome {
    let gateway = Gateway::new(backend, 4);
    run_campaign(corpus, config, &MockExecutor::new(), &gateway, CampaignOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn campaign_invariants(
        nlang in 3usize..=5,
        plans in prop::collection::vec(plan(), 4..16),
        kind in strategy_kind(),
        seed in any::<u64>(),
    ) {
        let langs: Vec<LanguageId> = LanguageId::ALL[..nlang].to_vec();
        let (corpus, backend) = build(&langs, &plans);
        let backend = Arc::new(backend);
        let mut config = RunConfig::new(kind, LanguageSet::new(langs.clone()).unwrap());
        config.seed = seed;
        config.sample_count = 3;
        config.pass_k = 1;
        config.parallelism = 1;
        let a = run(&corpus, &config, backend.clone());
        config.parallelism = 4;
        let b = run(&corpus, &config, backend);
        prop_assert_eq!(&a.ledger, &b.ledger);
        prop_assert_eq!(&a.state, &b.state);

        let max = config.max_iterations();
        prop_assert!(a.last_iteration < max);
        for p in a.state.bugs() {
            let src = corpus.bug(&p.bug_id).unwrap().source_language;
            let set: BTreeSet<_> = p.attempted_targets.iter().collect();
            prop_assert_eq!(set.len(), p.attempted_targets.len());
            prop_assert!(!p.attempted_targets.contains(&src));
            for r in a.ledger.iter().filter(|r| r.bug_id == p.bug_id) {
                prop_assert!(r.iteration < max);
                if let Some(f) = p.fixed_iteration {
                    prop_assert!(r.iteration <= f);
                }
                if r.mode == RowMode::Translation {
                    prop_assert!(r.iteration >= 1);
                }
            }
            prop_assert_eq!(p.fixed, p.fixed_iteration.is_some());
        }

        // cumulative Pass@k never drops between iterations
        let table = pass_at_k_table(&a.state, 1, max).unwrap();
        let mut by_lang: BTreeMap<LanguageId, Vec<f64>> = BTreeMap::new();
        for row in &table {
            by_lang.entry(row.language).or_default().push(row.pass_at_k);
        }
        for series in by_lang.values() {
            prop_assert!(series.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{:?}", series);
        }

        // each validity list flags exactly the iterations where a first fix happened
        let lists = validity_lists(&a.state, max as usize - 1);
        for (lang, rel) in &lists {
            for (j, flag) in rel.iter().enumerate() {
                let expected = a.state.bugs().iter().any(|p| {
                    corpus.bug(&p.bug_id).unwrap().source_language == *lang
                        && p.fixed_iteration == Some(j as u32 + 1)
                });
                prop_assert_eq!(*flag, expected, "{} at {}", lang, j + 1);
            }
        }
    }
}
