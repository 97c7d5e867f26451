//! Metrics, statistical tests and campaign accounting.

mod campaign;
mod metrics;
mod report;
mod stats;

use thiserror::Error;

pub use metrics::{
    average_precision_at_k, f1_at_k, map_at_k, ndcg_at_k, pass_at_k, precision_at_k, recall_at_k,
    EmptyListPolicy,
};
pub use campaign::{
    back_translation_account, pass_at_k_table, path_rows, ranking_table, transition_matrix,
    validity_lists, BackTranslationTally, PassAtKRow, PathRow, RankingRow, TransitionCell,
    TransitionMatrix,
};
pub use report::{
    ComparisonReport, DifficultyRow, MetricsReport, PairTest, PathStatistics, ReportError,
    ReportInputs, RunColumn, BACK_TRANSLATION_CSV, COMPARISON_CSV, COMPARISON_JSON, DIFFICULTY_CSV,
    PASS_AT_K_CSV, PATHS_CSV, RANKING_CSV, REPORT_JSON, SCHEMA_VERSION, TRANSITIONS_CSV,
};
pub use stats::{cliffs_delta, cliffs_magnitude, mww_test, MannWhitney};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("pass@k needs 0 <= c <= n and 1 <= k <= n (n={n}, c={c}, k={k})")]
    PassAtKBounds { n: u32, c: u32, k: u32 },
    #[error("k={k} outside 1..={len}")]
    RankBounds { k: usize, len: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("sample contains NaN")]
    NanSample,
}
