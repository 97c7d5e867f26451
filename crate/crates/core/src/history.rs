//! Vector store of evaluated bugs with exact cosine top-k retrieval.
//!
//! Entries live in memory keyed by `(bug_id, iteration_written)` and, when a
//! path is given, in an append-only line-delimited file that is replayed on
//! open (later lines replace earlier ones with the same key).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::FeedbackRecord;
use crate::model::{LanguageId, LanguageSet, OutcomeCategory};

pub const DEFAULT_RETRIEVAL_K: usize = 5;
pub const ERROR_BUCKETS: usize = 8;

#[derive(Debug, Error)]
pub enum HistoryError {
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
    #[error("vector has dimension {got}, store expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("language {0} is not in the configured set")]
    UnknownLanguage(LanguageId),
    #[error("entry {bug_id}@{iteration}: {message}")]
    Invariant {
        bug_id: String,
        iteration: u32,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HistorySource {
    InitialDirect,
    TranslationBased,
}

/// The attributes a bug is encoded by.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Characteristics {
    pub language: LanguageId,
    pub difficulty: u32,
    pub outcome: OutcomeCategory,
    pub error_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairSummary {
    pub fixed: bool,
    pub successful_targets: Vec<LanguageId>,
    pub n: u32,
    pub c: u32,
    /// Target language tried in this iteration; `None` for direct repair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<LanguageId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub bug_id: String,
    pub source: HistorySource,
    pub characteristics: Characteristics,
    pub result: RepairSummary,
    pub vector: Vec<f64>,
    pub iteration_written: u32,
}

impl HistoryEntry {
    fn key(&self) -> (String, u32) {
        (self.bug_id.clone(), self.iteration_written)
    }

    fn check(&self) -> Result<(), String> {
        if self.bug_id.is_empty() {
            return Err("empty bug_id".into());
        }
        if self.result.c > self.result.n {
            return Err(format!("c={} exceeds n={}", self.result.c, self.result.n));
        }
        if self.vector.iter().any(|x| !x.is_finite()) {
            return Err("vector has non-finite components".into());
        }
        if self.source == HistorySource::InitialDirect {
            if self.iteration_written != 0 {
                return Err("INITIAL_DIRECT entries are written at iteration 0".into());
            }
            let src = self.characteristics.language;
            if self.result.successful_targets.iter().any(|l| *l != src) {
                return Err("INITIAL_DIRECT successes must be the source language".into());
            }
        }
        Ok(())
    }
}

/// Parse and sanity-check one store line.
pub fn parse_store_line(line: &str) -> Result<HistoryEntry, String> {
    let entry: HistoryEntry = serde_json::from_str(line).map_err(|e| e.to_string())?;
    entry.check()?;
    Ok(entry)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fixed-layout encoder: one-hot language, normalized difficulty, one-hot
/// outcome, hashed error-type buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoder {
    set: LanguageSet,
}

impl Encoder {
    pub fn new(set: LanguageSet) -> Self {
        Encoder { set }
    }

    pub fn dim(&self) -> usize {
        self.set.len() + 1 + OutcomeCategory::ALL.len() + ERROR_BUCKETS
    }

    pub fn language_set(&self) -> &LanguageSet {
        &self.set
    }

    pub fn encode(&self, ch: &Characteristics) -> Result<Vec<f64>, HistoryError> {
        let lang = self
            .set
            .index(ch.language)
            .ok_or(HistoryError::UnknownLanguage(ch.language))?;
        let mut v = vec![0.0; self.dim()];
        v[lang] = 1.0;
        let base = self.set.len();
        let d = (f64::from(ch.difficulty) - 800.0) / 2700.0;
        v[base] = d.clamp(0.0, 1.0);
        v[base + 1 + ch.outcome.index()] = 1.0;
        let bucket = (fnv1a(ch.error_type.as_bytes()) % ERROR_BUCKETS as u64) as usize;
        v[base + 1 + OutcomeCategory::ALL.len() + bucket] = 1.0;
        Ok(v)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub similarity: f64,
    pub entry: HistoryEntry,
}

impl Neighbor {
    pub fn to_feedback(&self) -> FeedbackRecord {
        let e = &self.entry;
        FeedbackRecord {
            bug_id: e.bug_id.clone(),
            similarity: self.similarity,
            language: e.characteristics.language,
            difficulty: e.characteristics.difficulty,
            outcome: e.characteristics.outcome,
            error_type: e.characteristics.error_type.clone(),
            target: e.result.target,
            fixed: e.result.fixed,
            successful_targets: e.result.successful_targets.clone(),
            n: e.result.n,
            c: e.result.c,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub query: String,
    pub initial: Vec<Neighbor>,
    pub translation: Vec<Neighbor>,
}

/// Candidate ordered so that the heap's maximum is the worst kept result.
struct Cand<'a> {
    sim: f64,
    entry: &'a HistoryEntry,
}

impl Cand<'_> {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then_with(|| self.entry.bug_id.cmp(&other.entry.bug_id))
            .then_with(|| self.entry.iteration_written.cmp(&other.entry.iteration_written))
    }
}

impl PartialEq for Cand<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}
impl Eq for Cand<'_> {}
impl PartialOrd for Cand<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cand<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}

pub struct HistoryStore {
    encoder: Encoder,
    path: Option<PathBuf>,
    entries: BTreeMap<(String, u32), HistoryEntry>,
}

impl HistoryStore {
    pub fn in_memory(encoder: Encoder) -> Self {
        HistoryStore {
            encoder,
            path: None,
            entries: BTreeMap::new(),
        }
    }

    /// Open (or create) a store file and rebuild the index from it.
    pub fn open(path: &Path, encoder: Encoder) -> Result<Self, HistoryError> {
        let mut store = Self::in_memory(encoder);
        store.path = Some(path.to_path_buf());
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(source) => {
                return Err(HistoryError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| HistoryError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let entry = parse_store_line(line).map_err(malformed)?;
            if entry.vector.len() != store.encoder.dim() {
                return Err(malformed(format!(
                    "vector has dimension {}, store expects {}",
                    entry.vector.len(),
                    store.encoder.dim()
                )));
            }
            store.entries.insert(entry.key(), entry);
        }
        Ok(store)
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.values()
    }

    /// Build an entry whose vector comes from this store's encoder.
    pub fn make_entry(
        &self,
        bug_id: &str,
        source: HistorySource,
        characteristics: Characteristics,
        result: RepairSummary,
        iteration_written: u32,
    ) -> Result<HistoryEntry, HistoryError> {
        let vector = self.encoder.encode(&characteristics)?;
        Ok(HistoryEntry {
            bug_id: bug_id.to_string(),
            source,
            characteristics,
            result,
            vector,
            iteration_written,
        })
    }

    /// Insert or replace a batch. The whole batch is validated before any
    /// of it is written.
    pub fn upsert_batch(&mut self, mut batch: Vec<HistoryEntry>) -> Result<(), HistoryError> {
        for e in &batch {
            if e.vector.len() != self.encoder.dim() {
                return Err(HistoryError::Dimension {
                    expected: self.encoder.dim(),
                    got: e.vector.len(),
                });
            }
            e.check().map_err(|message| HistoryError::Invariant {
                bug_id: e.bug_id.clone(),
                iteration: e.iteration_written,
                message,
            })?;
        }
        batch.sort_by_key(|e| e.key());
        if let Some(path) = &self.path {
            let io = |source| HistoryError::Io {
                path: path.clone(),
                source,
            };
            let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
            let mut w = BufWriter::new(file);
            for e in &batch {
                let line = serde_json::to_string(e).expect("entries serialize");
                writeln!(w, "{line}").map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        for e in batch {
            self.entries.insert(e.key(), e);
        }
        Ok(())
    }

    /// Top-k neighbours of `query` per partition, excluding `query_bug`.
    pub fn retrieve_vector(&self, query_bug: &str, query: &[f64], k: usize) -> RetrievalResult {
        let mut heaps: [BinaryHeap<Cand>; 2] = [BinaryHeap::new(), BinaryHeap::new()];
        if k > 0 {
            for e in self.entries.values().filter(|e| e.bug_id != query_bug) {
                let heap = &mut heaps[e.source as usize];
                let cand = Cand {
                    sim: cosine(query, &e.vector),
                    entry: e,
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().expect("non-empty") {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        let [initial, translation] = heaps.map(|h| {
            h.into_sorted_vec()
                .into_iter()
                .map(|c| Neighbor {
                    similarity: c.sim,
                    entry: c.entry.clone(),
                })
                .collect()
        });
        RetrievalResult {
            query: query_bug.to_string(),
            initial,
            translation,
        }
    }

    pub fn retrieve(
        &self,
        query_bug: &str,
        characteristics: &Characteristics,
        k: usize,
    ) -> Result<RetrievalResult, HistoryError> {
        let q = self.encoder.encode(characteristics)?;
        Ok(self.retrieve_vector(query_bug, &q, k))
    }

    /// Dump all entries, in key order, as line-delimited records.
    pub fn export(&self, path: &Path) -> Result<(), HistoryError> {
        let io = |source| HistoryError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        for e in self.entries.values() {
            writeln!(w, "{}", serde_json::to_string(e).expect("entries serialize")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use LanguageId::*;

    fn set() -> LanguageSet {
        LanguageSet::new(vec![C, Python, Rust]).unwrap()
    }

    fn ch(lang: LanguageId, difficulty: u32, error: &str) -> Characteristics {
        Characteristics {
            language: lang,
            difficulty,
            outcome: OutcomeCategory::WrongAnswer,
            error_type: error.into(),
        }
    }

    fn summary(fixed: bool) -> RepairSummary {
        RepairSummary {
            fixed,
            successful_targets: vec![],
            n: 20,
            c: u32::from(fixed),
            target: None,
        }
    }

    fn entry(store: &HistoryStore, id: &str, it: u32, c: Characteristics) -> HistoryEntry {
        let source = if it == 0 {
            HistorySource::InitialDirect
        } else {
            HistorySource::TranslationBased
        };
        store.make_entry(id, source, c, summary(false), it).unwrap()
    }

    #[test]
    fn encoding_layout() {
        let enc = Encoder::new(set());
        assert_eq!(enc.dim(), 3 + 1 + 6 + 8);
        let a = enc.encode(&ch(C, 800, "WRONG_ANSWER")).unwrap();
        let b = enc.encode(&ch(C, 3500, "WRONG_ANSWER")).unwrap();
        let diff: Vec<usize> = (0..a.len()).filter(|i| a[*i] != b[*i]).collect();
        assert_eq!(diff, vec![3]);
        assert_eq!((a[3], b[3]), (0.0, 1.0));
        assert_eq!(enc.encode(&ch(C, 100, "x")).unwrap()[3], 0.0);
        assert!(matches!(enc.encode(&ch(Go, 900, "x")), Err(HistoryError::UnknownLanguage(Go))));
    }

    #[test]
    fn cross_language_similarity_by_hand() {
        let enc = Encoder::new(set());
        let a = enc.encode(&ch(C, 1475, "WRONG_ANSWER")).unwrap();
        let b = enc.encode(&ch(Python, 1475, "WRONG_ANSWER")).unwrap();
        // shared: difficulty 0.25, outcome 1, bucket 1; each norm^2 = 1 + 0.0625 + 1 + 1
        let expected = (0.0625 + 2.0) / (3.0625);
        assert!((cosine(&a, &b) - expected).abs() < 1e-12);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upsert_replace_and_dimension_check() {
        let mut store = HistoryStore::in_memory(Encoder::new(set()));
        let batch: Vec<_> = (0..5).map(|i| entry(&store, &format!("b{i}"), 0, ch(C, 1000, "e"))).collect();
        store.upsert_batch(batch).unwrap();
        assert_eq!(store.len(), 5);
        let mut again = entry(&store, "b0", 0, ch(C, 2000, "e"));
        again.result = summary(true);
        again.result.successful_targets = vec![C];
        store.upsert_batch(vec![again.clone()]).unwrap();
        assert_eq!(store.len(), 5);
        assert_eq!(store.entries().next().unwrap(), &again);
        let mut bad = entry(&store, "b9", 0, ch(C, 1000, "e"));
        bad.vector.pop();
        assert!(matches!(store.upsert_batch(vec![bad]), Err(HistoryError::Dimension { .. })));
        let mut bad = entry(&store, "b9", 0, ch(C, 1000, "e"));
        bad.result.successful_targets = vec![Rust];
        assert!(matches!(store.upsert_batch(vec![bad]), Err(HistoryError::Invariant { .. })));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.jsonl");
        let mut store = HistoryStore::open(&path, Encoder::new(set())).unwrap();
        let e1 = entry(&store, "b1", 0, ch(C, 1000, "e"));
        let e2 = entry(&store, "b2", 1, ch(Rust, 2000, "f"));
        store.upsert_batch(vec![e1.clone(), e2.clone()]).unwrap();
        let mut e1b = e1.clone();
        e1b.characteristics.difficulty = 1100;
        e1b.vector = store.encoder().encode(&e1b.characteristics).unwrap();
        store.upsert_batch(vec![e1b.clone()]).unwrap();
        drop(store);
        let store = HistoryStore::open(&path, Encoder::new(set())).unwrap();
        assert_eq!(store.entries().cloned().collect::<Vec<_>>(), vec![e1b, e2]);
        let smaller = LanguageSet::new(vec![C, Rust]).unwrap();
        assert!(matches!(
            HistoryStore::open(&path, Encoder::new(smaller)),
            Err(HistoryError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn retrieval_examples() {
        let mut store = HistoryStore::in_memory(Encoder::new(set()));
        let q = ch(C, 1000, "e");
        assert_eq!(store.retrieve("q", &q, 5).unwrap(), RetrievalResult {
            query: "q".into(),
            ..Default::default()
        });
        let batch = vec![
            entry(&store, "a", 0, ch(Python, 3000, "x")),
            entry(&store, "b", 0, ch(C, 1000, "e")),
            entry(&store, "c", 0, ch(C, 1100, "e")),
            entry(&store, "q", 0, ch(C, 1000, "e")),
            entry(&store, "d", 2, ch(Rust, 1000, "e")),
        ];
        store.upsert_batch(batch).unwrap();
        let r = store.retrieve("q", &q, 5).unwrap();
        let ids: Vec<_> = r.initial.iter().map(|n| n.entry.bug_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c", "a"]);
        assert_eq!(r.translation.len(), 1);
        assert!(r.initial.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        assert_eq!(store.retrieve("q", &q, 1).unwrap().initial.len(), 1);
    }

    fn brute(store: &HistoryStore, q: &[f64], exclude: &str, k: usize, src: HistorySource) -> Vec<(String, u32)> {
        let mut all: Vec<_> = store
            .entries()
            .filter(|e| e.source == src && e.bug_id != exclude)
            .map(|e| (cosine(q, &e.vector), e.bug_id.clone(), e.iteration_written))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        all.into_iter().take(k).map(|(_, b, i)| (b, i)).collect()
    }

    proptest! {
        #[test]
        fn retrieval_equals_brute_force(
            rows in proptest::collection::vec((0usize..3, 800u32..3600, 0usize..6, 0u8..4, 0u32..3), 0..60),
            k in 1usize..8,
            qi in 0usize..3,
        ) {
            let mut store = HistoryStore::in_memory(Encoder::new(set()));
            let langs = [C, Python, Rust];
            let batch: Vec<_> = rows.iter().enumerate().map(|(i, (l, d, o, e, it))| {
                let mut c = ch(langs[*l], *d, &format!("err{e}"));
                c.outcome = OutcomeCategory::ALL[*o];
                entry(&store, &format!("b{}", i % 17), *it, c)
            }).collect();
            store.upsert_batch(batch).unwrap();
            let q = store.encoder().encode(&ch(langs[qi], 1500, "err1")).unwrap();
            let r = store.retrieve_vector("b3", &q, k);
            let got = |v: &[Neighbor]| v.iter().map(|n| (n.entry.bug_id.clone(), n.entry.iteration_written)).collect::<Vec<_>>();
            prop_assert_eq!(got(&r.initial), brute(&store, &q, "b3", k, HistorySource::InitialDirect));
            prop_assert_eq!(got(&r.translation), brute(&store, &q, "b3", k, HistorySource::TranslationBased));
        }

        #[test]
        fn cosine_symmetric_and_bounded(a in proptest::collection::vec(-5.0f64..5.0, 6), b in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let s = cosine(&a, &b);
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert_eq!(s, cosine(&b, &a));
        }

        #[test]
        fn encoding_never_zero(l in 0usize..3, d in 0u32..5000, o in 0usize..6, e in ".*") {
            let enc = Encoder::new(set());
            let mut c = ch([C, Python, Rust][l], d, &e);
            c.outcome = OutcomeCategory::ALL[o];
            prop_assert!(enc.encode(&c).unwrap().iter().any(|x| *x != 0.0));
        }
    }
}
