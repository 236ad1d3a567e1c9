//! The oracle dispatcher: routes (query, sample) batches through a shared
//! cache to a backend, accumulates stats, runs majority votes, and optionally
//! appends every resolved query to a JSONL log.

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use dashmap::DashMap;
use once_cell::sync::OnceCell;
use serde::Serialize;

use super::prompt::{render_comparison_prompt, render_triplet_prompt};
use super::{
    ComparisonQuery, LlmBackend, LlmConfig, OracleError, OracleStats, QueryKey, SimulatedBackend,
    SimulatedOracleConfig, TripletQuery, VoteConfig,
};
use crate::digest;

/// One cache-missed (query, sample) pair handed to a backend.
#[derive(Debug, Clone)]
pub struct BinaryJob {
    pub key: QueryKey,
    pub prompt: String,
}

/// Backend answer for one job.
#[derive(Debug, Clone)]
pub struct BinaryResolution {
    pub answer: bool,
    /// Completion text as produced (or synthesized) by the backend.
    pub raw: String,
    /// True when the answer is the deterministic parse-failure fallback.
    pub parse_failed: bool,
}

/// Raw completion request for the scoring baselines.
#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub prompt: String,
    /// Lets the simulated backend answer a scoring prompt without parsing it.
    pub hint: ScoringHint,
}

#[derive(Debug, Clone)]
pub enum ScoringHint {
    None,
    Item(String),
    List(Vec<String>),
}

/// A query-answering backend. Implementations must be safe for concurrent
/// batch invocation from multiple workers.
pub trait OracleBackend: Send + Sync {
    /// Resolve cache-missed jobs, positionally.
    fn resolve_binary(&self, jobs: &[BinaryJob]) -> Result<Vec<BinaryResolution>, OracleError>;

    /// Raw completions for scoring-style prompts, positionally.
    fn complete(&self, requests: &[CompletionRequest]) -> Result<Vec<String>, OracleError>;

    /// Deterministic seconds charged per resolved batch; `None` measures the
    /// real clock.
    fn batch_seconds(&self) -> Option<f64> {
        None
    }

    /// Err when K > 1 voting cannot draw independent samples from this backend.
    fn ensure_vote_capable(&self) -> Result<(), OracleError> {
        Ok(())
    }

    /// How many times a failed parse is retried before falling back to "no".
    fn retry_limit(&self) -> u32 {
        0
    }
}

#[derive(Default)]
struct Counters {
    queries: AtomicU64,
    hits: AtomicU64,
    parse_failures: AtomicU64,
    batches: AtomicU64,
    wall_nanos: AtomicU64,
}

#[derive(Serialize)]
struct QueryLogRecord<'a> {
    kind: &'a str,
    criteria_sha256: String,
    ids: &'a [String],
    sample: u32,
    raw: &'a str,
    answer: bool,
    unix_ms: u128,
}

enum AnyQuery<'a> {
    Cmp(&'a ComparisonQuery),
    Tri(&'a TripletQuery),
}

impl AnyQuery<'_> {
    fn key(&self, sample: u32) -> QueryKey {
        match self {
            AnyQuery::Cmp(q) => QueryKey::comparison(q, sample),
            AnyQuery::Tri(q) => QueryKey::triplet(q, sample),
        }
    }

    fn prompt(&self) -> String {
        match self {
            AnyQuery::Cmp(q) => render_comparison_prompt(q),
            AnyQuery::Tri(q) => render_triplet_prompt(q),
        }
    }
}

/// Dispatcher over a backend, a shared answer cache, and stats counters.
///
/// The cache maps (criteria, ordered ids, sample index) to the resolved
/// boolean with read-check-insert semantics: repeated calls return the same
/// answer and reach the backend at most once per key. Simulated-backend
/// answers depend only on the key, never on call order, so determinism holds
/// under any interleaving.
pub struct Oracle {
    backend: Arc<dyn OracleBackend>,
    cache: DashMap<QueryKey, Arc<OnceCell<bool>>>,
    counters: Counters,
    log: Option<Mutex<BufWriter<std::fs::File>>>,
}

impl Oracle {
    pub fn new(backend: Arc<dyn OracleBackend>) -> Self {
        Oracle {
            backend,
            cache: DashMap::new(),
            counters: Counters::default(),
            log: None,
        }
    }

    pub fn simulated(config: SimulatedOracleConfig) -> Result<Self, OracleError> {
        Ok(Oracle::new(Arc::new(SimulatedBackend::new(config)?)))
    }

    pub fn llm(config: LlmConfig) -> Result<Self, OracleError> {
        Ok(Oracle::new(Arc::new(LlmBackend::new(config)?)))
    }

    /// Append every resolved query to a JSONL file:
    /// `{kind, criteria_sha256, ids, sample, raw, answer, unix_ms}`.
    pub fn with_query_log(mut self, path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(Mutex::new(BufWriter::new(file)));
        Ok(self)
    }

    pub fn stats(&self) -> OracleStats {
        OracleStats {
            queries_issued: self.counters.queries.load(Ordering::SeqCst),
            cache_hits: self.counters.hits.load(Ordering::SeqCst),
            parse_failures: self.counters.parse_failures.load(Ordering::SeqCst),
            batch_calls: self.counters.batches.load(Ordering::SeqCst),
            wall_time: self.counters.wall_nanos.load(Ordering::SeqCst) as f64 / 1e9,
        }
    }

    pub fn retry_limit(&self) -> u32 {
        self.backend.retry_limit()
    }

    // ---- binary queries ----------------------------------------------------

    /// True iff the oracle asserts `x` beats `y` under the criteria.
    pub fn answer_comparison(&self, q: &ComparisonQuery) -> Result<bool, OracleError> {
        Ok(self.answer_comparison_samples(&[(q, 0)])?[0])
    }

    /// Batch form; answers are positionally aligned with the input.
    pub fn answer_comparison_batch(&self, qs: &[ComparisonQuery]) -> Result<Vec<bool>, OracleError> {
        let pairs: Vec<(AnyQuery, u32)> = qs.iter().map(|q| (AnyQuery::Cmp(q), 0)).collect();
        self.answer_any(&pairs)
    }

    /// General form with explicit sample indices (vote draws).
    pub fn answer_comparison_samples(
        &self,
        qs: &[(&ComparisonQuery, u32)],
    ) -> Result<Vec<bool>, OracleError> {
        let pairs: Vec<(AnyQuery, u32)> =
            qs.iter().map(|(q, s)| (AnyQuery::Cmp(q), *s)).collect();
        self.answer_any(&pairs)
    }

    /// True iff the oracle asserts the anchor is closer to `cand_y` than to `cand_z`.
    pub fn answer_triplet(&self, q: &TripletQuery) -> Result<bool, OracleError> {
        Ok(self.answer_triplet_samples(&[(q, 0)])?[0])
    }

    pub fn answer_triplet_batch(&self, qs: &[TripletQuery]) -> Result<Vec<bool>, OracleError> {
        let pairs: Vec<(AnyQuery, u32)> = qs.iter().map(|q| (AnyQuery::Tri(q), 0)).collect();
        self.answer_any(&pairs)
    }

    pub fn answer_triplet_samples(
        &self,
        qs: &[(&TripletQuery, u32)],
    ) -> Result<Vec<bool>, OracleError> {
        let pairs: Vec<(AnyQuery, u32)> =
            qs.iter().map(|(q, s)| (AnyQuery::Tri(q), *s)).collect();
        self.answer_any(&pairs)
    }

    // ---- majority voting ---------------------------------------------------

    /// K independent samples (distinct sample indices), majority answer.
    pub fn vote_comparison(
        &self,
        q: &ComparisonQuery,
        vote: &VoteConfig,
    ) -> Result<bool, OracleError> {
        Ok(self.vote_comparison_batch(std::slice::from_ref(q), vote)?[0])
    }

    /// Vote over each query; all K samples of every query ride in one batch.
    pub fn vote_comparison_batch(
        &self,
        qs: &[ComparisonQuery],
        vote: &VoteConfig,
    ) -> Result<Vec<bool>, OracleError> {
        let pairs: Vec<(AnyQuery, u32)> = qs
            .iter()
            .flat_map(|q| (0..vote.k()).map(move |s| (AnyQuery::Cmp(q), s)))
            .collect();
        self.vote_over(pairs, vote)
    }

    pub fn vote_triplet(&self, q: &TripletQuery, vote: &VoteConfig) -> Result<bool, OracleError> {
        Ok(self.vote_triplet_batch(std::slice::from_ref(q), vote)?[0])
    }

    pub fn vote_triplet_batch(
        &self,
        qs: &[TripletQuery],
        vote: &VoteConfig,
    ) -> Result<Vec<bool>, OracleError> {
        let pairs: Vec<(AnyQuery, u32)> = qs
            .iter()
            .flat_map(|q| (0..vote.k()).map(move |s| (AnyQuery::Tri(q), s)))
            .collect();
        self.vote_over(pairs, vote)
    }

    fn vote_over(&self, pairs: Vec<(AnyQuery, u32)>, vote: &VoteConfig) -> Result<Vec<bool>, OracleError> {
        if vote.k() > 1 {
            self.backend.ensure_vote_capable()?;
        }
        let answers = self.answer_any(&pairs)?;
        Ok(answers
            .chunks(vote.k() as usize)
            .map(|chunk| chunk.iter().filter(|&&a| a).count() * 2 > chunk.len())
            .collect())
    }

    // ---- scoring completions ----------------------------------------------

    /// Raw completions (uncached); used by the scoring baselines.
    pub fn complete(&self, requests: &[CompletionRequest]) -> Result<Vec<String>, OracleError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        self.counters.batches.fetch_add(1, Ordering::SeqCst);
        self.counters
            .queries
            .fetch_add(requests.len() as u64, Ordering::SeqCst);
        let start = Instant::now();
        let out = self.backend.complete(requests)?;
        self.add_wall_time(start);
        Ok(out)
    }

    // ---- core dispatch -----------------------------------------------------

    fn answer_any(&self, pairs: &[(AnyQuery, u32)]) -> Result<Vec<bool>, OracleError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        self.counters.batches.fetch_add(1, Ordering::SeqCst);
        self.counters
            .queries
            .fetch_add(pairs.len() as u64, Ordering::SeqCst);

        let mut cells: Vec<Arc<OnceCell<bool>>> = Vec::with_capacity(pairs.len());
        let mut jobs: Vec<BinaryJob> = Vec::new();
        let mut job_cells: Vec<Arc<OnceCell<bool>>> = Vec::new();
        let mut pending: std::collections::HashSet<QueryKey> = std::collections::HashSet::new();

        for (query, sample) in pairs {
            let key = query.key(*sample);
            let cell = self
                .cache
                .entry(key.clone())
                .or_insert_with(|| Arc::new(OnceCell::new()))
                .clone();
            if cell.get().is_some() || pending.contains(&key) {
                self.counters.hits.fetch_add(1, Ordering::SeqCst);
            } else {
                pending.insert(key.clone());
                jobs.push(BinaryJob {
                    key,
                    prompt: query.prompt(),
                });
                job_cells.push(cell.clone());
            }
            cells.push(cell);
        }

        if !jobs.is_empty() {
            let start = Instant::now();
            let resolutions = self.backend.resolve_binary(&jobs)?;
            self.add_wall_time(start);
            debug_assert_eq!(resolutions.len(), jobs.len());
            for ((job, cell), res) in jobs.iter().zip(&job_cells).zip(&resolutions) {
                if res.parse_failed {
                    self.counters.parse_failures.fetch_add(1, Ordering::SeqCst);
                }
                // First writer wins; a concurrent duplicate just reads it back.
                let _ = cell.set(res.answer);
                self.log_record(job, res)?;
            }
            if let Some(log) = &self.log {
                log.lock().expect("query log lock").flush()?;
            }
        }

        cells
            .iter()
            .map(|cell| {
                cell.get().copied().ok_or_else(|| OracleError::Backend {
                    context: "cache".into(),
                    message: "backend returned fewer resolutions than jobs".into(),
                })
            })
            .collect()
    }

    fn add_wall_time(&self, start: Instant) {
        let nanos = match self.backend.batch_seconds() {
            Some(seconds) => (seconds * 1e9) as u64,
            None => start.elapsed().as_nanos() as u64,
        };
        self.counters.wall_nanos.fetch_add(nanos, Ordering::SeqCst);
    }

    fn log_record(&self, job: &BinaryJob, res: &BinaryResolution) -> Result<(), OracleError> {
        let Some(log) = &self.log else {
            return Ok(());
        };
        let record = QueryLogRecord {
            kind: match job.key.kind {
                super::QueryKind::Comparison => "comparison",
                super::QueryKind::Triplet => "triplet",
            },
            criteria_sha256: digest::sha256_hex(&[job.key.criteria.as_bytes()]),
            ids: &job.key.ids,
            sample: job.key.sample,
            raw: &res.raw,
            answer: res.answer,
            unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        };
        let mut guard = log.lock().expect("query log lock");
        serde_json::to_writer(&mut *guard, &record)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        guard.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{Criteria, GroundTruth, Item};
    use std::collections::BTreeMap;
    use std::io::BufRead;

    fn order_oracle(p: f64, seed: u64) -> Oracle {
        let mut map = BTreeMap::new();
        for (i, id) in ["a", "b", "c", "d", "e"].iter().enumerate() {
            map.insert(id.to_string(), i as i64);
        }
        Oracle::simulated(SimulatedOracleConfig {
            ground_truth: GroundTruth::Order(map),
            flip_probability: p,
            seed,
            batch_seconds: 1.0,
        })
        .unwrap()
    }

    fn query(x: &str, y: &str) -> ComparisonQuery {
        ComparisonQuery::new(
            Criteria::new("Is X bigger than Y?").unwrap(),
            Item::new(x, x).unwrap(),
            Item::new(y, y).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_answer_and_cache_hit() {
        let oracle = order_oracle(0.0, 1);
        let q = query("e", "a");
        assert!(oracle.answer_comparison(&q).unwrap());
        assert!(oracle.answer_comparison(&q).unwrap());
        let stats = oracle.stats();
        assert_eq!(stats.queries_issued, 2);
        assert_eq!(stats.cache_hits, 1);
        assert_eq!(stats.batch_calls, 2);
        // One backend round charged; the cached round is free.
        assert_eq!(stats.wall_time, 1.0);
    }

    #[test]
    fn batch_answers_align_with_single_queries() {
        let noisy = order_oracle(0.3, 99);
        let qs: Vec<ComparisonQuery> = [("a", "b"), ("d", "c"), ("b", "e"), ("a", "b")]
            .iter()
            .map(|(x, y)| query(x, y))
            .collect();
        let batch = noisy.answer_comparison_batch(&qs).unwrap();
        let fresh = order_oracle(0.3, 99);
        let singles: Vec<bool> = qs
            .iter()
            .map(|q| fresh.answer_comparison(q).unwrap())
            .collect();
        assert_eq!(batch, singles);
    }

    #[test]
    fn duplicate_queries_within_a_batch_share_one_resolution() {
        let oracle = order_oracle(0.0, 1);
        let qs = vec![query("a", "b"), query("a", "b"), query("a", "b")];
        let answers = oracle.answer_comparison_batch(&qs).unwrap();
        assert_eq!(answers, vec![false, false, false]);
        let stats = oracle.stats();
        assert_eq!(stats.queries_issued, 3);
        assert_eq!(stats.cache_hits, 2);
    }

    #[test]
    fn determinism_across_fresh_instances() {
        let seq: Vec<(&str, &str)> = vec![("a", "b"), ("c", "b"), ("e", "d"), ("b", "a")];
        let run = |seed| -> Vec<bool> {
            let oracle = order_oracle(0.25, seed);
            seq.iter()
                .map(|(x, y)| oracle.answer_comparison(&query(x, y)).unwrap())
                .collect()
        };
        assert_eq!(run(5), run(5));
        // Different noise seed should eventually differ somewhere.
        let mut any_diff = false;
        for seed in 0..20 {
            if run(seed) != run(seed + 100) {
                any_diff = true;
                break;
            }
        }
        assert!(any_diff);
    }

    #[test]
    fn vote_of_one_equals_single_query() {
        let oracle = order_oracle(0.4, 3);
        let q = query("c", "d");
        let vote = VoteConfig::new(1).unwrap();
        let voted = oracle.vote_comparison(&q, &vote).unwrap();
        let single = oracle.answer_comparison(&q).unwrap();
        assert_eq!(voted, single);
    }

    #[test]
    fn vote_uses_distinct_samples_in_one_batch() {
        let oracle = order_oracle(0.0, 3);
        let q = query("e", "a");
        let vote = VoteConfig::new(3).unwrap();
        assert!(oracle.vote_comparison(&q, &vote).unwrap());
        let stats = oracle.stats();
        assert_eq!(stats.queries_issued, 3);
        assert_eq!(stats.cache_hits, 0);
        assert_eq!(stats.batch_calls, 1);
    }

    #[test]
    fn vote_majority_beats_single_sample_accuracy() {
        // p(correct) = 0.9, K = 3: enumerated majority correctness is
        // p^3 + 3 p^2 (1-p) = 0.972. Monte-Carlo over sample windows.
        let oracle = order_oracle(0.1, 12);
        let q = query("e", "a"); // truth: yes
        let trials = 100_000u32;
        let pairs: Vec<(&ComparisonQuery, u32)> =
            (0..trials * 3).map(|s| (&q, s)).collect();
        let answers = oracle.answer_comparison_samples(&pairs).unwrap();
        let correct = answers
            .chunks(3)
            .filter(|c| c.iter().filter(|&&a| a).count() >= 2)
            .count();
        let rate = correct as f64 / trials as f64;
        assert!((rate - 0.972).abs() < 0.005, "rate={rate}");
    }

    #[test]
    fn query_log_appends_jsonl_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("queries.jsonl");
        let oracle = order_oracle(0.0, 1).with_query_log(&path).unwrap();
        oracle.answer_comparison(&query("a", "b")).unwrap();
        oracle.answer_comparison(&query("a", "b")).unwrap(); // cache hit, not re-logged
        oracle.answer_comparison(&query("b", "a")).unwrap();
        let file = std::fs::File::open(&path).unwrap();
        let lines: Vec<String> = std::io::BufReader::new(file)
            .lines()
            .map(|l| l.unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        let rec: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(rec["kind"], "comparison");
        assert_eq!(rec["ids"], serde_json::json!(["a", "b"]));
        assert_eq!(rec["answer"], false);
        assert_eq!(rec["raw"], "no");
        assert!(rec["criteria_sha256"].as_str().unwrap().len() == 64);
    }

    #[test]
    fn concurrent_batches_stay_deterministic() {
        let oracle = std::sync::Arc::new(order_oracle(0.3, 8));
        let qs: Vec<ComparisonQuery> = (0..50)
            .flat_map(|_| [("a", "b"), ("c", "d"), ("e", "b")])
            .map(|(x, y)| query(x, y))
            .collect();
        let expected = order_oracle(0.3, 8).answer_comparison_batch(&qs).unwrap();
        std::thread::scope(|scope| {
            for _ in 0..4 {
                let oracle = oracle.clone();
                let qs = qs.clone();
                let expected = expected.clone();
                scope.spawn(move || {
                    let got = oracle.answer_comparison_batch(&qs).unwrap();
                    assert_eq!(got, expected);
                });
            }
        });
    }
}
