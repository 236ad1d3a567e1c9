//! The comparison oracle: domain types, prompt rendering, answer parsing,
//! backends (simulated ground truth with noise, or an OpenAI-compatible LLM
//! endpoint), a shared query cache, and K-sample majority voting.

mod client;
mod llm;
mod prompt;
mod simulated;

pub use client::{
    BinaryJob, BinaryResolution, CompletionRequest, Oracle, OracleBackend, ScoringHint,
};
pub use llm::{LlmBackend, LlmConfig};
pub use prompt::{
    parse_binary_answer, render_comparison_prompt, render_triplet_prompt, strip_thinking,
};
pub use simulated::{GroundTruth, SimulatedBackend, SimulatedOracleConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("criteria text must be non-empty")]
    EmptyCriteria,
    #[error("item {0:?} has empty text")]
    EmptyItemText(String),
    #[error("item ids in a query must be pairwise distinct, got {0:?}")]
    DuplicateQueryIds(String),
    #[error("vote size must be a positive odd integer, got {0}")]
    InvalidVoteSize(u32),
    #[error("flip probability must lie in [0, 0.5), got {0}")]
    InvalidFlipProbability(f64),
    #[error("hoeffding bound requires p in (0.5, 1], got {0}")]
    BoundOutOfDomain(f64),
    #[error("id {0:?} is missing from the simulated ground truth")]
    UnknownItem(String),
    #[error("ground truth coordinates for {0:?} and {1:?} have different dimensions")]
    DimensionMismatch(String, String),
    #[error("simulated ground truth is {have}, but the query needs {need}")]
    GroundTruthKind {
        have: &'static str,
        need: &'static str,
    },
    #[error("K-sample voting over an LLM needs temperature > 0, got {0}")]
    VotingNeedsTemperature(f64),
    #[error("cannot parse model output as {expected}: {raw:?}")]
    ParseFailure { expected: &'static str, raw: String },
    #[error("backend request failed for {context}: {message}")]
    Backend { context: String, message: String },
    #[error("scoring over the simulated backend requires a scoring hint")]
    MissingScoringHint,
    #[error("query log i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// An identified natural-language string participating in a sort or clustering run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Item {
    id: String,
    text: String,
}

impl Item {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, OracleError> {
        let id = id.into();
        let text = text.into();
        if text.is_empty() {
            return Err(OracleError::EmptyItemText(id));
        }
        Ok(Item { id, text })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// The natural-language comparison criterion interpolated into every prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Criteria {
    text: String,
}

impl Criteria {
    pub fn new(text: impl Into<String>) -> Result<Self, OracleError> {
        let text = text.into();
        if text.is_empty() {
            return Err(OracleError::EmptyCriteria);
        }
        Ok(Criteria { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// "Does `x` beat `y` under the criteria?"
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComparisonQuery {
    criteria: Criteria,
    x: Item,
    y: Item,
}

impl ComparisonQuery {
    pub fn new(criteria: Criteria, x: Item, y: Item) -> Result<Self, OracleError> {
        if x.id == y.id {
            return Err(OracleError::DuplicateQueryIds(x.id));
        }
        Ok(ComparisonQuery { criteria, x, y })
    }

    pub fn criteria(&self) -> &Criteria {
        &self.criteria
    }

    pub fn x(&self) -> &Item {
        &self.x
    }

    pub fn y(&self) -> &Item {
        &self.y
    }
}

/// "Is `anchor` closer to `cand_y` than to `cand_z`?"
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TripletQuery {
    criteria: Criteria,
    anchor: Item,
    cand_y: Item,
    cand_z: Item,
}

impl TripletQuery {
    pub fn new(
        criteria: Criteria,
        anchor: Item,
        cand_y: Item,
        cand_z: Item,
    ) -> Result<Self, OracleError> {
        if anchor.id == cand_y.id || anchor.id == cand_z.id || cand_y.id == cand_z.id {
            let dup = if anchor.id == cand_y.id || anchor.id == cand_z.id {
                anchor.id.clone()
            } else {
                cand_y.id.clone()
            };
            return Err(OracleError::DuplicateQueryIds(dup));
        }
        Ok(TripletQuery {
            criteria,
            anchor,
            cand_y,
            cand_z,
        })
    }

    pub fn criteria(&self) -> &Criteria {
        &self.criteria
    }

    pub fn anchor(&self) -> &Item {
        &self.anchor
    }

    pub fn cand_y(&self) -> &Item {
        &self.cand_y
    }

    pub fn cand_z(&self) -> &Item {
        &self.cand_z
    }
}

/// Which answer vocabulary a completion is parsed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vocabulary {
    /// "yes" maps to true, "no" to false.
    YesNo,
    /// "X" maps to true, "Y" to false.
    XY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Comparison,
    Triplet,
}

impl QueryKind {
    pub fn vocabulary(self) -> Vocabulary {
        match self {
            QueryKind::Comparison => Vocabulary::YesNo,
            QueryKind::Triplet => Vocabulary::XY,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            QueryKind::Comparison => "comparison",
            QueryKind::Triplet => "triplet",
        }
    }
}

/// Canonical cache key: (kind, criteria, ordered ids, sample index).
///
/// Queries are cached exactly as asked — (x, y) and (y, x) are distinct keys,
/// because an LLM may legitimately answer them differently. The sample index
/// keeps the K vote draws independent; sample 0 is shared with non-voting calls.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryKey {
    pub kind: QueryKind,
    pub criteria: String,
    pub ids: Vec<String>,
    pub sample: u32,
}

impl QueryKey {
    pub fn comparison(q: &ComparisonQuery, sample: u32) -> Self {
        QueryKey {
            kind: QueryKind::Comparison,
            criteria: q.criteria.text.clone(),
            ids: vec![q.x.id.clone(), q.y.id.clone()],
            sample,
        }
    }

    pub fn triplet(q: &TripletQuery, sample: u32) -> Self {
        QueryKey {
            kind: QueryKind::Triplet,
            criteria: q.criteria.text.clone(),
            ids: vec![q.anchor.id.clone(), q.cand_y.id.clone(), q.cand_z.id.clone()],
            sample,
        }
    }

    /// Stable byte encoding used by the deterministic noise stream.
    pub(crate) fn canonical_parts(&self) -> Vec<&[u8]> {
        let mut parts: Vec<&[u8]> = vec![self.kind.tag().as_bytes(), self.criteria.as_bytes()];
        for id in &self.ids {
            parts.push(id.as_bytes());
        }
        parts
    }

    /// Description used in backend error contexts.
    pub fn describe(&self) -> String {
        format!(
            "{} query over [{}] (sample {})",
            self.kind.tag(),
            self.ids.join(", "),
            self.sample
        )
    }
}

/// Odd vote size for majority robustification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct VoteConfig {
    k: u32,
}

impl VoteConfig {
    pub fn new(k: u32) -> Result<Self, OracleError> {
        if k == 0 || k % 2 == 0 {
            return Err(OracleError::InvalidVoteSize(k));
        }
        Ok(VoteConfig { k })
    }

    pub fn k(&self) -> u32 {
        self.k
    }
}

impl TryFrom<u32> for VoteConfig {
    type Error = String;

    fn try_from(k: u32) -> Result<Self, String> {
        VoteConfig::new(k).map_err(|e| e.to_string())
    }
}

impl From<VoteConfig> for u32 {
    fn from(v: VoteConfig) -> u32 {
        v.k
    }
}

/// Counters accumulated by an [`Oracle`] instance.
///
/// `queries_issued` counts every (query, sample) answered through the oracle,
/// including cache hits; `cache_hits` is the subset served from the cache.
/// `batch_calls` counts batched oracle invocations (one per sorting-network
/// layer, one per merge-sort comparison). `wall_time` is seconds spent in the
/// backend: the real clock for an LLM, or a deterministic per-batch charge for
/// the simulated backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleStats {
    pub queries_issued: u64,
    pub cache_hits: u64,
    pub parse_failures: u64,
    pub batch_calls: u64,
    pub wall_time: f64,
}

impl OracleStats {
    /// Counter deltas since an earlier snapshot.
    pub fn since(&self, earlier: &OracleStats) -> OracleStats {
        OracleStats {
            queries_issued: self.queries_issued - earlier.queries_issued,
            cache_hits: self.cache_hits - earlier.cache_hits,
            parse_failures: self.parse_failures - earlier.parse_failures,
            batch_calls: self.batch_calls - earlier.batch_calls,
            wall_time: self.wall_time - earlier.wall_time,
        }
    }
}

/// Lower bound on K-sample majority-vote correctness when each sample is
/// independently correct with probability `p`: `1 - exp(-K(2p-1)^2 / 2)`.
pub fn hoeffding_bound(p: f64, k: u32) -> Result<f64, OracleError> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(OracleError::BoundOutOfDomain(p));
    }
    if k == 0 || k % 2 == 0 {
        return Err(OracleError::InvalidVoteSize(k));
    }
    let margin = 2.0 * p - 1.0;
    Ok(1.0 - (-(k as f64) * margin * margin / 2.0).exp())
}
