//! Verbalized algorithms: classical sorting and ordinal-embedding algorithms whose
//! elementary comparison steps are delegated to a yes/no oracle — either a live LLM
//! endpoint speaking the OpenAI chat-completions protocol or a deterministic
//! simulated noisy oracle.
//!
//! The crate is organized around five subsystems:
//!
//! - [`oracle`]: prompt rendering, answer parsing, query caching, simulated and
//!   LLM backends, and K-sample majority voting.
//! - [`sortnet`]: bitonic sorting networks executed layer-by-layer against the
//!   oracle, plus a sequential stable merge sort over the same oracle.
//! - [`embed`]: t-STE ordinal embedding fitted to triplet answers, and the
//!   Jaccard-distance + classical-MDS baseline.
//! - [`metrics`]: Kendall tau-b rank correlation, the clustering rank score, and
//!   cluster extraction from duplicate links.
//! - [`harness`]: dataset loading, experiment configuration, multi-seed runs,
//!   scoring baselines, and report emission. The `va` binary wraps it.

pub mod embed;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod sortnet;

pub(crate) mod digest;
