//! Sorting procedures driven by the comparison oracle: a layer-parallel
//! bitonic sorting network and a sequential stable merge sort, plus the
//! invariance bookkeeping around them.

mod bitonic;
mod run;

pub use bitonic::{build_bitonic_network, verify_network};
pub use run::{execute_network, oracle_merge_sort};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::OracleError;

#[derive(Debug, Error)]
pub enum SortnetError {
    #[error("network size must be at least 1")]
    ZeroSize,
    #[error("comparator ({lo}, {hi}) needs lo < hi within [0, {n})")]
    BadComparator { lo: usize, hi: usize, n: usize },
    #[error("layer touches wire {0} twice; comparators within a layer must be disjoint")]
    OverlappingLayer(usize),
    #[error("0-1 verification is limited to n <= {max}, got {n}")]
    VerifyBudget { n: usize, max: usize },
    #[error("network is empty")]
    EmptyNetwork,
    #[error("network expects {expected} items, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("oracle failure at layer {layer}: {source}")]
    OracleAt {
        layer: usize,
        #[source]
        source: OracleError,
    },
    #[error("oracle failure during merge: {0}")]
    Oracle(#[from] OracleError),
}

/// A compare-and-exchange pair: the smaller element lands on `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparator {
    pub lo: usize,
    pub hi: usize,
}

impl Comparator {
    pub fn new(lo: usize, hi: usize, n: usize) -> Result<Self, SortnetError> {
        if lo >= hi || hi >= n {
            return Err(SortnetError::BadComparator { lo, hi, n });
        }
        Ok(Comparator { lo, hi })
    }
}

/// One parallel step: disjoint comparators that may run concurrently.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    comparators: Vec<Comparator>,
}

impl Layer {
    pub fn new(comparators: Vec<Comparator>) -> Result<Self, SortnetError> {
        let mut seen = std::collections::HashSet::new();
        for c in &comparators {
            for wire in [c.lo, c.hi] {
                if !seen.insert(wire) {
                    return Err(SortnetError::OverlappingLayer(wire));
                }
            }
        }
        Ok(Layer { comparators })
    }

    pub fn comparators(&self) -> &[Comparator] {
        &self.comparators
    }

    pub fn len(&self) -> usize {
        self.comparators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparators.is_empty()
    }
}

/// A depth-ordered sequence of layers over `n` wires, sorting ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortingNetwork {
    n: usize,
    layers: Vec<Layer>,
}

impl SortingNetwork {
    pub fn new(n: usize, layers: Vec<Layer>) -> Result<Self, SortnetError> {
        if n == 0 {
            return Err(SortnetError::ZeroSize);
        }
        for layer in &layers {
            for c in layer.comparators() {
                Comparator::new(c.lo, c.hi, n)?;
            }
        }
        Ok(SortingNetwork { n, layers })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of parallel steps.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn comparator_count(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    /// Compact JSON: `{n, depth, comparator_count, layers: [[[lo, hi], ...], ...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "depth": self.depth(),
            "comparator_count": self.comparator_count(),
            "layers": self
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .comparators()
                        .iter()
                        .map(|c| serde_json::json!([c.lo, c.hi]))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        })
    }
}

/// Outcome of one oracle-driven sort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortOutcome {
    /// Ordered item ids, ascending under the criteria.
    pub order: Vec<String>,
    /// Oracle queries issued (logical comparisons times the vote size).
    pub comparisons_issued: u64,
    /// Sequential oracle rounds: layers for the network, comparisons for the merge sort.
    pub layers_executed: u64,
    /// Seconds spent in the oracle backend during this run.
    pub wall_time: f64,
}

/// Count output invariance violations: (duplicates, missing).
///
/// `duplicates` sums (occurrences - 1) over distinct output ids; `missing`
/// counts input ids absent from the output. Permutations yield (0, 0).
pub fn check_permutation_invariance(input_ids: &[String], output_ids: &[String]) -> (u64, u64) {
    let mut output_counts: std::collections::HashMap<&str, u64> = std::collections::HashMap::new();
    for id in output_ids {
        *output_counts.entry(id.as_str()).or_insert(0) += 1;
    }
    let duplicates = output_counts.values().map(|&c| c - 1).sum();
    let missing = input_ids
        .iter()
        .filter(|id| !output_counts.contains_key(id.as_str()))
        .count() as u64;
    (duplicates, missing)
}

/// Comparator count over depth: the parallel speedup ceiling of the network.
pub fn theoretical_speedup(net: &SortingNetwork) -> Result<f64, SortnetError> {
    if net.depth() == 0 || net.comparator_count() == 0 {
        return Err(SortnetError::EmptyNetwork);
    }
    Ok(net.comparator_count() as f64 / net.depth() as f64)
}
