//! Oracle-driven execution: the bitonic network runs bulk-synchronously (one
//! oracle batch per layer), the merge sort one comparison at a time. Both
//! permute their input by construction, whatever the oracle answers.

use crate::oracle::{ComparisonQuery, Criteria, Item, Oracle, VoteConfig};

use super::{SortOutcome, SortingNetwork, SortnetError};

fn effective_vote(vote: Option<&VoteConfig>) -> VoteConfig {
    vote.copied()
        .unwrap_or_else(|| VoteConfig::new(1).expect("k = 1 is odd"))
}

/// Execute the network over the items, one concurrent batch per layer.
///
/// Each comparator asks whether the item on its upper wire beats the item on
/// its lower wire: "yes" leaves the pair in place, "no" swaps it, so a perfect
/// oracle yields ascending order under the criteria.
pub fn execute_network(
    net: &SortingNetwork,
    items: &[Item],
    criteria: &Criteria,
    oracle: &Oracle,
    vote: Option<&VoteConfig>,
) -> Result<SortOutcome, SortnetError> {
    if items.len() != net.n() {
        return Err(SortnetError::SizeMismatch {
            expected: net.n(),
            got: items.len(),
        });
    }
    let vote = effective_vote(vote);
    let start = oracle.stats();
    let mut position: Vec<usize> = (0..items.len()).collect();
    let mut comparisons_issued = 0u64;

    for (layer_index, layer) in net.layers().iter().enumerate() {
        if layer.is_empty() {
            continue;
        }
        let queries: Vec<ComparisonQuery> = layer
            .comparators()
            .iter()
            .map(|c| {
                ComparisonQuery::new(
                    criteria.clone(),
                    items[position[c.hi]].clone(),
                    items[position[c.lo]].clone(),
                )
                .map_err(|source| SortnetError::OracleAt {
                    layer: layer_index,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        let answers = oracle
            .vote_comparison_batch(&queries, &vote)
            .map_err(|source| SortnetError::OracleAt {
                layer: layer_index,
                source,
            })?;
        comparisons_issued += layer.len() as u64 * vote.k() as u64;
        for (c, hi_beats_lo) in layer.comparators().iter().zip(answers) {
            if !hi_beats_lo {
                position.swap(c.lo, c.hi);
            }
        }
    }

    let elapsed = oracle.stats().since(&start);
    Ok(SortOutcome {
        order: position.iter().map(|&i| items[i].id().to_string()).collect(),
        comparisons_issued,
        layers_executed: net.depth() as u64,
        wall_time: elapsed.wall_time,
    })
}

/// Stable bottom-up merge sort over the oracle, sequential by nature.
///
/// Each merge step asks whether the left candidate beats the right one; "no"
/// takes the left element, so equal-looking items keep their input order.
/// Issues at most n * ceil(log2 n) comparisons.
pub fn oracle_merge_sort(
    items: &[Item],
    criteria: &Criteria,
    oracle: &Oracle,
    vote: Option<&VoteConfig>,
) -> Result<SortOutcome, SortnetError> {
    let vote = effective_vote(vote);
    let start = oracle.stats();
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut scratch: Vec<usize> = Vec::with_capacity(n);
    let mut comparisons = 0u64;

    let mut width = 1;
    while width < n {
        let mut merged: Vec<usize> = Vec::with_capacity(n);
        for chunk_start in (0..n).step_by(2 * width) {
            let mid = (chunk_start + width).min(n);
            let end = (chunk_start + 2 * width).min(n);
            let left = &order[chunk_start..mid];
            let right = &order[mid..end];
            scratch.clear();
            let (mut i, mut j) = (0, 0);
            while i < left.len() && j < right.len() {
                let q = ComparisonQuery::new(
                    criteria.clone(),
                    items[left[i]].clone(),
                    items[right[j]].clone(),
                )?;
                comparisons += 1;
                let left_beats_right = oracle.vote_comparison(&q, &vote)?;
                if left_beats_right {
                    scratch.push(right[j]);
                    j += 1;
                } else {
                    scratch.push(left[i]);
                    i += 1;
                }
            }
            scratch.extend_from_slice(&left[i..]);
            scratch.extend_from_slice(&right[j..]);
            merged.extend_from_slice(&scratch);
        }
        order = merged;
        width *= 2;
    }

    let elapsed = oracle.stats().since(&start);
    Ok(SortOutcome {
        order: order.iter().map(|&i| items[i].id().to_string()).collect(),
        comparisons_issued: comparisons * vote.k() as u64,
        layers_executed: comparisons,
        wall_time: elapsed.wall_time,
    })
}
