//! Batcher's bitonic sorting network for arbitrary input sizes.
//!
//! The power-of-two network is built by the classic recursive
//! compare-and-exchange schedule, flattened into (k, j) phases. Descending
//! comparators are then removed by the standard direction-flattening
//! transform: whenever a comparator would place its maximum on the lower
//! wire, it is replaced by an ascending comparator and the two wire labels
//! are swapped for everything downstream. With every comparator min-at-lo,
//! virtual +inf sentinels fed at the top wires n..m can never sink below a
//! real item, so padding reduces to dropping every comparator whose upper
//! wire is a sentinel position.

use super::{Comparator, Layer, SortingNetwork, SortnetError};

/// Largest n for which exhaustive 0-1 verification is allowed.
pub const VERIFY_BUDGET: usize = 24;

/// Build the ascending bitonic network for `n` inputs.
///
/// The network for m = next power of two >= n is pruned down to `n` wires;
/// depth stays log2(m) * (log2(m) + 1) / 2. `n = 1` yields an empty network.
pub fn build_bitonic_network(n: usize) -> Result<SortingNetwork, SortnetError> {
    if n == 0 {
        return Err(SortnetError::ZeroSize);
    }
    let m = n.next_power_of_two();
    if m == 1 {
        return SortingNetwork::new(1, Vec::new());
    }

    // Phase schedule with direction flags: (min_wire, max_wire) pairs.
    let mut flagged: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut k = 2;
    while k <= m {
        let mut j = k / 2;
        while j >= 1 {
            let mut layer = Vec::with_capacity(m / 2);
            for i in 0..m {
                let partner = i ^ j;
                if partner > i {
                    if i & k == 0 {
                        layer.push((i, partner)); // ascending: min stays low
                    } else {
                        layer.push((partner, i)); // descending: min goes high
                    }
                }
            }
            flagged.push(layer);
            j /= 2;
        }
        k *= 2;
    }

    // Direction-flattening: track the running wire relabeling.
    let mut relabel: Vec<usize> = (0..m).collect();
    let mut layers = Vec::with_capacity(flagged.len());
    for phase in flagged {
        let mut comparators = Vec::with_capacity(phase.len());
        for (min_wire, max_wire) in phase {
            let lo = relabel[min_wire];
            let hi = relabel[max_wire];
            let (lo, hi) = if lo < hi {
                (lo, hi)
            } else {
                relabel[min_wire] = hi;
                relabel[max_wire] = lo;
                (hi, lo)
            };
            // Prune comparators touching sentinel wires n..m.
            if hi < n {
                comparators.push(Comparator::new(lo, hi, n)?);
            }
        }
        layers.push(Layer::new(comparators)?);
    }
    SortingNetwork::new(n, layers)
}

/// Exhaustive 0-1 principle check: the network sorts every input iff it
/// sorts all 2^n binary sequences under a perfect min/max comparator.
pub fn verify_network(net: &SortingNetwork) -> Result<bool, SortnetError> {
    let n = net.n();
    if n > VERIFY_BUDGET {
        return Err(SortnetError::VerifyBudget {
            n,
            max: VERIFY_BUDGET,
        });
    }
    for input in 0u32..(1u32 << n) {
        let mut bits = input;
        for layer in net.layers() {
            for c in layer.comparators() {
                let lo_bit = (bits >> c.lo) & 1;
                let hi_bit = (bits >> c.hi) & 1;
                if lo_bit == 1 && hi_bit == 0 {
                    bits ^= (1 << c.lo) | (1 << c.hi);
                }
            }
        }
        if !is_sorted_mask(bits, n) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Bit p holds the value at position p; ascending means no 1 precedes a 0.
fn is_sorted_mask(bits: u32, n: usize) -> bool {
    if n <= 1 {
        return true;
    }
    let falling = bits & !(bits >> 1);
    falling & ((1 << (n - 1)) - 1) == 0
}
