//! Lexical baseline: token sets and Jaccard distance.

use std::collections::BTreeSet;

/// Lowercase, split on any non-alphanumeric character, drop empties.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// `J = 1 - |A ∩ B| / |A ∪ B|`; two empty sets are identically empty, J = 0.
pub fn jaccard_distance(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let intersection = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    1.0 - intersection / union
}
