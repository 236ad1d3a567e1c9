//! Evaluation metrics: Kendall tau-b rank correlation, the clustering rank
//! score, and ground-truth cluster extraction from duplicate links.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("paired sample needs at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("paired sample lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("tau_b is undefined: every pair is tied on {axis}")]
    AllTied { axis: &'static str },
    #[error("output is not a permutation of the labeled ids: {duplicates} duplicates, {missing} missing")]
    InvarianceViolation { duplicates: u64, missing: u64 },
    #[error("output id {0:?} has no ground-truth ordinal")]
    MissingOrdinal(String),
    #[error("cluster {0:?} has fewer than 2 members")]
    SingletonCluster(String),
    #[error("cluster member {0:?} is not embedded")]
    NotEmbedded(String),
    #[error("embedding has {rows} rows but {ids} ids")]
    RowMismatch { rows: usize, ids: usize },
    #[error("no item belongs to a scorable cluster")]
    NoScorableItems,
}

/// Positionally paired ordinal observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedPairSample {
    x_values: Vec<i64>,
    y_values: Vec<i64>,
}

impl RankedPairSample {
    pub fn new(x_values: Vec<i64>, y_values: Vec<i64>) -> Result<Self, MetricsError> {
        if x_values.len() != y_values.len() {
            return Err(MetricsError::LengthMismatch {
                x: x_values.len(),
                y: y_values.len(),
            });
        }
        if x_values.len() < 2 {
            return Err(MetricsError::TooShort(x_values.len()));
        }
        Ok(RankedPairSample { x_values, y_values })
    }

    pub fn len(&self) -> usize {
        self.x_values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Kendall tau-b over all n-choose-2 pairs:
/// `(|P| - |Q|) / sqrt((|P| + |Q| + |T|) (|P| + |Q| + |U|))`,
/// where P/Q are concordant/discordant pairs, T is tied on x only, U tied on
/// y only; pairs tied on both count in neither T nor U.
///
/// Computed in O(n log n): sort by (x, y), count tie runs, and count
/// discordant pairs as merge-sort inversions of the y sequence.
pub fn kendall_tau_b(sample: &RankedPairSample) -> Result<f64, MetricsError> {
    let n = sample.len();
    let mut pairs: Vec<(i64, i64)> = sample
        .x_values
        .iter()
        .copied()
        .zip(sample.y_values.iter().copied())
        .collect();
    pairs.sort_unstable();

    let total = pair_count(n);
    let tied_x = run_pairs(pairs.iter().map(|p| p.0));
    let tied_both = run_pairs(pairs.iter().map(|p| *p));
    if tied_x == total {
        return Err(MetricsError::AllTied { axis: "x" });
    }

    let mut y_sequence: Vec<i64> = pairs.iter().map(|p| p.1).collect();
    let discordant = count_inversions(&mut y_sequence);
    // y_sequence is now sorted.
    let tied_y = run_pairs(y_sequence.iter().copied());
    if tied_y == total {
        return Err(MetricsError::AllTied { axis: "y" });
    }

    // total = P + Q + (T + B) + (U + B) - B, so:
    let concordant_minus_discordant =
        total as f64 - tied_x as f64 - tied_y as f64 + tied_both as f64
            - 2.0 * discordant as f64;
    let denominator = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    Ok((concordant_minus_discordant / denominator).clamp(-1.0, 1.0))
}

fn pair_count(n: usize) -> u64 {
    (n as u64) * (n as u64 - 1) / 2
}

/// Sum of C(run, 2) over maximal runs of equal consecutive values.
fn run_pairs<T: PartialEq>(values: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in values {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Merge-sort inversion count with strict ordering (ties are not inversions).
fn count_inversions(values: &mut [i64]) -> u64 {
    let n = values.len();
    let mut scratch = values.to_vec();
    let mut inversions = 0u64;
    let mut width = 1;
    while width < n {
        for start in (0..n).step_by(2 * width) {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut out) = (start, mid, start);
            while i < mid && j < end {
                if values[i] > values[j] {
                    inversions += (mid - i) as u64;
                    scratch[out] = values[j];
                    j += 1;
                } else {
                    scratch[out] = values[i];
                    i += 1;
                }
                out += 1;
            }
            while i < mid {
                scratch[out] = values[i];
                i += 1;
                out += 1;
            }
            while j < end {
                scratch[out] = values[j];
                j += 1;
                out += 1;
            }
        }
        values.copy_from_slice(&scratch);
        width *= 2;
    }
    inversions
}

/// Score a sorter's output against ground-truth ordinals: tau_b of
/// (position in output, ordinal). The output must be a permutation of the
/// labeled ids; ties come only from repeated ordinals.
pub fn sort_quality(
    output: &[String],
    ordinals: &HashMap<String, i64>,
) -> Result<f64, MetricsError> {
    let mut seen: HashMap<&str, u64> = HashMap::new();
    for id in output {
        if !ordinals.contains_key(id) {
            return Err(MetricsError::MissingOrdinal(id.clone()));
        }
        *seen.entry(id.as_str()).or_insert(0) += 1;
    }
    let duplicates: u64 = seen.values().map(|&c| c - 1).sum();
    let missing = ordinals
        .keys()
        .filter(|id| !seen.contains_key(id.as_str()))
        .count() as u64;
    if duplicates > 0 || missing > 0 {
        return Err(MetricsError::InvarianceViolation { duplicates, missing });
    }
    let y_values: Vec<i64> = output.iter().map(|id| ordinals[id]).collect();
    let x_values: Vec<i64> = (0..output.len() as i64).collect();
    kendall_tau_b(&RankedPairSample::new(x_values, y_values)?)
}

/// Item-to-cluster mapping; every id belongs to exactly one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterAssignment {
    map: BTreeMap<String, String>,
}

impl ClusterAssignment {
    pub fn from_labels(labels: impl IntoIterator<Item = (String, String)>) -> Self {
        ClusterAssignment {
            map: labels.into_iter().collect(),
        }
    }

    pub fn cluster_of(&self, id: &str) -> Option<&str> {
        self.map.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Clusters as disjoint id sets, keyed by cluster id.
    pub fn clusters(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, cluster) in &self.map {
            out.entry(cluster.as_str()).or_default().push(id.as_str());
        }
        out
    }
}

/// Directed duplicate links over an item set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateLinkGraph {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
}

impl DuplicateLinkGraph {
    /// Edges whose endpoints are missing from the item set are rejected.
    pub fn new(
        nodes: Vec<String>,
        edges: Vec<(String, String)>,
    ) -> Result<Self, MetricsError> {
        let set: std::collections::HashSet<&str> = nodes.iter().map(String::as_str).collect();
        for (from, to) in &edges {
            if !set.contains(from.as_str()) {
                return Err(MetricsError::NotEmbedded(from.clone()));
            }
            if !set.contains(to.as_str()) {
                return Err(MetricsError::NotEmbedded(to.clone()));
            }
        }
        Ok(DuplicateLinkGraph { nodes, edges })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len).collect(),
            rank: vec![0; len],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Treat the directional links as undirected, take connected components, and
/// keep components of size >= 2 as clusters (named by their smallest id).
pub fn clusters_from_duplicate_links(graph: &DuplicateLinkGraph) -> ClusterAssignment {
    let index: HashMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut uf = UnionFind::new(graph.nodes.len());
    for (from, to) in &graph.edges {
        uf.union(index[from.as_str()], index[to.as_str()]);
    }
    let mut components: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (i, id) in graph.nodes.iter().enumerate() {
        components.entry(uf.find(i)).or_default().push(id.as_str());
    }
    let mut labels = Vec::new();
    for members in components.values() {
        if members.len() < 2 {
            continue;
        }
        let name = members.iter().min().expect("non-empty component").to_string();
        for member in members {
            labels.push((member.to_string(), name.clone()));
        }
    }
    ClusterAssignment::from_labels(labels)
}

/// The embedding quality score: for each clustered item s, rank every item
/// (self included, rank 0) by Euclidean distance to s — distance ties broken
/// by id order — and average `1 - rank(s, s') / |S|` over co-members, then
/// over items. 1 means co-members are nearest neighbours; 0.5 is chance-like.
pub fn clustering_score(
    emb: &EmbeddingMatrix,
    ids: &[String],
    clusters: &ClusterAssignment,
) -> Result<f64, MetricsError> {
    let n = ids.len();
    if emb.n() != n {
        return Err(MetricsError::RowMismatch {
            rows: emb.n(),
            ids: n,
        });
    }
    let row_of: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let by_cluster = clusters.clusters();
    for (cluster, members) in &by_cluster {
        if members.len() < 2 {
            return Err(MetricsError::SingletonCluster(cluster.to_string()));
        }
        for member in members {
            if !row_of.contains_key(*member) {
                return Err(MetricsError::NotEmbedded(member.to_string()));
            }
        }
    }

    let mut total = 0.0;
    let mut scored = 0usize;
    for (row, id) in ids.iter().enumerate() {
        let Some(cluster) = clusters.cluster_of(id) else {
            continue;
        };
        let members = &by_cluster[cluster];

        // Rank everything by distance to `row`; self is pinned at rank 0.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let da = if a == row { -1.0 } else { emb.squared_distance(row, a) };
            let db = if b == row { -1.0 } else { emb.squared_distance(row, b) };
            da.partial_cmp(&db)
                .expect("finite distances")
                .then_with(|| ids[a].cmp(&ids[b]))
        });
        let mut rank_of = vec![0usize; n];
        for (rank, &item) in order.iter().enumerate() {
            rank_of[item] = rank;
        }

        let inner: f64 = members
            .iter()
            .filter(|m| **m != id.as_str())
            .map(|m| 1.0 - rank_of[row_of[*m]] as f64 / n as f64)
            .sum();
        total += inner / (members.len() - 1) as f64;
        scored += 1;
    }
    if scored == 0 {
        return Err(MetricsError::NoScorableItems);
    }
    Ok(total / scored as f64)
}

/// Serializable single-metric report: `{metric, value, n, seed, config_digest}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub seed: u64,
    pub config_digest: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(x: &[i64], y: &[i64]) -> RankedPairSample {
        RankedPairSample::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn tau_of_identical_rankings_is_one() {
        assert_eq!(kendall_tau_b(&sample(&[1, 2, 3, 4], &[1, 2, 3, 4])).unwrap(), 1.0);
    }

    #[test]
    fn tau_of_reversed_rankings_is_minus_one() {
        assert_eq!(kendall_tau_b(&sample(&[1, 2, 3, 4], &[4, 3, 2, 1])).unwrap(), -1.0);
    }

    #[test]
    fn tau_of_single_swap() {
        let tau = kendall_tau_b(&sample(&[1, 2, 3, 4], &[1, 3, 2, 4])).unwrap();
        assert!((tau - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn tau_with_ties_matches_hand_computation() {
        // x: 1 1 2 2; y: 1 2 1 2 -> P=2, Q=2? Enumerate: pairs (0,1) tied x,
        // (0,2) tied y, (0,3) concordant, (1,2) discordant, (1,3) tied y,
        // (2,3) tied x. P=1, Q=1, T=2, U=2, B=0 => tau = 0.
        let tau = kendall_tau_b(&sample(&[1, 1, 2, 2], &[1, 2, 1, 2])).unwrap();
        assert_eq!(tau, 0.0);
    }

    #[test]
    fn tau_undefined_when_an_axis_is_constant() {
        assert!(matches!(
            kendall_tau_b(&sample(&[1, 1, 1], &[1, 2, 3])),
            Err(MetricsError::AllTied { axis: "x" })
        ));
        assert!(matches!(
            kendall_tau_b(&sample(&[1, 2, 3], &[7, 7, 7])),
            Err(MetricsError::AllTied { axis: "y" })
        ));
    }

    #[test]
    fn tau_is_symmetric_in_its_arguments() {
        let x = [3, 1, 4, 1, 5, 9, 2, 6];
        let y = [2, 7, 1, 8, 2, 8, 1, 8];
        let a = kendall_tau_b(&sample(&x, &y)).unwrap();
        let b = kendall_tau_b(&sample(&y, &x)).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn sort_quality_of_ground_truth_order_is_one() {
        let ordinals: HashMap<String, i64> =
            (0..10).map(|i| (format!("id{i}"), i)).collect();
        let output: Vec<String> = (0..10).map(|i| format!("id{i}")).collect();
        assert_eq!(sort_quality(&output, &ordinals).unwrap(), 1.0);
    }

    #[test]
    fn sort_quality_rejects_invariance_violations() {
        let ordinals: HashMap<String, i64> =
            (0..3).map(|i| (format!("id{i}"), i)).collect();
        let output = vec!["id0".to_string(), "id0".to_string(), "id1".to_string()];
        assert!(matches!(
            sort_quality(&output, &ordinals),
            Err(MetricsError::InvarianceViolation { duplicates: 1, missing: 1 })
        ));
    }

    #[test]
    fn clustering_score_hand_example() {
        // 4 points on a line, two tight pairs: every co-member at rank 1.
        let emb = EmbeddingMatrix::from_vec(4, 1, vec![0.0, 0.1, 10.0, 10.1]).unwrap();
        let ids: Vec<String> = ["s0", "s1", "s2", "s3"].iter().map(|s| s.to_string()).collect();
        let clusters = ClusterAssignment::from_labels(vec![
            ("s0".into(), "a".into()),
            ("s1".into(), "a".into()),
            ("s2".into(), "b".into()),
            ("s3".into(), "b".into()),
        ]);
        assert_eq!(clustering_score(&emb, &ids, &clusters).unwrap(), 0.75);
    }

    #[test]
    fn clustering_score_worst_case_is_one_over_n() {
        // Unit square with diagonal pairs: every co-member sits at the
        // maximal rank |S| - 1 = 3, so each term is 1 - 3/4 = 1/|S|.
        let emb = EmbeddingMatrix::from_vec(
            4,
            2,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let ids: Vec<String> = ["s0", "s1", "s2", "s3"].iter().map(|s| s.to_string()).collect();
        let clusters = ClusterAssignment::from_labels(vec![
            ("s0".into(), "a".into()),
            ("s3".into(), "a".into()),
            ("s1".into(), "b".into()),
            ("s2".into(), "b".into()),
        ]);
        assert_eq!(clustering_score(&emb, &ids, &clusters).unwrap(), 0.25);
    }

    #[test]
    fn clustering_score_rejects_singletons() {
        let emb = EmbeddingMatrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let clusters = ClusterAssignment::from_labels(vec![
            ("a".into(), "c1".into()),
            ("b".into(), "c2".into()),
        ]);
        assert!(matches!(
            clustering_score(&emb, &ids, &clusters),
            Err(MetricsError::SingletonCluster(_))
        ));
    }

    #[test]
    fn duplicate_links_form_components() {
        let nodes: Vec<String> = ["1", "2", "3", "9"].iter().map(|s| s.to_string()).collect();
        let graph = DuplicateLinkGraph::new(
            nodes,
            vec![("2".into(), "1".into()), ("3".into(), "1".into())],
        )
        .unwrap();
        let clusters = clusters_from_duplicate_links(&graph);
        assert_eq!(clusters.cluster_of("1"), Some("1"));
        assert_eq!(clusters.cluster_of("2"), Some("1"));
        assert_eq!(clusters.cluster_of("3"), Some("1"));
        assert_eq!(clusters.cluster_of("9"), None); // singleton excluded
    }

    #[test]
    fn duplicate_links_chain_into_one_cluster() {
        let nodes: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let graph = DuplicateLinkGraph::new(
            nodes,
            vec![
                ("a".into(), "b".into()),
                ("c".into(), "d".into()),
                ("b".into(), "c".into()),
            ],
        )
        .unwrap();
        let clusters = clusters_from_duplicate_links(&graph);
        for id in ["a", "b", "c", "d"] {
            assert_eq!(clusters.cluster_of(id), Some("a"));
        }
    }

    #[test]
    fn no_edges_means_no_scorable_clusters() {
        let nodes: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let graph = DuplicateLinkGraph::new(nodes, Vec::new()).unwrap();
        assert!(clusters_from_duplicate_links(&graph).is_empty());
    }

    #[test]
    fn component_extraction_is_idempotent() {
        let nodes: Vec<String> = (0..8).map(|i| format!("n{i}")).collect();
        let edges: Vec<(String, String)> = vec![
            ("n1".into(), "n0".into()),
            ("n2".into(), "n0".into()),
            ("n4".into(), "n5".into()),
        ];
        let first = clusters_from_duplicate_links(
            &DuplicateLinkGraph::new(nodes.clone(), edges).unwrap(),
        );
        // Re-run over the induced undirected edges (member -> cluster head).
        let induced: Vec<(String, String)> = first
            .clusters()
            .values()
            .flat_map(|members| {
                let head = members[0].to_string();
                members
                    .iter()
                    .skip(1)
                    .map(move |m| (m.to_string(), head.clone()))
                    .collect::<Vec<_>>()
            })
            .collect();
        let second = clusters_from_duplicate_links(
            &DuplicateLinkGraph::new(nodes, induced).unwrap(),
        );
        assert_eq!(first, second);
    }

    #[test]
    fn graph_rejects_unknown_endpoints() {
        assert!(DuplicateLinkGraph::new(
            vec!["a".to_string()],
            vec![("a".into(), "ghost".into())]
        )
        .is_err());
    }
}
