//! Low-dimensional embeddings of string sets: t-STE fitted to oracle triplet
//! answers, and the Jaccard-distance + classical-MDS baseline.

mod jaccard;
mod mds;
mod tste;

pub use jaccard::{jaccard_distance, tokenize};
pub use mds::classical_mds;
pub use tste::{
    fit_tste, sample_triplets, tste_gradient, tste_objective, tste_probability, TsteFit,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("triplet indices must be pairwise distinct and below {n}, got ({i}, {j}, {l})")]
    BadTriplet { i: usize, j: usize, l: usize, n: usize },
    #[error("triplet and answer counts differ: {triplets} vs {answers}")]
    LengthMismatch { triplets: usize, answers: usize },
    #[error("triplet sampling needs at least 3 items, got {0}")]
    TooFewItems(usize),
    #[error("per-item triplet count must be at least 1")]
    ZeroTriplets,
    #[error("answer set is empty")]
    EmptyAnswerSet,
    #[error("answer set must be canonicalized (all answers true) first")]
    NotCanonical,
    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error("embedding dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("MDS needs embedding dimension {d} < point count {n}")]
    DimensionTooLarge { d: usize, n: usize },
    #[error("matrix data length {len} does not match {rows} x {cols}")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("distance matrix must be symmetric with a zero diagonal and non-negative entries")]
    InvalidDistanceMatrix,
}

/// Row-major |S| x D coordinate matrix; row order follows item order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        EmbeddingMatrix {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self, EmbedError> {
        if data.len() != n * d {
            return Err(EmbedError::BadShape {
                rows: n,
                cols: d,
                len: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingMatrix { n, d, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.squared_distance(i, j).sqrt()
    }

    /// Serializable form: `{ids, d, coordinates}` with row-major coordinates.
    pub fn to_file(&self, ids: &[String]) -> EmbeddingFile {
        EmbeddingFile {
            ids: ids.to_vec(),
            d: self.d,
            coordinates: self.data.clone(),
        }
    }
}

/// JSON schema for persisted embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub ids: Vec<String>,
    pub d: usize,
    pub coordinates: Vec<f64>,
}

impl EmbeddingFile {
    pub fn matrix(&self) -> Result<EmbeddingMatrix, EmbedError> {
        EmbeddingMatrix::from_vec(self.ids.len(), self.d, self.coordinates.clone())
    }
}

/// Symmetric non-negative |S| x |S| matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a pairwise function evaluated once per unordered pair.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, EmbedError> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(EmbedError::InvalidDistanceMatrix);
                }
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, EmbedError> {
        if data.len() != n * n {
            return Err(EmbedError::BadShape {
                rows: n,
                cols: n,
                len: data.len(),
            });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(EmbedError::InvalidDistanceMatrix);
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !v.is_finite() || v < 0.0 || v != data[j * n + i] {
                    return Err(EmbedError::InvalidDistanceMatrix);
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    /// Euclidean distances of a point set given as rows.
    pub fn euclidean(points: &EmbeddingMatrix) -> Self {
        let n = points.n();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = points.distance(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Triplet over item indices: the anchor should land closer to
/// `near_candidate` than to `far_candidate` once the answer is true.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub near_candidate: usize,
    pub far_candidate: usize,
}

impl Triplet {
    pub fn new(anchor: usize, near: usize, far: usize, n: usize) -> Result<Self, EmbedError> {
        if anchor == near || anchor == far || near == far || anchor >= n || near >= n || far >= n {
            return Err(EmbedError::BadTriplet {
                i: anchor,
                j: near,
                l: far,
                n,
            });
        }
        Ok(Triplet {
            anchor,
            near_candidate: near,
            far_candidate: far,
        })
    }
}

/// Sampled triplets paired with oracle answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletAnswerSet {
    triplets: Vec<Triplet>,
    answers: Vec<bool>,
    /// Per-item sample count k used when drawing the triplets.
    per_item: usize,
}

impl TripletAnswerSet {
    pub fn new(
        triplets: Vec<Triplet>,
        answers: Vec<bool>,
        per_item: usize,
    ) -> Result<Self, EmbedError> {
        if triplets.len() != answers.len() {
            return Err(EmbedError::LengthMismatch {
                triplets: triplets.len(),
                answers: answers.len(),
            });
        }
        Ok(TripletAnswerSet {
            triplets,
            answers,
            per_item,
        })
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn answers(&self) -> &[bool] {
        &self.answers
    }

    pub fn per_item(&self) -> usize {
        self.per_item
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn is_canonical(&self) -> bool {
        self.answers.iter().all(|&a| a)
    }

    /// Orient every triplet so its answer is true: a false answer swaps the
    /// near and far candidates.
    pub fn canonicalized(&self) -> TripletAnswerSet {
        let triplets = self
            .triplets
            .iter()
            .zip(&self.answers)
            .map(|(t, &answer)| {
                if answer {
                    *t
                } else {
                    Triplet {
                        anchor: t.anchor,
                        near_candidate: t.far_candidate,
                        far_candidate: t.near_candidate,
                    }
                }
            })
            .collect();
        TripletAnswerSet {
            triplets,
            answers: vec![true; self.answers.len()],
            per_item: self.per_item,
        }
    }
}

/// One JSONL record of a resolved triplet query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletAnswerRecord {
    pub anchor_id: String,
    pub y_id: String,
    pub z_id: String,
    pub answer: bool,
}

/// t-STE hyperparameters. `alpha` defaults to D - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsteConfig {
    pub d: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl TsteConfig {
    pub fn new(d: usize) -> Result<Self, EmbedError> {
        if d < 2 {
            return Err(EmbedError::BadDimension(d));
        }
        Ok(TsteConfig {
            d,
            alpha: (d - 1) as f64,
            learning_rate: 1.0,
            max_iters: 2000,
            tolerance: 1e-7,
            seed: 0,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.d < 2 {
            return Err(EmbedError::BadDimension(self.d));
        }
        if self.alpha <= 0.0 {
            return Err(EmbedError::BadAlpha(self.alpha));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_rejects_collisions_and_range() {
        assert!(Triplet::new(0, 0, 1, 3).is_err());
        assert!(Triplet::new(0, 1, 1, 3).is_err());
        assert!(Triplet::new(0, 1, 3, 3).is_err());
        assert!(Triplet::new(0, 1, 2, 3).is_ok());
    }

    #[test]
    fn canonicalization_swaps_false_answers() {
        let t = vec![
            Triplet::new(0, 1, 2, 3).unwrap(),
            Triplet::new(1, 0, 2, 3).unwrap(),
        ];
        let set = TripletAnswerSet::new(t, vec![true, false], 1).unwrap();
        assert!(!set.is_canonical());
        let canon = set.canonicalized();
        assert!(canon.is_canonical());
        assert_eq!(canon.triplets()[0], set.triplets()[0]);
        assert_eq!(canon.triplets()[1].near_candidate, 2);
        assert_eq!(canon.triplets()[1].far_candidate, 0);
    }

    #[test]
    fn distance_matrix_validates() {
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.5, 1.0, 1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn embedding_round_trips_through_file_form() {
        let m = EmbeddingMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let file = m.to_file(&ids);
        assert_eq!(file.matrix().unwrap(), m);
        let json = serde_json::to_string(&file).unwrap();
        let back: EmbeddingFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn embedding_rejects_non_finite() {
        assert!(matches!(
            EmbeddingMatrix::from_vec(1, 2, vec![f64::NAN, 0.0]),
            Err(EmbedError::NonFinite)
        ));
    }
}
