//! Deterministic simulated oracle: answers from a ground truth (a total order
//! for comparisons, coordinates for triplets) and flips each answer with
//! probability `p`. The flip decision is a pure function of
//! (seed, canonical query key, sample index), so replays are exact and
//! independent of call order or interleaving.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::client::{BinaryJob, BinaryResolution, CompletionRequest, OracleBackend, ScoringHint};
use super::{OracleError, QueryKind};
use crate::digest;

fn default_batch_seconds() -> f64 {
    1.0
}

/// Ground truth backing the simulated oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    /// Total order over item ids: higher ordinal beats lower.
    Order(BTreeMap<String, i64>),
    /// Coordinates per item id; triplets compare Euclidean distances.
    Coordinates(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedOracleConfig {
    pub ground_truth: GroundTruth,
    /// Probability of flipping the truthful answer, in [0, 0.5).
    pub flip_probability: f64,
    pub seed: u64,
    /// Deterministic seconds charged per resolved batch, standing in for the
    /// wall clock so simulated reports replay byte-identically.
    #[serde(default = "default_batch_seconds")]
    pub batch_seconds: f64,
}

pub struct SimulatedBackend {
    config: SimulatedOracleConfig,
}

impl SimulatedBackend {
    pub fn new(config: SimulatedOracleConfig) -> Result<Self, OracleError> {
        if !(0.0..0.5).contains(&config.flip_probability) {
            return Err(OracleError::InvalidFlipProbability(config.flip_probability));
        }
        Ok(SimulatedBackend { config })
    }

    fn ordinal(&self, id: &str) -> Result<i64, OracleError> {
        match &self.config.ground_truth {
            GroundTruth::Order(map) => map
                .get(id)
                .copied()
                .ok_or_else(|| OracleError::UnknownItem(id.to_string())),
            GroundTruth::Coordinates(_) => Err(OracleError::GroundTruthKind {
                have: "coordinates",
                need: "a total order",
            }),
        }
    }

    fn coordinates(&self, id: &str) -> Result<&[f64], OracleError> {
        match &self.config.ground_truth {
            GroundTruth::Coordinates(map) => map
                .get(id)
                .map(Vec::as_slice)
                .ok_or_else(|| OracleError::UnknownItem(id.to_string())),
            GroundTruth::Order(_) => Err(OracleError::GroundTruthKind {
                have: "a total order",
                need: "coordinates",
            }),
        }
    }

    /// Truthful (pre-noise) answer for a query key.
    fn truth(&self, job: &BinaryJob) -> Result<bool, OracleError> {
        let ids = &job.key.ids;
        match job.key.kind {
            QueryKind::Comparison => Ok(self.ordinal(&ids[0])? > self.ordinal(&ids[1])?),
            QueryKind::Triplet => {
                let anchor = self.coordinates(&ids[0])?;
                let y = self.coordinates(&ids[1])?;
                let z = self.coordinates(&ids[2])?;
                if anchor.len() != y.len() {
                    return Err(OracleError::DimensionMismatch(ids[0].clone(), ids[1].clone()));
                }
                if anchor.len() != z.len() {
                    return Err(OracleError::DimensionMismatch(ids[0].clone(), ids[2].clone()));
                }
                let dy = squared_distance(anchor, y);
                let dz = squared_distance(anchor, z);
                if dy < dz {
                    Ok(true)
                } else if dy > dz {
                    Ok(false)
                } else {
                    // Exact distance tie: the lexicographically smaller candidate id wins.
                    Ok(ids[1] < ids[2])
                }
            }
        }
    }

    /// Whether the noise stream flips this key's answer.
    fn flips(&self, job: &BinaryJob) -> bool {
        let mut parts = job.key.canonical_parts();
        let seed = self.config.seed.to_le_bytes();
        let sample = job.key.sample.to_le_bytes();
        parts.insert(0, &seed);
        parts.push(&sample);
        digest::unit_interval(&parts) < self.config.flip_probability
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl OracleBackend for SimulatedBackend {
    fn resolve_binary(&self, jobs: &[BinaryJob]) -> Result<Vec<BinaryResolution>, OracleError> {
        jobs.iter()
            .map(|job| {
                let answer = self.truth(job)? ^ self.flips(job);
                let raw = match job.key.kind {
                    QueryKind::Comparison => if answer { "yes" } else { "no" },
                    QueryKind::Triplet => if answer { "X" } else { "Y" },
                };
                Ok(BinaryResolution {
                    answer,
                    raw: raw.to_string(),
                    parse_failed: false,
                })
            })
            .collect()
    }

    fn complete(&self, requests: &[CompletionRequest]) -> Result<Vec<String>, OracleError> {
        requests
            .iter()
            .map(|req| match &req.hint {
                ScoringHint::Item(id) => Ok(format!("{:.1}", self.ordinal(id)? as f64)),
                ScoringHint::List(ids) => {
                    let scores = ids
                        .iter()
                        .map(|id| Ok(format!("{:.1}", self.ordinal(id)? as f64)))
                        .collect::<Result<Vec<_>, OracleError>>()?;
                    Ok(scores.join(" "))
                }
                ScoringHint::None => Err(OracleError::MissingScoringHint),
            })
            .collect()
    }

    fn batch_seconds(&self) -> Option<f64> {
        Some(self.config.batch_seconds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{ComparisonQuery, Criteria, Item, QueryKey, TripletQuery};

    fn order_config(p: f64, pairs: &[(&str, i64)]) -> SimulatedOracleConfig {
        SimulatedOracleConfig {
            ground_truth: GroundTruth::Order(
                pairs.iter().map(|(id, o)| (id.to_string(), *o)).collect(),
            ),
            flip_probability: p,
            seed: 7,
            batch_seconds: 1.0,
        }
    }

    fn coord_config(p: f64, pairs: &[(&str, &[f64])]) -> SimulatedOracleConfig {
        SimulatedOracleConfig {
            ground_truth: GroundTruth::Coordinates(
                pairs.iter().map(|(id, c)| (id.to_string(), c.to_vec())).collect(),
            ),
            flip_probability: p,
            seed: 7,
            batch_seconds: 1.0,
        }
    }

    fn cmp_job(criteria: &str, x: &str, y: &str, sample: u32) -> BinaryJob {
        let q = ComparisonQuery::new(
            Criteria::new(criteria).unwrap(),
            Item::new(x, x).unwrap(),
            Item::new(y, y).unwrap(),
        )
        .unwrap();
        BinaryJob {
            key: QueryKey::comparison(&q, sample),
            prompt: String::new(),
        }
    }

    fn tri_job(anchor: &str, y: &str, z: &str, sample: u32) -> BinaryJob {
        let q = TripletQuery::new(
            Criteria::new("closer?").unwrap(),
            Item::new(anchor, anchor).unwrap(),
            Item::new(y, y).unwrap(),
            Item::new(z, z).unwrap(),
        )
        .unwrap();
        BinaryJob {
            key: QueryKey::triplet(&q, sample),
            prompt: String::new(),
        }
    }

    #[test]
    fn rejects_bad_flip_probability() {
        for p in [-0.1, 0.5, 0.7, 1.0] {
            assert!(SimulatedBackend::new(order_config(p, &[])).is_err());
        }
    }

    #[test]
    fn noiseless_comparison_follows_order() {
        let b = SimulatedBackend::new(order_config(0.0, &[("oak", 2), ("moss", 1)])).unwrap();
        let res = b
            .resolve_binary(&[cmp_job("taller?", "oak", "moss", 0), cmp_job("taller?", "moss", "oak", 0)])
            .unwrap();
        assert!(res[0].answer);
        assert!(!res[1].answer);
        assert_eq!(res[0].raw, "yes");
        assert_eq!(res[1].raw, "no");
    }

    #[test]
    fn unknown_id_is_an_error() {
        let b = SimulatedBackend::new(order_config(0.0, &[("oak", 2)])).unwrap();
        assert!(matches!(
            b.resolve_binary(&[cmp_job("taller?", "oak", "elm", 0)]),
            Err(OracleError::UnknownItem(id)) if id == "elm"
        ));
    }

    #[test]
    fn noiseless_triplet_compares_distances() {
        let b = SimulatedBackend::new(coord_config(
            0.0,
            &[("x", &[0.0]), ("y", &[1.0]), ("z", &[5.0])],
        ))
        .unwrap();
        let res = b.resolve_binary(&[tri_job("x", "y", "z", 0)]).unwrap();
        assert!(res[0].answer);
        assert_eq!(res[0].raw, "X");
    }

    #[test]
    fn triplet_tie_breaks_by_candidate_id() {
        let b = SimulatedBackend::new(coord_config(
            0.0,
            &[("m", &[0.0]), ("a", &[1.0]), ("b", &[-1.0])],
        ))
        .unwrap();
        // Equidistant candidates: "a" < "b" lexicographically, so anchor-closer-to-a wins.
        assert!(b.resolve_binary(&[tri_job("m", "a", "b", 0)]).unwrap()[0].answer);
        assert!(!b.resolve_binary(&[tri_job("m", "b", "a", 0)]).unwrap()[0].answer);
    }

    #[test]
    fn ground_truth_kind_mismatch_is_an_error() {
        let b = SimulatedBackend::new(order_config(0.0, &[("x", 0), ("y", 1), ("z", 2)])).unwrap();
        assert!(matches!(
            b.resolve_binary(&[tri_job("x", "y", "z", 0)]),
            Err(OracleError::GroundTruthKind { .. })
        ));
    }

    #[test]
    fn flip_rate_calibrates_to_p() {
        // Monte-Carlo over the noise model: resample one query 10^5 times.
        for p in [0.1, 0.2] {
            let b = SimulatedBackend::new(order_config(p, &[("oak", 2), ("moss", 1)])).unwrap();
            let n = 100_000u32;
            let jobs: Vec<BinaryJob> =
                (0..n).map(|s| cmp_job("taller?", "oak", "moss", s)).collect();
            let res = b.resolve_binary(&jobs).unwrap();
            let flips = res.iter().filter(|r| !r.answer).count();
            let rate = flips as f64 / n as f64;
            assert!((rate - p).abs() < 0.005, "p={p} rate={rate}");
        }
    }

    #[test]
    fn noise_is_a_pure_function_of_key() {
        let b = SimulatedBackend::new(order_config(0.3, &[("oak", 2), ("moss", 1)])).unwrap();
        let forward: Vec<bool> = (0..64)
            .map(|s| b.resolve_binary(&[cmp_job("q", "oak", "moss", s)]).unwrap()[0].answer)
            .collect();
        let mut reverse: Vec<bool> = (0..64)
            .rev()
            .map(|s| b.resolve_binary(&[cmp_job("q", "oak", "moss", s)]).unwrap()[0].answer)
            .collect();
        reverse.reverse();
        assert_eq!(forward, reverse);
    }

    #[test]
    fn scoring_returns_ordinals() {
        let b = SimulatedBackend::new(order_config(0.2, &[("a", 3), ("b", 5)])).unwrap();
        let out = b
            .complete(&[
                CompletionRequest {
                    prompt: "score a".into(),
                    hint: ScoringHint::Item("a".into()),
                },
                CompletionRequest {
                    prompt: "score all".into(),
                    hint: ScoringHint::List(vec!["a".into(), "b".into()]),
                },
            ])
            .unwrap();
        assert_eq!(out[0], "3.0");
        assert_eq!(out[1], "3.0 5.0");
    }

    #[test]
    fn scoring_without_hint_is_an_error() {
        let b = SimulatedBackend::new(order_config(0.0, &[("a", 1)])).unwrap();
        assert!(matches!(
            b.complete(&[CompletionRequest {
                prompt: "whatever".into(),
                hint: ScoringHint::None,
            }]),
            Err(OracleError::MissingScoringHint)
        ));
    }
}
