//! Student-t stochastic triplet embedding.
//!
//! Each oriented triplet (i, j, l) contributes a heavy-tailed satisfaction
//! probability
//!
//! ```text
//! p = (1 + |xi-xj|^2/a)^(-(a+1)/2) / ((1 + |xi-xj|^2/a)^(-(a+1)/2) + (1 + |xi-xl|^2/a)^(-(a+1)/2))
//! ```
//!
//! and the fit maximizes the summed log-likelihood by full-batch gradient
//! ascent with backtracking. The violation fraction (triplets with p < 0.5)
//! is reported as the headline diagnostic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{EmbedError, EmbeddingMatrix, Triplet, TripletAnswerSet, TsteConfig};

const LEARNING_RATE_FLOOR: f64 = 1e-8;

/// Draw k triplets per anchor: candidates are an ordered pair of distinct
/// non-anchor indices, uniform. Deterministic given the RNG state.
pub fn sample_triplets(
    n: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Triplet>, EmbedError> {
    if n < 3 {
        return Err(EmbedError::TooFewItems(n));
    }
    if k == 0 {
        return Err(EmbedError::ZeroTriplets);
    }
    let mut out = Vec::with_capacity(n * k);
    for anchor in 0..n {
        for _ in 0..k {
            let near = skip_one(rng.random_range(0..n - 1), anchor);
            let far = skip_two(rng.random_range(0..n - 2), anchor, near);
            out.push(Triplet::new(anchor, near, far, n)?);
        }
    }
    Ok(out)
}

fn skip_one(index: usize, avoid: usize) -> usize {
    if index >= avoid {
        index + 1
    } else {
        index
    }
}

fn skip_two(index: usize, avoid_a: usize, avoid_b: usize) -> usize {
    let (lo, hi) = if avoid_a < avoid_b {
        (avoid_a, avoid_b)
    } else {
        (avoid_b, avoid_a)
    };
    let mut v = index;
    if v >= lo {
        v += 1;
    }
    if v >= hi {
        v += 1;
    }
    v
}

/// log of the kernel ratio B/A; p = 1 / (1 + e^t).
fn log_ratio(near_sq: f64, far_sq: f64, alpha: f64) -> f64 {
    let beta = (alpha + 1.0) / 2.0;
    beta * ((1.0 + near_sq / alpha).ln() - (1.0 + far_sq / alpha).ln())
}

/// 1 / (1 + e^t), computed without overflow on either tail.
fn inverse_logit(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// ln(1 + e^t) without overflow; -softplus(t) = log p.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Probability that the anchor `xi` sits closer to `xj` than to `xl`.
///
/// Requires `alpha > 0`; always in (0, 1), antisymmetric under swapping
/// `xj` and `xl`.
pub fn tste_probability(xi: &[f64], xj: &[f64], xl: &[f64], alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0, "alpha must be positive");
    let near_sq = squared_distance(xi, xj);
    let far_sq = squared_distance(xi, xl);
    inverse_logit(log_ratio(near_sq, far_sq, alpha))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Summed triplet log-likelihood of a canonicalized answer set (maximized).
pub fn tste_objective(
    emb: &EmbeddingMatrix,
    tas: &TripletAnswerSet,
    alpha: f64,
) -> Result<f64, EmbedError> {
    if !tas.is_canonical() {
        return Err(EmbedError::NotCanonical);
    }
    Ok(tas
        .triplets()
        .iter()
        .map(|t| {
            let near_sq = emb.squared_distance(t.anchor, t.near_candidate);
            let far_sq = emb.squared_distance(t.anchor, t.far_candidate);
            -softplus(log_ratio(near_sq, far_sq, alpha))
        })
        .sum())
}

/// Analytic gradient of [`tste_objective`] with respect to the coordinates.
///
/// Anchor, near, and far points all receive contributions from every triplet
/// touching them.
pub fn tste_gradient(
    emb: &EmbeddingMatrix,
    tas: &TripletAnswerSet,
    alpha: f64,
) -> Result<EmbeddingMatrix, EmbedError> {
    if !tas.is_canonical() {
        return Err(EmbedError::NotCanonical);
    }
    let beta = (alpha + 1.0) / 2.0;
    let d = emb.d();
    let mut grad = EmbeddingMatrix::zeros(emb.n(), d);
    for t in tas.triplets() {
        let (i, j, l) = (t.anchor, t.near_candidate, t.far_candidate);
        let near_sq = emb.squared_distance(i, j);
        let far_sq = emb.squared_distance(i, l);
        let miss = inverse_logit(-log_ratio(near_sq, far_sq, alpha)); // 1 - p
        let near_coeff = -2.0 * (beta / alpha) * miss / (1.0 + near_sq / alpha);
        let far_coeff = 2.0 * (beta / alpha) * miss / (1.0 + far_sq / alpha);
        for axis in 0..d {
            let near_delta = emb.row(i)[axis] - emb.row(j)[axis];
            let far_delta = emb.row(i)[axis] - emb.row(l)[axis];
            grad.row_mut(i)[axis] += near_coeff * near_delta + far_coeff * far_delta;
            grad.row_mut(j)[axis] -= near_coeff * near_delta;
            grad.row_mut(l)[axis] -= far_coeff * far_delta;
        }
    }
    Ok(grad)
}

/// Result of a t-STE fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TsteFit {
    pub embedding: EmbeddingMatrix,
    /// Fraction of (canonicalized) triplets with p < 0.5 at the final embedding.
    pub violation_fraction: f64,
    pub iterations: usize,
    pub objective: f64,
}

/// Fit an embedding to the answer set.
///
/// Answers are canonicalized (a false answer swaps the candidates), the
/// coordinates start i.i.d. Gaussian(0, 0.01) from the config seed, and the
/// step size backtracks: halve on an objective decrease (rejecting the step),
/// grow by 1.1 on acceptance, floor 1e-8. The step applies the mean per-triplet
/// gradient so `learning_rate` is independent of the answer-set size. Stops at
/// `max_iters` or when the relative objective change drops below `tolerance`.
pub fn fit_tste(
    tas: &TripletAnswerSet,
    n: usize,
    config: &TsteConfig,
) -> Result<TsteFit, EmbedError> {
    config.validate()?;
    if tas.is_empty() {
        return Err(EmbedError::EmptyAnswerSet);
    }
    for t in tas.triplets() {
        Triplet::new(t.anchor, t.near_candidate, t.far_candidate, n)?;
    }
    let canonical = tas.canonicalized();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 0.1).expect("valid std");
    let data: Vec<f64> = (0..n * config.d).map(|_| normal.sample(&mut rng)).collect();
    let mut emb = EmbeddingMatrix::from_vec(n, config.d, data)?;

    let per_triplet = 1.0 / canonical.len() as f64;
    let mut learning_rate = config.learning_rate;
    let mut objective = tste_objective(&emb, &canonical, config.alpha)?;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let grad = tste_gradient(&emb, &canonical, config.alpha)?;
        let mut candidate = emb.clone();
        for (c, g) in candidate.data.iter_mut().zip(grad.data()) {
            *c += learning_rate * per_triplet * g;
        }
        let candidate_objective = tste_objective(&candidate, &canonical, config.alpha)?;
        if candidate_objective >= objective {
            let relative = (candidate_objective - objective).abs()
                / objective.abs().max(f64::MIN_POSITIVE);
            emb = candidate;
            objective = candidate_objective;
            learning_rate *= 1.1;
            if relative < config.tolerance {
                break;
            }
        } else {
            if learning_rate <= LEARNING_RATE_FLOOR {
                break;
            }
            learning_rate = (learning_rate / 2.0).max(LEARNING_RATE_FLOOR);
        }
    }

    let violations = canonical
        .triplets()
        .iter()
        .filter(|t| {
            emb.squared_distance(t.anchor, t.near_candidate)
                > emb.squared_distance(t.anchor, t.far_candidate)
        })
        .count();
    Ok(TsteFit {
        violation_fraction: violations as f64 / canonical.len() as f64,
        embedding: emb,
        iterations,
        objective,
    })
}
