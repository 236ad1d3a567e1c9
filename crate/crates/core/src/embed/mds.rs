//! Classical (Torgerson) multidimensional scaling.
//!
//! Double-center the squared distances into a Gram matrix, extract the top-D
//! eigenpairs by power iteration with Hotelling deflation, clamp negative
//! eigenvalues to zero, and scale the eigenvectors into coordinates. Fully
//! deterministic: the iteration starts from a fixed-seed RNG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DistanceMatrix, EmbedError, EmbeddingMatrix};

const POWER_TOLERANCE: f64 = 1e-9;
const POWER_MAX_ITERS: usize = 10_000;

/// Embed a distance matrix into `d` dimensions.
pub fn classical_mds(dm: &DistanceMatrix, d: usize) -> Result<EmbeddingMatrix, EmbedError> {
    let n = dm.n();
    if d >= n {
        return Err(EmbedError::DimensionTooLarge { d, n });
    }

    // B = -1/2 * J * D^2 * J with J = I - (1/n) 11^T.
    let mut gram = vec![0.0; n * n];
    let mut row_means = vec![0.0; n];
    let mut grand_mean = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = dm.get(i, j) * dm.get(i, j);
            gram[i * n + j] = s;
            row_means[i] += s;
        }
        row_means[i] /= n as f64;
        grand_mean += row_means[i];
    }
    grand_mean /= n as f64;
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = -0.5 * (gram[i * n + j] - row_means[i] - row_means[j] + grand_mean);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x6d64_735f);
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(d);
    for _ in 0..d {
        let (value, vector) = dominant_eigenpair(&gram, n, &mut rng);
        // Deflate: B <- B - lambda v v^T.
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] -= value * vector[i] * vector[j];
            }
        }
        pairs.push((value, vector));
    }
    // Largest eigenvalue first; negative ones carry no coordinates.
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite eigenvalues"));

    let mut coords = EmbeddingMatrix::zeros(n, d);
    for (k, (value, vector)) in pairs.iter().enumerate() {
        let scale = value.max(0.0).sqrt();
        for i in 0..n {
            coords.row_mut(i)[k] = vector[i] * scale;
        }
    }
    Ok(coords)
}

/// Power iteration for the eigenvalue of largest magnitude.
///
/// Convergence compares the iterate against both sign orientations, since a
/// negative dominant eigenvalue alternates the vector each step.
fn dominant_eigenpair(matrix: &[f64], n: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>) {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let mut product = vec![0.0; n];
    for _ in 0..POWER_MAX_ITERS {
        multiply(matrix, n, &v, &mut product);
        let norm = dot(&product, &product).sqrt();
        if norm < 1e-300 {
            // Deflated to (numerical) zero: any unit vector with eigenvalue 0.
            return (0.0, v);
        }
        let next: Vec<f64> = product.iter().map(|x| x / norm).collect();
        let drift = direct_or_flipped_distance(&v, &next);
        v = next;
        if drift < POWER_TOLERANCE {
            break;
        }
    }
    multiply(matrix, n, &v, &mut product);
    let value = dot(&v, &product);
    (value, v)
}

fn multiply(matrix: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = matrix[i * n..(i + 1) * n]
            .iter()
            .zip(v)
            .map(|(m, x)| m * x)
            .sum();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

fn direct_or_flipped_distance(a: &[f64], b: &[f64]) -> f64 {
    let direct: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let flipped: f64 = a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum();
    direct.min(flipped).sqrt()
}
