//! Multi-kernel sample-similarity learning, spectral embedding, and k-means
//! clustering of embeddings.
//!
//! The similarity learner combines a bank of Gaussian kernels at spread-out
//! bandwidths and refines the kernel weights by alternating between a
//! sparsified combined similarity and a kernel-alignment weight update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, Error, Result};
use crate::linalg::symmetric_eigen;
use crate::tensor::Tensor;

/// Gaussian kernel bank: bandwidth multipliers plus simplex weights.
#[derive(Debug, Clone)]
pub struct KernelBank {
    multipliers: Vec<f64>,
    weights: Vec<f64>,
}

impl KernelBank {
    /// Ten kernels at multipliers 0.5, 0.75, ..., 2.75, uniform weights.
    pub fn default_bank() -> Self {
        let multipliers: Vec<f64> = (0..10).map(|i| 0.5 + 0.25 * i as f64).collect();
        KernelBank::new(multipliers).expect("default bank is valid")
    }

    pub fn new(multipliers: Vec<f64>) -> Result<Self> {
        if multipliers.is_empty() {
            return Err(validation("kernel bank needs at least one multiplier"));
        }
        if multipliers.iter().any(|&m| m <= 0.0) {
            return Err(validation("bandwidth multipliers must be positive"));
        }
        if multipliers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(validation("bandwidth multipliers must be strictly increasing"));
        }
        let k = multipliers.len();
        Ok(KernelBank {
            multipliers,
            weights: vec![1.0 / k as f64; k],
        })
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Learned sample-similarity matrix: exactly symmetric, entries in [0, 1],
/// unit diagonal.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    matrix: Tensor,
}

impl SimilarityMatrix {
    pub fn new(matrix: Tensor) -> Result<Self> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(validation("similarity matrix must be square"));
        }
        for i in 0..n {
            if matrix.get(i, i) != 1.0 {
                return Err(validation(format!("similarity diagonal not 1 at {i}")));
            }
            for j in 0..n {
                let v = matrix.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(validation(format!("similarity entry out of [0,1] at ({i},{j})")));
                }
                if v != matrix.get(j, i) {
                    return Err(validation(format!("similarity not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(SimilarityMatrix { matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }
}

const NEIGHBOR_COUNT: usize = 20;

/// Learns the combined-kernel similarity of a feature matrix.
///
/// `iterations` refinement rounds alternate: combine kernels, sparsify each
/// row to its nearest neighbors with symmetric renormalization, then update
/// kernel weights by alignment with the sparsified similarity, re-projected
/// onto the simplex.
pub fn learn_similarity(
    features: &Tensor,
    bank: &KernelBank,
    iterations: usize,
) -> Result<SimilarityMatrix> {
    learn_similarity_with_weights(features, bank, iterations).map(|(sim, _)| sim)
}

/// [`learn_similarity`] also returning the refined kernel weights.
pub fn learn_similarity_with_weights(
    features: &Tensor,
    bank: &KernelBank,
    iterations: usize,
) -> Result<(SimilarityMatrix, Vec<f64>)> {
    let n = features.rows();
    if n < 2 {
        return Err(validation("similarity learning needs at least 2 subjects"));
    }

    // Pairwise distances, computed once for i<j and mirrored.
    let mut dist2 = Tensor::zeros(n, n);
    let mut mean_dist = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist2.set(i, j, d2);
            dist2.set(j, i, d2);
            mean_dist += d2.sqrt();
        }
    }
    mean_dist /= (n * (n - 1) / 2) as f64;
    if mean_dist == 0.0 {
        return Err(Error::Degenerate(
            "all subjects identical: mean pairwise distance is zero".into(),
        ));
    }

    let kernels: Vec<Tensor> = bank
        .multipliers
        .iter()
        .map(|&mu| {
            let denom = 2.0 * (mu * mean_dist) * (mu * mean_dist);
            dist2.map(|d2| (-d2 / denom).exp())
        })
        .collect();

    let mut weights = bank.weights.clone();
    for _ in 0..iterations {
        let combined = combine(&kernels, &weights, n);
        let sparsified = sparsify_symmetric(&combined, n);
        // Squared centered alignment of each kernel with the sparsified
        // similarity. Centering matters: a too-wide kernel is near-constant
        // and would win a raw inner product on every entry without matching
        // the neighbor structure at all; squaring concentrates the weights
        // on the kernels that actually fit it.
        let target_mean = sparsified.data().iter().sum::<f64>() / (n * n) as f64;
        let mut raw: Vec<f64> = kernels
            .iter()
            .map(|k| {
                let k_mean = k.data().iter().sum::<f64>() / (n * n) as f64;
                let align = k
                    .data()
                    .iter()
                    .zip(sparsified.data())
                    .map(|(a, b)| (a - k_mean) * (b - target_mean))
                    .sum::<f64>()
                    .max(0.0);
                align * align
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            for w in &mut raw {
                *w /= total;
            }
            weights = raw;
        } else {
            weights = vec![1.0 / kernels.len() as f64; kernels.len()];
        }
    }

    let mut out = combine(&kernels, &weights, n);
    // Explicit symmetrization, unit diagonal, clamp into [0, 1].
    for i in 0..n {
        out.set(i, i, 1.0);
        for j in (i + 1)..n {
            let v = (0.5 * (out.get(i, j) + out.get(j, i))).clamp(0.0, 1.0);
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok((SimilarityMatrix::new(out)?, weights))
}

fn combine(kernels: &[Tensor], weights: &[f64], n: usize) -> Tensor {
    let mut out = Tensor::zeros(n, n);
    for (k, &w) in kernels.iter().zip(weights) {
        for (o, &v) in out.data_mut().iter_mut().zip(k.data()) {
            *o += w * v;
        }
    }
    out
}

/// Keeps each row's nearest neighbors (plus the diagonal), row-normalizes,
/// then symmetrizes.
fn sparsify_symmetric(s: &Tensor, n: usize) -> Tensor {
    let keep = NEIGHBOR_COUNT.min(n - 1);
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            s.get(i, b)
                .partial_cmp(&s.get(i, a))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut row_sum = s.get(i, i);
        for &j in order.iter().take(keep) {
            row_sum += s.get(i, j);
        }
        if row_sum <= 0.0 {
            out.set(i, i, 1.0);
            continue;
        }
        out.set(i, i, s.get(i, i) / row_sum);
        for &j in order.iter().take(keep) {
            out.set(i, j, s.get(i, j) / row_sum);
        }
    }
    let mut sym = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sym.set(i, j, 0.5 * (out.get(i, j) + out.get(j, i)));
        }
    }
    sym
}

/// Spectral embedding of a similarity matrix.
///
/// Rows are the eigenvectors of the symmetric-normalized Laplacian
/// `L = I - D^{-1/2} S D^{-1/2}` for the `dim` smallest eigenvalues,
/// sign-fixed (first nonzero component positive) and row-normalized to unit
/// length.
pub fn embed(sim: &SimilarityMatrix, dim: usize) -> Result<Tensor> {
    let n = sim.n();
    if dim == 0 || dim >= n {
        return Err(validation(format!(
            "embedding dimension must satisfy 0 < dim < n, got dim={dim}, n={n}"
        )));
    }
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| sim.get(i, j)).sum();
        inv_sqrt_deg[i] = 1.0 / deg.sqrt(); // deg >= 1 (unit diagonal)
    }
    let mut laplacian = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = -inv_sqrt_deg[i] * sim.get(i, j) * inv_sqrt_deg[j];
            laplacian.set(i, j, if i == j { 1.0 + v } else { v });
        }
    }
    // Exact symmetry for the eigensolver.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (laplacian.get(i, j) + laplacian.get(j, i));
            laplacian.set(i, j, v);
            laplacian.set(j, i, v);
        }
    }

    let eig = symmetric_eigen(&laplacian)?;
    let mut out = Tensor::zeros(n, dim);
    for col in 0..dim {
        let mut column: Vec<f64> = (0..n).map(|row| eig.vectors.get(row, col)).collect();
        if let Some(first) = column.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                for v in &mut column {
                    *v = -*v;
                }
            }
        }
        for row in 0..n {
            out.set(row, col, column[row]);
        }
    }
    for row in 0..n {
        let norm: f64 = out.row(row).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for col in 0..dim {
                out.set(row, col, out.get(row, col) / norm);
            }
        }
    }
    Ok(out)
}

/// k-means result over an embedding.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub c: usize,
    pub centroids: Tensor,
    /// Inertia after each Lloyd iteration (non-increasing).
    pub inertia_history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Seeded k-means++ with Lloyd iterations and empty-cluster repair.
pub fn kmeans_cluster(embedding: &Tensor, c: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = embedding.rows();
    let dim = embedding.cols();
    if c == 0 || c > n {
        return Err(validation(format!(
            "cluster count must satisfy 1 <= c <= n, got c={c}, n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(c);
    centroids.push(embedding.row(rng.gen_range(0..n)).to_vec());
    while centroids.len() < c {
        let d2: Vec<f64> = (0..n)
            .map(|i| {
                centroids
                    .iter()
                    .map(|c| dist2(embedding.row(i), c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(embedding.row(pick).to_vec());
    }

    let mut labels = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;
    let mut inertia_history = Vec::new();
    for _ in 0..300 {
        // Assignment (ties to the lowest cluster index).
        for i in 0..n {
            let mut best = 0;
            let mut best_d = dist2(embedding.row(i), &centroids[0]);
            for (k, centroid) in centroids.iter().enumerate().skip(1) {
                let d = dist2(embedding.row(i), centroid);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            labels[i] = best;
        }

        // Repair empty clusters by splitting the largest at its farthest point.
        loop {
            let mut counts = vec![0usize; c];
            for &l in &labels {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&cnt| cnt == 0) else {
                break;
            };
            let largest = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(k, _)| k)
                .unwrap();
            let (farthest, _) = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == largest)
                .map(|(i, _)| (i, dist2(embedding.row(i), &centroids[largest])))
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, d)| {
                    if d > acc.1 {
                        (i, d)
                    } else {
                        acc
                    }
                });
            labels[farthest] = empty;
            centroids[empty] = embedding.row(farthest).to_vec();
        }

        // Centroid update.
        let mut sums = vec![vec![0.0; dim]; c];
        let mut counts = vec![0usize; c];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, &v) in sums[l].iter_mut().zip(embedding.row(i)) {
                *s += v;
            }
        }
        for k in 0..c {
            for s in &mut sums[k] {
                *s /= counts[k] as f64;
            }
        }
        centroids = sums;

        let inertia: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| dist2(embedding.row(i), &centroids[l]))
            .sum();
        inertia_history.push(inertia);
        if prev_inertia.is_finite() {
            let change = (prev_inertia - inertia).abs() / prev_inertia.max(1e-300);
            if change < 1e-6 {
                break;
            }
        }
        prev_inertia = inertia;
    }

    let mut centroid_tensor = Tensor::zeros(c, dim);
    for (k, centroid) in centroids.iter().enumerate() {
        for (j, &v) in centroid.iter().enumerate() {
            centroid_tensor.set(k, j, v);
        }
    }
    Ok(ClusterAssignment {
        labels,
        c,
        centroids: centroid_tensor,
        inertia_history,
    })
}

/// Full clustering of source embeddings: learned similarity, spectral
/// embedding at dimension `c`, then k-means.
pub fn cluster_source_embeddings(z: &Tensor, c: usize, seed: u64) -> Result<ClusterAssignment> {
    if !z.is_finite() {
        return Err(validation("embeddings contain non-finite values"));
    }
    let n = z.rows();
    if c == 0 || c > n {
        return Err(validation(format!(
            "cluster count must satisfy 1 <= c <= n, got c={c}, n={n}"
        )));
    }
    let sim = learn_similarity(z, &KernelBank::default_bank(), 5)?;
    let dim = c.min(n - 1).max(1);
    let embedding = embed(&sim, dim)?;
    kmeans_cluster(&embedding, c, seed)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |v: u64| -> f64 { (v * v.saturating_sub(1)) as f64 / 2.0 };
    let sum_ij: f64 = table.iter().flatten().map(|&v| choose2(v)).sum();
    let sum_a: f64 = table
        .iter()
        .map(|row| choose2(row.iter().sum::<u64>()))
        .sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum::<u64>()))
        .sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-300 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}
