//! Speaker clustering: cosine-affinity spectral clustering with eigengap
//! cluster-count selection, plus a small binary container for embeddings.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fraction of strongest neighbours kept per row of the affinity matrix.
const AFFINITY_TOP_P: f64 = 0.2;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_ITERATIONS: usize = 100;

/// Named embedding vectors, one row per key.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    keys: Vec<String>,
    vectors: Array2<f32>,
}

impl EmbeddingSet {
    pub fn new(keys: Vec<String>, vectors: Array2<f32>) -> Result<Self> {
        if keys.len() != vectors.nrows() {
            return Err(Error::LengthMismatch { left: keys.len(), right: vectors.nrows() });
        }
        if vectors.ncols() == 0 {
            return Err(Error::InvalidInput("embeddings must have at least one dimension".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for key in &keys {
            if key.contains('\n') || key.is_empty() {
                return Err(Error::InvalidInput(format!("bad embedding key {key:?}")));
            }
            if !seen.insert(key.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate embedding key {key:?}")));
            }
        }
        Ok(Self { keys, vectors })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn vectors(&self) -> &Array2<f32> {
        &self.vectors
    }

    pub fn get(&self, key: &str) -> Option<ArrayView1<'_, f32>> {
        let idx = self.keys.iter().position(|k| k == key)?;
        Some(self.vectors.row(idx))
    }

    /// Write the `EMB1` container: magic, row/dim counts, f32 rows, then the
    /// newline-separated keys.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(12 + self.len() * self.dim() * 4);
        bytes.extend_from_slice(b"EMB1");
        bytes.extend_from_slice(&(self.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for value in self.vectors.iter() {
            bytes.extend_from_slice(&value.to_le_bytes());
        }
        for key in &self.keys {
            bytes.extend_from_slice(key.as_bytes());
            bytes.push(b'\n');
        }
        crate::pipeline::atomic_write(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != b"EMB1" {
            return Err(Error::EmbeddingFormat("missing EMB1 magic".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let data_len = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::EmbeddingFormat("size overflow".into()))?;
        let data_end = 12 + data_len;
        if bytes.len() < data_end {
            return Err(Error::EmbeddingFormat("truncated vector data".into()));
        }
        let values: Vec<f32> = bytes[12..data_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let vectors = Array2::from_shape_vec((rows, dim), values)
            .map_err(|e| Error::EmbeddingFormat(e.to_string()))?;
        let text = std::str::from_utf8(&bytes[data_end..])
            .map_err(|_| Error::EmbeddingFormat("keys are not utf-8".into()))?;
        let keys: Vec<String> = text.lines().map(str::to_owned).collect();
        if keys.len() != rows {
            return Err(Error::EmbeddingFormat(format!(
                "expected {rows} keys, found {}",
                keys.len()
            )));
        }
        Self::new(keys, vectors).map_err(|e| Error::EmbeddingFormat(e.to_string()))
    }
}

/// Cosine affinity with negative similarities clamped to zero and only the
/// strongest fifth of each row kept, then symmetrized.
fn affinity(vectors: &Array2<f64>) -> Result<DMatrix<f64>> {
    let n = vectors.nrows();
    let norms: Vec<f64> = (0..n).map(|i| vectors.row(i).dot(&vectors.row(i)).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&v| v <= 0.0) {
        return Err(Error::InvalidInput(format!("embedding {i} has zero norm")));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let cos = vectors.row(i).dot(&vectors.row(j)) / (norms[i] * norms[j]);
            let sim = cos.max(0.0);
            a[(i, j)] = sim;
            a[(j, i)] = sim;
        }
    }
    // Keep the top fifth of every row, then take the elementwise maximum so
    // the matrix stays symmetric.
    let keep = ((AFFINITY_TOP_P * n as f64).ceil() as usize).max(1).min(n.saturating_sub(1));
    let mut pruned = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&p, &q| a[(i, q)].total_cmp(&a[(i, p)]).then(p.cmp(&q)));
        for &j in order.iter().take(keep) {
            pruned[(i, j)] = a[(i, j)];
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let m = pruned[(i, j)].max(pruned[(j, i)]);
            pruned[(i, j)] = m;
            pruned[(j, i)] = m;
        }
    }
    Ok(pruned)
}

/// Symmetric normalized Laplacian I - D^(-1/2) A D^(-1/2).
fn normalized_laplacian(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let dinv: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = (0..n).map(|j| a[(i, j)]).sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        base - dinv[i] * a[(i, j)] * dinv[j]
    })
}

/// Pick the cluster count by the largest gap between consecutive ascending
/// Laplacian eigenvalues.
fn eigengap_count(eigenvalues: &[f64], max_clusters: usize) -> usize {
    let limit = max_clusters.min(eigenvalues.len().saturating_sub(1));
    let mut best_k = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for k in 1..=limit {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best_gap {
            best_gap = gap;
            best_k = k;
        }
    }
    best_k
}

fn kmeans(points: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.nrows();
    let mut best_labels = vec![0usize; n];
    let mut best_inertia = f64::INFINITY;
    for _ in 0..KMEANS_RESTARTS {
        let mut centers = kmeans_pp_init(points, k, rng);
        let mut labels = vec![0usize; n];
        for _ in 0..KMEANS_ITERATIONS {
            let mut changed = false;
            for i in 0..n {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = sq_dist(points.row(i), center);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                if labels[i] != best {
                    labels[i] = best;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if members.is_empty() {
                    // Reseed an empty cluster at the point farthest from its
                    // current center.
                    let far = (0..n)
                        .max_by(|&a, &b| {
                            sq_dist(points.row(a), &centers_snapshot(points, &labels, a))
                                .total_cmp(&sq_dist(
                                    points.row(b),
                                    &centers_snapshot(points, &labels, b),
                                ))
                        })
                        .unwrap();
                    *center = points.row(far).to_vec();
                    changed = true;
                    continue;
                }
                for (d, value) in center.iter_mut().enumerate() {
                    *value = members.iter().map(|&i| points[(i, d)]).sum::<f64>()
                        / members.len() as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n).map(|i| sq_dist(points.row(i), &centers[labels[i]])).sum();
        if inertia < best_inertia {
            best_inertia = inertia;
            best_labels = labels;
        }
    }
    best_labels
}

fn centers_snapshot(points: &Array2<f64>, labels: &[usize], i: usize) -> Vec<f64> {
    let c = labels[i];
    let members: Vec<usize> = (0..points.nrows()).filter(|&j| labels[j] == c).collect();
    (0..points.ncols())
        .map(|d| members.iter().map(|&j| points[(j, d)]).sum::<f64>() / members.len() as f64)
        .collect()
}

fn sq_dist(p: ArrayView1<'_, f64>, center: &[f64]) -> f64 {
    p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn kmeans_pp_init(points: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.nrows();
    let mut centers = vec![points.row(rng.random_range(0..n)).to_vec()];
    while centers.len() < k {
        let dists: Vec<f64> = (0..n)
            .map(|i| {
                centers
                    .iter()
                    .map(|c| sq_dist(points.row(i), c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            let mut pick = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dists.iter().enumerate() {
                if pick < d {
                    chosen = i;
                    break;
                }
                pick -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points.row(next).to_vec());
    }
    centers
}

/// Renumber labels so clusters appear in first-occurrence order.
fn relabel_first_occurrence(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.len() + 1];
    let mut next = 0usize;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                let id = next;
                next += 1;
                id
            })
        })
        .collect()
}

/// Cluster embedding rows; the number of clusters is chosen automatically up
/// to `max_clusters` via the eigengap heuristic.
pub fn spectral_cluster(
    vectors: &Array2<f64>,
    max_clusters: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = vectors.nrows();
    if n == 0 || max_clusters == 0 {
        return Err(Error::InvalidInput("need at least one embedding and one cluster".into()));
    }
    if max_clusters > n {
        return Err(Error::TooManyClusters { requested: max_clusters, available: n });
    }
    if n == 1 {
        return Ok(vec![0]);
    }

    let a = affinity(vectors)?;
    let laplacian = normalized_laplacian(&a);
    let eig = SymmetricEigen::new(laplacian);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let k = eigengap_count(&sorted, max_clusters);
    if k == 1 {
        return Ok(vec![0; n]);
    }

    // Spectral embedding: first k eigenvectors, rows normalized to the unit
    // sphere where possible.
    let mut points = Array2::zeros((n, k));
    for (col, &idx) in order.iter().take(k).enumerate() {
        for row in 0..n {
            points[(row, col)] = eig.eigenvectors[(row, idx)];
        }
    }
    for mut row in points.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = kmeans(&points, k, &mut rng);
    Ok(relabel_first_occurrence(&labels))
}
