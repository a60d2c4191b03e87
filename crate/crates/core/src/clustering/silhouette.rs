use super::kmeans::squared_distance;
use super::Clustering;
use crate::error::{Error, Result};

/// Mean silhouette over all points given a pairwise distance function.
/// Singleton clusters contribute 0; a point with `a = b = 0` contributes 0.
pub fn silhouette_with(labels: &[usize], k: usize, distance: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let mut sizes = vec![0usize; k];
    for &c in labels {
        sizes[c] += 1;
    }
    let non_empty = sizes.iter().filter(|&&s| s > 0).count();
    if k < 2 || non_empty < 2 {
        return Err(Error::TooFewClusters(non_empty));
    }
    let n = labels.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += distance(i, j);
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Euclidean silhouette of a clustering.
pub fn silhouette(vectors: &[Vec<f64>], clustering: &Clustering) -> Result<f64> {
    silhouette_with(&clustering.assignment, clustering.k, |i, j| {
        squared_distance(&vectors[i], &vectors[j]).sqrt()
    })
}

/// Condensed pairwise Euclidean distances, shared across silhouette evaluations.
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f32>,
}

impl DistanceMatrix {
    pub fn new(vectors: &[Vec<f64>]) -> Self {
        let n = vectors.len();
        let mut values = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                values.push(squared_distance(&vectors[i], &vectors[j]).sqrt() as f32);
            }
        }
        Self { n, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // offset of row i in the strict upper triangle
        let row = i * self.n - i * (i + 1) / 2;
        self.values[row + (j - i - 1)] as f64
    }
}
