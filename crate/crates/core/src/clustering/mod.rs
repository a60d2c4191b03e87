//! Size-constrained clustering of pair representations, with the number of
//! clusters chosen by the Kneedle elbow of the SSE curve (silhouette fallback).

pub mod kmeans;
pub mod kneedle;
pub mod silhouette;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use kmeans::{assign_constrained, constrained_kmeans};
pub use kneedle::{elbow, kneedle};
pub use silhouette::{silhouette, DistanceMatrix};

/// Kneedle sensitivity used when choosing k.
pub const KNEEDLE_SENSITIVITY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    /// Cluster index of each input row.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    /// Final sum of squared distances to the assigned centroid.
    pub sse: f64,
    /// Objective after each centroid update.
    pub trace: Vec<f64>,
}

impl Clustering {
    /// A single cluster holding every row.
    pub fn single(vectors: &[Vec<f64>]) -> Self {
        let n = vectors.len();
        let d = vectors.first().map_or(0, Vec::len);
        let mut centroid = vec![0.0; d];
        for v in vectors {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let sse = kmeans::objective(vectors, &vec![0; n], std::slice::from_ref(&centroid));
        Self {
            k: 1,
            assignment: vec![0; n],
            centroids: vec![centroid],
            sizes: vec![n],
            sse,
            trace: vec![sse],
        }
    }

    /// Row indices grouped per cluster, ascending within each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            members[c].push(i);
        }
        members
    }
}

/// Explicit minimum and maximum cluster sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeBounds {
    pub min: usize,
    pub max: usize,
}

/// Cluster sizes as fractions of the number of clustered points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterBounds {
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for ClusterBounds {
    fn default() -> Self {
        Self {
            min_fraction: 0.05,
            max_fraction: 0.15,
        }
    }
}

const EPS: f64 = 1e-9;

impl ClusterBounds {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.min_fraction && self.min_fraction < self.max_fraction && self.max_fraction <= 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "cluster fractions must satisfy 0 < min < max <= 1, got [{}, {}]",
                self.min_fraction, self.max_fraction
            )))
        }
    }

    pub fn sizes(&self, n: usize) -> SizeBounds {
        SizeBounds {
            min: (self.min_fraction * n as f64 - EPS).ceil().max(0.0) as usize,
            max: (self.max_fraction * n as f64 + EPS).floor() as usize,
        }
    }

    /// `[⌈1/max_fraction⌉, ⌊1/min_fraction⌋] ∩ [1, n]`.
    pub fn candidate_range(&self, n: usize) -> std::ops::RangeInclusive<usize> {
        let lo = ((1.0 / self.max_fraction - EPS).ceil() as usize).max(1);
        let hi = ((1.0 / self.min_fraction + EPS).floor() as usize).min(n);
        lo..=hi
    }

    /// Candidate k values whose size constraints are satisfiable for `n` points.
    pub fn feasible_ks(&self, n: usize) -> Vec<usize> {
        let sizes = self.sizes(n);
        self.candidate_range(n)
            .filter(|&k| sizes.min <= sizes.max && k * sizes.min <= n && n <= k * sizes.max)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMethod {
    Knee,
    Silhouette,
    OnlyCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    /// Mean over clusters of the within-cluster SSE.
    pub avg_sse: f64,
    pub silhouette: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct KSelection {
    pub k: usize,
    pub method: KMethod,
    pub curve: Vec<CurvePoint>,
    pub clustering: Clustering,
}

impl KSelection {
    pub fn write_curve_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::fs::File::create(path)?;
        writeln!(out, "k,avg_sse,silhouette")?;
        for p in &self.curve {
            let sil = p.silhouette.map(|s| s.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{}", p.k, p.avg_sse, sil)?;
        }
        Ok(())
    }
}

/// Run constrained k-means for every feasible candidate k and pick k by the
/// elbow of the average-SSE curve, falling back to the best silhouette (ties
/// toward smaller k).
pub fn select_k(vectors: &[Vec<f64>], bounds: &ClusterBounds, seed: u64) -> Result<KSelection> {
    bounds.validate()?;
    let n = vectors.len();
    let ks = bounds.feasible_ks(n);
    if ks.is_empty() {
        return Err(Error::EmptyCandidateRange {
            n,
            min_fraction: bounds.min_fraction,
            max_fraction: bounds.max_fraction,
        });
    }
    let sizes = bounds.sizes(n);
    let mut runs = Vec::with_capacity(ks.len());
    for &k in &ks {
        runs.push(constrained_kmeans(vectors, k, sizes, seed)?);
    }
    let mut curve: Vec<CurvePoint> = runs
        .iter()
        .map(|c| CurvePoint {
            k: c.k,
            avg_sse: c.sse / c.k as f64,
            silhouette: None,
        })
        .collect();

    if runs.len() == 1 {
        let clustering = runs.pop().unwrap();
        return Ok(KSelection {
            k: clustering.k,
            method: KMethod::OnlyCandidate,
            curve,
            clustering,
        });
    }

    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = curve.iter().map(|p| p.avg_sse).collect();
    let (index, method) = match elbow(&xs, &ys, KNEEDLE_SENSITIVITY) {
        Some(knee) => (ks.iter().position(|&k| k as f64 == knee).unwrap(), KMethod::Knee),
        None => {
            let distances = DistanceMatrix::new(vectors);
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, run) in runs.iter().enumerate() {
                let score = if run.k >= 2 {
                    silhouette::silhouette_with(&run.assignment, run.k, |a, b| distances.get(a, b))?
                } else {
                    f64::NEG_INFINITY
                };
                curve[i].silhouette = Some(score).filter(|s| s.is_finite());
                if score > best.0 {
                    best = (score, i);
                }
            }
            (best.1, KMethod::Silhouette)
        }
    };
    let clustering = runs.swap_remove(index);
    Ok(KSelection {
        k: clustering.k,
        method,
        curve,
        clustering,
    })
}
