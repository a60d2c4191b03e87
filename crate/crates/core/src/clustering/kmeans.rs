//! K-means with minimum and maximum cluster sizes.
//!
//! The assignment step is the transportation problem "each point to exactly
//! one cluster, cluster c receives between `min` and `max` points, minimise the
//! total squared distance". It is solved exactly by successive shortest paths:
//! points are inserted one at a time, each along a cheapest augmenting path
//! that may shift already-placed points between clusters. Filling a cluster
//! slot below `min` is preferred lexicographically over any distance, which
//! makes every lower bound binding at the optimum.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Clustering, SizeBounds};
use crate::error::{Error, Result};

pub const MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_bounds(n: usize, k: usize, bounds: SizeBounds) -> Result<()> {
    let feasible = k >= 1
        && n >= k
        && bounds.min <= bounds.max
        && k * bounds.min <= n
        && n <= k.saturating_mul(bounds.max);
    if feasible {
        Ok(())
    } else {
        Err(Error::InfeasibleBounds {
            k,
            n,
            min_size: bounds.min,
            max_size: bounds.max,
        })
    }
}

/// A relaxation must beat the current distance by a relative margin.
fn relax_bar(dist: f64) -> f64 {
    dist - 1e-12 * (1.0 + dist.abs())
}

/// Optimal size-constrained assignment for a row-major `n × k` cost matrix.
pub fn assign_constrained(costs: &[f64], n: usize, k: usize, bounds: SizeBounds) -> Result<Vec<usize>> {
    check_bounds(n, k, bounds)?;
    debug_assert_eq!(costs.len(), n * k);
    const NONE: usize = usize::MAX;
    let cost = |p: usize, c: usize| costs[p * k + c];

    let mut assignment = vec![NONE; n];
    let mut count = vec![0usize; k];
    // moves[a * k + b]: points currently in a keyed by the cost change of moving them to b
    let mut moves: Vec<BinaryHeap<Reverse<(Key, usize)>>> = (0..k * k).map(|_| BinaryHeap::new()).collect();
    let push_member = |moves: &mut Vec<BinaryHeap<Reverse<(Key, usize)>>>, q: usize, a: usize| {
        for b in 0..k {
            if b != a {
                moves[a * k + b].push(Reverse((Key(cost(q, b) - cost(q, a)), q)));
            }
        }
    };

    let mut arc = vec![f64::INFINITY; k * k];
    let mut arc_point = vec![NONE; k * k];
    let mut dist = vec![0.0; k];
    let mut bar = vec![0.0; k];
    let mut pred = vec![NONE; k];

    // rows of `arc` whose cluster gained or lost members since the last refresh
    let mut stale = vec![true; k];
    let mut dirty = vec![false; k];
    for p in 0..n {
        for a in 0..k {
            if !stale[a] {
                continue;
            }
            stale[a] = false;
            for b in 0..k {
                let idx = a * k + b;
                arc[idx] = f64::INFINITY;
                arc_point[idx] = NONE;
                if a == b {
                    continue;
                }
                let heap = &mut moves[idx];
                while let Some(Reverse((key, q))) = heap.peek() {
                    if assignment[*q] == a {
                        arc[idx] = key.0;
                        arc_point[idx] = *q;
                        break;
                    }
                    heap.pop();
                }
            }
        }

        for c in 0..k {
            dist[c] = cost(p, c);
            bar[c] = relax_bar(dist[c]);
            pred[c] = NONE;
        }
        // Bellman-Ford; a node whose distance has not dropped since its last
        // scan cannot relax anything new, so it is skipped
        dirty.fill(true);
        for _ in 0..k {
            let mut changed = false;
            for a in 0..k {
                if !dirty[a] {
                    continue;
                }
                dirty[a] = false;
                let row = &arc[a * k..(a + 1) * k];
                let from = dist[a];
                // a missing arc is +inf and never passes the bar
                for (b, &w) in row.iter().enumerate() {
                    let candidate = from + w;
                    if candidate < bar[b] {
                        dist[b] = candidate;
                        bar[b] = relax_bar(candidate);
                        pred[b] = a;
                        dirty[b] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let terminal = (0..k)
            .filter(|&c| count[c] < bounds.max)
            .min_by(|&x, &y| {
                let tier = |c: usize| (count[c] >= bounds.min) as u8;
                tier(x).cmp(&tier(y)).then(dist[x].total_cmp(&dist[y])).then(x.cmp(&y))
            })
            .expect("capacity remains while points are unassigned");

        let mut current = terminal;
        let mut steps = 0;
        stale[terminal] = true;
        while pred[current] != NONE {
            let from = pred[current];
            stale[from] = true;
            let q = arc_point[from * k + current];
            assignment[q] = current;
            push_member(&mut moves, q, current);
            current = from;
            steps += 1;
            assert!(steps <= k, "augmenting path must be simple");
        }
        assignment[p] = current;
        push_member(&mut moves, p, current);
        count[terminal] += 1;
    }
    Ok(assignment)
}

fn kmeans_plus_plus(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = vectors.iter().map(|v| squared_distance(v, &vectors[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // all remaining points coincide with a centre
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (d, v) in nearest.iter_mut().zip(vectors) {
            *d = d.min(squared_distance(v, &vectors[next]));
        }
    }
    chosen.into_iter().map(|i| vectors[i].clone()).collect()
}

fn cost_matrix(vectors: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<f64> {
    vectors
        .iter()
        .flat_map(|v| centroids.iter().map(move |c| squared_distance(v, c)))
        .collect()
}

/// Lloyd iterations with the constrained assignment step. Stops when the
/// assignment repeats or after [`MAX_ITER`] iterations; `trace` records the
/// objective after every centroid update.
pub fn constrained_kmeans(vectors: &[Vec<f64>], k: usize, bounds: SizeBounds, seed: u64) -> Result<Clustering> {
    let n = vectors.len();
    check_bounds(n, k, bounds)?;
    let d = vectors[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(vectors, k, &mut rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut trace = Vec::new();

    for _ in 0..MAX_ITER {
        let costs = cost_matrix(vectors, &centroids);
        let next = assign_constrained(&costs, n, k, bounds)?;
        if next == assignment {
            break;
        }
        assignment = next;
        let mut sums = vec![vec![0.0; d]; k];
        let mut sizes = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&assignment) {
            sizes[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        trace.push(objective(vectors, &assignment, &centroids));
    }

    let mut sizes = vec![0usize; k];
    for &c in &assignment {
        sizes[c] += 1;
    }
    let sse = trace.last().copied().unwrap_or(0.0);
    Ok(Clustering {
        k,
        assignment,
        centroids,
        sizes,
        sse,
        trace,
    })
}

pub fn objective(vectors: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    vectors
        .iter()
        .zip(assignment)
        .map(|(v, &c)| squared_distance(v, &centroids[c]))
        .sum()
}
