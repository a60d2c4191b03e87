//! Uncertainty (local and neighbourhood entropy), PageRank centrality and the
//! rank fusion used to order selection candidates.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::matcher::PairEncoding;
use crate::pairgraph::{connected_components, IterationGraphs, PairGraph};

/// Binary entropy in bits, `0·log 0 = 0`.
pub fn conditional_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityRange(p));
    }
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    Ok(term(p) + term(1.0 - p))
}

/// One neighbour as seen from the node whose spatial confidence is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub weight: f64,
    /// Predicted class, or the label for labeled pairs.
    pub class: Label,
    /// Confidence in `class`; 1 for labeled pairs.
    pub confidence: f64,
}

/// Weighted share of neighbourhood confidence that agrees with `class`.
/// Negative weights count as zero. Returns `None` when there is no positive
/// weight to divide by, leaving the fallback to the caller.
pub fn spatial_confidence_of(class: Label, neighbours: &[Neighbour]) -> Option<f64> {
    let mut agree = 0.0;
    let mut total = 0.0;
    for n in neighbours {
        let term = n.weight.max(0.0) * n.confidence;
        total += term;
        if n.class == class {
            agree += term;
        }
    }
    (total > 0.0).then(|| (agree / total).clamp(0.0, 1.0))
}

/// Neighbourhood of `node` in a heterogeneous graph. Pool nodes contribute
/// their confidence in their own predicted class, labeled nodes 1.
pub fn neighbourhood(graph: &PairGraph, node: usize, encodings: &[PairEncoding]) -> Vec<Neighbour> {
    graph.adjacency[node]
        .iter()
        .map(|&(other, weight)| {
            let n = &graph.nodes[other];
            let confidence = if n.kind.is_labeled() {
                1.0
            } else {
                encodings[n.pair].label_confidence()
            };
            Neighbour {
                weight,
                class: n.kind.class(),
                confidence,
            }
        })
        .collect()
}

/// `β·H(φ) + (1−β)·H(φ̃)`.
pub fn uncertainty_score(confidence: f64, spatial_confidence: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta {beta} is outside [0, 1]")));
    }
    Ok(beta * conditional_entropy(confidence)? + (1.0 - beta) * conditional_entropy(spatial_confidence)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankParams {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tolerance: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRank {
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// Number of edges whose weight was non-positive and had to be clamped.
    pub clamped_edges: usize,
}

const WEIGHT_FLOOR: f64 = 1e-12;

/// Weighted PageRank over `n` nodes joined by undirected `edges` (each one a
/// pair of opposite arcs). Scores sum to one.
pub fn pagerank(n: usize, edges: &[(usize, usize, f64)], params: &PageRankParams) -> PageRank {
    if n == 0 {
        return PageRank {
            scores: vec![],
            iterations: 0,
            clamped_edges: 0,
        };
    }
    let mut clamped_edges = 0;
    let mut arcs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        if w <= 0.0 {
            clamped_edges += 1;
        }
        let w = w.max(0.0) + WEIGHT_FLOOR;
        arcs[u].push((v, w));
        arcs[v].push((u, w));
    }
    let out: Vec<f64> = arcs.iter().map(|a| a.iter().map(|(_, w)| w).sum()).collect();
    let rho = params.damping;
    let teleport = (1.0 - rho) / n as f64;
    let mut rank = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        // mass of nodes without arcs is spread uniformly
        let dangling: f64 = (0..n).filter(|&u| arcs[u].is_empty()).map(|u| rank[u]).sum();
        next.iter_mut().for_each(|x| *x = teleport + rho * dangling / n as f64);
        for u in 0..n {
            if arcs[u].is_empty() {
                continue;
            }
            let share = rho * rank[u] / out[u];
            for &(v, w) in &arcs[u] {
                next[v] += share * w;
            }
        }
        let change: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if change < params.tolerance {
            break;
        }
    }
    let total: f64 = rank.iter().sum();
    rank.iter_mut().for_each(|x| *x /= total);
    PageRank {
        scores: rank,
        iterations,
        clamped_edges,
    }
}

/// Rank 1 for the largest value; ties go to the smaller `key`.
pub fn rank_descending(values: &[f64], keys: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(keys[a].cmp(&keys[b])));
    let mut ranks = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// `α·rank_unc + (1−α)·rank_cen`.
pub fn fused_rank(rank_unc: usize, rank_cen: usize, alpha: f64) -> f64 {
    alpha * rank_unc as f64 + (1.0 - alpha) * rank_cen as f64
}

/// Positions sorted by ascending fused rank, ties by `key`.
pub fn fused_order(fused: &[f64], keys: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fused.len()).collect();
    order.sort_by(|&a, &b| fused[a].total_cmp(&fused[b]).then(keys[a].cmp(&keys[b])));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScores {
    pub pair_id: String,
    /// Index of the pair in the encoding slice.
    pub pair: usize,
    pub prediction: Label,
    pub confidence: f64,
    pub entropy_local: f64,
    pub spatial_confidence: f64,
    pub uncertainty: f64,
    pub centrality: f64,
    pub rank_unc: usize,
    pub rank_cen: usize,
    pub fused_rank: f64,
    pub component_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    pub alpha: f64,
    pub beta: f64,
    pub pagerank: PageRankParams,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            pagerank: PageRankParams::default(),
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} is outside [0, 1]")));
            }
        }
        let rho = self.pagerank.damping;
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("damping {rho} is outside (0, 1)")));
        }
        Ok(())
    }
}

/// Scored components of one prediction side. Each component lists its nodes
/// best first (ascending fused rank).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SideScores {
    pub components: Vec<Vec<NodeScores>>,
}

impl SideScores {
    pub fn sizes(&self) -> Vec<usize> {
        self.components.iter().map(Vec::len).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeScores> {
        self.components.iter().flatten()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationScores {
    pub positive: SideScores,
    pub negative: SideScores,
    /// Pool nodes with no usable neighbourhood, scored with φ̃ = φ.
    pub spatial_fallbacks: usize,
    pub clamped_edges: usize,
}

/// Score every pool node: uncertainty from the heterogeneous graph, centrality
/// and ranks inside its component of the prediction-side graph.
pub fn score_iteration(graphs: &IterationGraphs, encodings: &[PairEncoding], params: &ScoringParams) -> Result<IterationScores> {
    params.validate()?;
    let het = &graphs.heterogeneous;
    let mut spatial: HashMap<usize, f64> = HashMap::new();
    let mut spatial_fallbacks = 0;
    for (node, n) in het.nodes.iter().enumerate() {
        if n.kind.is_labeled() {
            continue;
        }
        let e = &encodings[n.pair];
        let value = match spatial_confidence_of(e.prediction, &neighbourhood(het, node, encodings)) {
            Some(v) => v,
            None => {
                spatial_fallbacks += 1;
                e.label_confidence()
            }
        };
        spatial.insert(n.pair, value);
    }

    let mut clamped_edges = 0;
    let mut side = |graph: &PairGraph| -> Result<SideScores> {
        let components = connected_components(graph);
        let mut local = vec![usize::MAX; graph.len()];
        let mut out = Vec::with_capacity(components.components.len());
        for (cid, members) in components.components.iter().enumerate() {
            for (i, &m) in members.iter().enumerate() {
                local[m] = i;
            }
            let edges: Vec<(usize, usize, f64)> = graph
                .edges
                .iter()
                .filter(|e| components.component_of[e.u] == cid)
                .map(|e| (local[e.u], local[e.v], e.weight))
                .collect();
            let pr = pagerank(members.len(), &edges, &params.pagerank);
            clamped_edges += pr.clamped_edges;

            let mut nodes = Vec::with_capacity(members.len());
            for (i, &m) in members.iter().enumerate() {
                let pair = graph.nodes[m].pair;
                let e = &encodings[pair];
                let phi_tilde = spatial.get(&pair).copied().unwrap_or_else(|| e.label_confidence());
                nodes.push(NodeScores {
                    pair_id: e.pair_id.clone(),
                    pair,
                    prediction: e.prediction,
                    confidence: e.confidence,
                    entropy_local: conditional_entropy(e.confidence)?,
                    spatial_confidence: phi_tilde,
                    uncertainty: uncertainty_score(e.confidence, phi_tilde, params.beta)?,
                    centrality: pr.scores[i],
                    rank_unc: 0,
                    rank_cen: 0,
                    fused_rank: 0.0,
                    component_id: cid,
                });
            }
            rank_component(&mut nodes, params.alpha);
            out.push(nodes);
        }
        Ok(SideScores { components: out })
    };
    let positive = side(&graphs.positive)?;
    let negative = side(&graphs.negative)?;
    Ok(IterationScores {
        positive,
        negative,
        spatial_fallbacks,
        clamped_edges,
    })
}

/// Fill in ranks and fused ranks, then sort the component best first.
pub fn rank_component(nodes: &mut Vec<NodeScores>, alpha: f64) {
    let keys: Vec<usize> = nodes.iter().map(|n| n.pair).collect();
    let unc: Vec<f64> = nodes.iter().map(|n| n.uncertainty).collect();
    let cen: Vec<f64> = nodes.iter().map(|n| n.centrality).collect();
    let ru = rank_descending(&unc, &keys);
    let rc = rank_descending(&cen, &keys);
    for (i, n) in nodes.iter_mut().enumerate() {
        n.rank_unc = ru[i];
        n.rank_cen = rc[i];
        n.fused_rank = fused_rank(ru[i], rc[i], alpha);
    }
    let fused: Vec<f64> = nodes.iter().map(|n| n.fused_rank).collect();
    let order = fused_order(&fused, &keys);
    let mut sorted: Vec<NodeScores> = order.iter().map(|&i| nodes[i].clone()).collect();
    std::mem::swap(nodes, &mut sorted);
}

/// Per-node score dump for one iteration.
pub fn write_scores_csv(path: impl AsRef<Path>, scores: &IterationScores) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "pair_id,prediction,confidence,spatial_confidence,uncertainty,centrality,rank_unc,rank_cen,fused_rank,component_id"
    )?;
    for (side, s) in [("pos", &scores.positive), ("neg", &scores.negative)] {
        for n in s.nodes() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}-{}",
                n.pair_id,
                n.prediction,
                n.confidence,
                n.spatial_confidence,
                n.uncertainty,
                n.centrality,
                n.rank_unc,
                n.rank_cen,
                n.fused_rank,
                side,
                n.component_id
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
