//! Cosine-similarity graphs over pair representations.
//!
//! Nodes are clustered first; edges only ever join members of the same
//! cluster. Inside a cluster every node is linked to its `q` most similar
//! members, then the most similar of the remaining node pairs are linked until
//! `extra_ratio` of them are used. Two labeled nodes are never linked.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{select_k, ClusterBounds, Clustering, KMethod};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::matcher::PairEncoding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    PoolMatch,
    PoolNonMatch,
    LabeledMatch,
    LabeledNonMatch,
}

impl NodeKind {
    pub fn pool(prediction: Label) -> Self {
        if prediction == 1 {
            Self::PoolMatch
        } else {
            Self::PoolNonMatch
        }
    }

    pub fn labeled(label: Label) -> Self {
        if label == 1 {
            Self::LabeledMatch
        } else {
            Self::LabeledNonMatch
        }
    }

    pub fn is_labeled(self) -> bool {
        matches!(self, Self::LabeledMatch | Self::LabeledNonMatch)
    }

    /// Predicted or known class of the node.
    pub fn class(self) -> Label {
        matches!(self, Self::PoolMatch | Self::LabeledMatch) as Label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    /// Index of the pair in the encoding slice the graph was built from.
    pub pair: usize,
    pub pair_id: String,
    pub kind: NodeKind,
}

/// Undirected edge between local node indices, `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub q: usize,
    pub extra_ratio: f64,
    pub bounds: ClusterBounds,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            q: 15,
            extra_ratio: 0.03,
            bounds: ClusterBounds::default(),
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Config("q must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.extra_ratio) {
            return Err(Error::Config(format!("extra_ratio {} is outside [0, 1]", self.extra_ratio)));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, Default)]
pub struct PairGraph {
    /// Nodes in ascending `pair` order.
    pub nodes: Vec<GraphNode>,
    /// Sorted by `(u, v)`.
    pub edges: Vec<Edge>,
    pub adjacency: Vec<Vec<(usize, f64)>>,
    /// Cluster of each node.
    pub cluster_of: Vec<usize>,
    pub k: usize,
    pub k_method: Option<KMethod>,
}

impl PairGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    fn from_parts(nodes: Vec<GraphNode>, mut edges: Vec<Edge>, cluster_of: Vec<usize>, k: usize) -> Self {
        edges.sort_by(|a, b| (a.u, a.v).cmp(&(b.u, b.v)));
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            adjacency[e.u].push((e.v, e.weight));
            adjacency[e.v].push((e.u, e.weight));
        }
        for list in &mut adjacency {
            list.sort_by_key(|(n, _)| *n);
        }
        Self {
            nodes,
            edges,
            adjacency,
            cluster_of,
            k,
            k_method: None,
        }
    }

    /// Edge list as CSV with pair ids: `u,v,weight`.
    pub fn write_edges_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "u,v,weight")?;
        for e in &self.edges {
            writeln!(out, "{},{},{}", self.nodes[e.u].pair_id, self.nodes[e.v].pair_id, e.weight)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(nu > 0.0 && nu.is_finite() && nv > 0.0 && nv.is_finite()) {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter().map(|x| x / norm).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Edges created inside one cluster, split by construction stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterEdges {
    /// Nearest-neighbour stage, `(a, b, similarity)` with `a < b` as member positions.
    pub nearest: Vec<(usize, usize, f64)>,
    /// Extra edges taken from the top of the remaining pairs.
    pub extra: Vec<(usize, usize, f64)>,
    /// Unlinked member pairs eligible for an extra edge.
    pub remaining: usize,
    /// Member pairs skipped because both ends are labeled.
    pub labeled_pairs: usize,
}

/// Edge construction for one cluster of `m` members given their pairwise
/// similarity and labeled flags. Ties in similarity go to the smaller position.
pub fn cluster_edges(
    m: usize,
    similarity: impl Fn(usize, usize) -> f64,
    labeled: impl Fn(usize) -> bool,
    q: usize,
    extra_ratio: f64,
) -> ClusterEdges {
    let mut sim = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let s = similarity(a, b);
            sim[a * m + b] = s;
            sim[b * m + a] = s;
        }
    }
    let eligible = |a: usize, b: usize| a != b && !(labeled(a) && labeled(b));

    let mut linked: HashSet<(usize, usize)> = HashSet::new();
    let mut candidates: Vec<usize> = Vec::with_capacity(m);
    for a in 0..m {
        candidates.clear();
        candidates.extend((0..m).filter(|&b| eligible(a, b)));
        let by_similarity = |x: &usize, y: &usize| sim[a * m + *y].total_cmp(&sim[a * m + *x]).then(x.cmp(y));
        if candidates.len() > q {
            candidates.select_nth_unstable_by(q - 1, by_similarity);
            candidates.truncate(q);
        }
        for &b in &candidates {
            linked.insert((a.min(b), a.max(b)));
        }
    }
    let mut nearest: Vec<(usize, usize, f64)> = linked.iter().map(|&(a, b)| (a, b, sim[a * m + b])).collect();
    nearest.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

    let mut rest: Vec<(usize, usize)> = Vec::new();
    let mut labeled_pairs = 0;
    for a in 0..m {
        for b in a + 1..m {
            if !eligible(a, b) {
                labeled_pairs += 1;
            } else if !linked.contains(&(a, b)) {
                rest.push((a, b));
            }
        }
    }
    let remaining = rest.len();
    let n_extra = ((extra_ratio * remaining as f64) + 1e-9).floor() as usize;
    let order = |x: &(usize, usize), y: &(usize, usize)| {
        sim[y.0 * m + y.1].total_cmp(&sim[x.0 * m + x.1]).then(x.cmp(y))
    };
    if n_extra > 0 && n_extra < rest.len() {
        rest.select_nth_unstable_by(n_extra - 1, order);
    }
    rest.truncate(n_extra);
    rest.sort_by(order);
    let extra = rest.into_iter().map(|(a, b)| (a, b, sim[a * m + b])).collect();

    ClusterEdges {
        nearest,
        extra,
        remaining,
        labeled_pairs,
    }
}

/// Cluster the nodes' representations and link them inside each cluster.
/// Node sets too small for any admissible number of clusters form one cluster.
pub fn build_graph(
    mut nodes: Vec<GraphNode>,
    encodings: &[PairEncoding],
    params: &GraphParams,
    seed: u64,
) -> Result<PairGraph> {
    params.validate()?;
    nodes.sort_by_key(|n| n.pair);
    if nodes.is_empty() {
        return Ok(PairGraph::default());
    }
    let vectors: Vec<Vec<f64>> = nodes.iter().map(|n| encodings[n.pair].representation.clone()).collect();
    let (clustering, method) = match select_k(&vectors, &params.bounds, seed) {
        Ok(selection) => (selection.clustering, Some(selection.method)),
        Err(Error::EmptyCandidateRange { .. }) => (Clustering::single(&vectors), None),
        Err(e) => return Err(e),
    };
    let units: Vec<Vec<f64>> = vectors.iter().map(|v| unit(v)).collect();

    let mut edges = Vec::new();
    for members in clustering.members() {
        let built = cluster_edges(
            members.len(),
            |a, b| {
                units[members[a]]
                    .iter()
                    .zip(&units[members[b]])
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    .clamp(-1.0, 1.0)
            },
            |a| nodes[members[a]].kind.is_labeled(),
            params.q,
            params.extra_ratio,
        );
        for (a, b, w) in built.nearest.into_iter().chain(built.extra) {
            edges.push(Edge {
                u: members[a],
                v: members[b],
                weight: w,
            });
        }
    }
    let k = clustering.k;
    let mut graph = PairGraph::from_parts(nodes, edges, clustering.assignment, k);
    graph.k_method = method;
    Ok(graph)
}

/// Build a graph from explicit per-cluster edge lists (local member positions
/// mapped through `members`). Used for fixed worked examples.
pub fn graph_from_cluster_edges(nodes: Vec<GraphNode>, members: &[usize], built: &ClusterEdges) -> PairGraph {
    let edges = built
        .nearest
        .iter()
        .chain(&built.extra)
        .map(|&(a, b, w)| {
            let (u, v) = (members[a].min(members[b]), members[a].max(members[b]));
            Edge { u, v, weight: w }
        })
        .collect();
    let n = nodes.len();
    PairGraph::from_parts(nodes, edges, vec![0; n], 1)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComponentSet {
    /// Local node indices per component, ascending; components ordered by
    /// their smallest node.
    pub components: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

pub fn connected_components(graph: &PairGraph) -> ComponentSet {
    let n = graph.len();
    let mut dsu = DisjointSet::new(n);
    for e in &graph.edges {
        dsu.union(e.u, e.v);
    }
    let mut index_of_root = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut component_of = vec![0; n];
    for node in 0..n {
        let root = dsu.find(node);
        if index_of_root[root] == usize::MAX {
            index_of_root[root] = components.len();
            components.push(Vec::new());
        }
        component_of[node] = index_of_root[root];
        components[index_of_root[root]].push(node);
    }
    ComponentSet {
        components,
        component_of,
    }
}

/// The three graphs of one iteration.
#[derive(Debug, Clone, Default)]
pub struct IterationGraphs {
    /// Pool pairs predicted to match.
    pub positive: PairGraph,
    /// Pool pairs predicted not to match.
    pub negative: PairGraph,
    /// Every pair of D, labeled ones tagged with their label.
    pub heterogeneous: PairGraph,
}

/// `labels[i]` is the training label of pair `i` (None while in the pool).
pub fn build_iteration_graphs(
    encodings: &[PairEncoding],
    labels: &[Option<Label>],
    params: &GraphParams,
    seed: u64,
) -> Result<IterationGraphs> {
    let node = |i: usize, kind: NodeKind| GraphNode {
        pair: i,
        pair_id: encodings[i].pair_id.clone(),
        kind,
    };
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    let mut all = Vec::with_capacity(encodings.len());
    for (i, e) in encodings.iter().enumerate() {
        match labels[i] {
            Some(label) => all.push(node(i, NodeKind::labeled(label))),
            None => {
                let kind = NodeKind::pool(e.prediction);
                all.push(node(i, kind));
                if e.prediction == 1 {
                    positive.push(node(i, kind));
                } else {
                    negative.push(node(i, kind));
                }
            }
        }
    }
    Ok(IterationGraphs {
        positive: build_graph(positive, encodings, params, seed)?,
        negative: build_graph(negative, encodings, params, seed.wrapping_add(1))?,
        heterogeneous: build_graph(all, encodings, params, seed.wrapping_add(2))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    fn encodings(n: usize, d: usize, seed: u64) -> Vec<PairEncoding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                PairEncoding::new(i.to_string(), v, rng.gen())
            })
            .collect()
    }

    fn pool_nodes(enc: &[PairEncoding]) -> Vec<GraphNode> {
        enc.iter()
            .enumerate()
            .map(|(i, e)| GraphNode {
                pair: i,
                pair_id: e.pair_id.clone(),
                kind: NodeKind::pool(e.prediction),
            })
            .collect()
    }

    #[test]
    fn two_nodes_one_edge() {
        let enc = vec![PairEncoding::new("a", vec![1.0, 0.0], 0.9), PairEncoding::new("b", vec![1.0, 1.0], 0.9)];
        let params = GraphParams { q: 1, ..GraphParams::default() };
        let g = build_graph(pool_nodes(&enc), &enc, &params, 0).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].weight - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zero_extra_ratio_keeps_nearest_edges_only() {
        let built = cluster_edges(6, |a, b| 1.0 / (1.0 + (a as f64 - b as f64).abs()), |_| false, 1, 0.0);
        assert!(built.extra.is_empty());
        assert!(!built.nearest.is_empty());
    }

    #[test]
    fn small_cluster_links_everything_reachable() {
        let built = cluster_edges(3, |_, _| 0.5, |_| false, 5, 0.0);
        assert_eq!(built.nearest.len(), 3);
    }

    #[test]
    fn graph_invariants_on_random_encodings() {
        let enc = encodings(120, 8, 1);
        let mut nodes = pool_nodes(&enc);
        for n in nodes.iter_mut().take(15) {
            n.kind = NodeKind::labeled((n.pair % 2) as Label);
        }
        let params = GraphParams { q: 4, extra_ratio: 0.03, ..GraphParams::default() };
        let g = build_graph(nodes, &enc, &params, 9).unwrap();
        let mut seen = HashSet::new();
        let mut sizes = vec![0; g.k];
        g.cluster_of.iter().for_each(|&c| sizes[c] += 1);
        for e in &g.edges {
            assert!(e.u < e.v);
            assert!(seen.insert((e.u, e.v)));
            assert!(!(g.nodes[e.u].kind.is_labeled() && g.nodes[e.v].kind.is_labeled()));
            assert_eq!(g.cluster_of[e.u], g.cluster_of[e.v]);
            let w = cosine_similarity(&enc[g.nodes[e.u].pair].representation, &enc[g.nodes[e.v].pair].representation).unwrap();
            assert!((w - e.weight).abs() < 1e-9);
        }
        for node in 0..g.len() {
            let c = g.cluster_of[node];
            let eligible = (0..g.len())
                .filter(|&o| o != node && g.cluster_of[o] == c)
                .filter(|&o| !(g.nodes[o].kind.is_labeled() && g.nodes[node].kind.is_labeled()))
                .count();
            assert!(g.degree(node) >= params.q.min(eligible));
        }
        let components = connected_components(&g);
        for comp in &components.components {
            let c = g.cluster_of[comp[0]];
            assert!(comp.iter().all(|&n| g.cluster_of[n] == c));
        }
    }

    #[test]
    fn components_of_simple_graphs() {
        let nodes: Vec<GraphNode> = (0..3)
            .map(|i| GraphNode {
                pair: i,
                pair_id: i.to_string(),
                kind: NodeKind::PoolMatch,
            })
            .collect();
        let edgeless = PairGraph::from_parts(nodes.clone(), vec![], vec![0; 3], 1);
        assert_eq!(connected_components(&edgeless).components, vec![vec![0], vec![1], vec![2]]);
        let path = PairGraph::from_parts(
            nodes,
            vec![Edge { u: 0, v: 1, weight: 1.0 }, Edge { u: 1, v: 2, weight: 1.0 }],
            vec![0; 3],
            1,
        );
        assert_eq!(connected_components(&path).components, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn iteration_graphs_split_by_prediction() {
        let enc = vec![
            PairEncoding::new("0", vec![1.0, 0.1], 0.9),
            PairEncoding::new("1", vec![0.9, 0.2], 0.8),
            PairEncoding::new("2", vec![0.1, 1.0], 0.1),
            PairEncoding::new("3", vec![0.2, 0.9], 0.2),
        ];
        let params = GraphParams { q: 2, ..GraphParams::default() };
        let g = build_iteration_graphs(&enc, &[None; 4], &params, 0).unwrap();
        assert_eq!((g.positive.len(), g.negative.len(), g.heterogeneous.len()), (2, 2, 4));

        let labels = [None, None, Some(1), None];
        let g = build_iteration_graphs(&enc, &labels, &params, 0).unwrap();
        assert!(g.positive.nodes.iter().chain(&g.negative.nodes).all(|n| !n.kind.is_labeled()));
        assert_eq!(g.heterogeneous.nodes[2].kind, NodeKind::LabeledMatch);

        let all_negative: Vec<PairEncoding> = enc.iter().map(|e| PairEncoding::new(e.pair_id.clone(), e.representation.clone(), 0.1)).collect();
        let g = build_iteration_graphs(&all_negative, &[None; 4], &params, 0).unwrap();
        assert!(g.positive.is_empty());
        assert!(g.positive.edges.is_empty());
    }

    #[test]
    fn edge_dump_uses_pair_ids() {
        let enc = encodings(10, 3, 2);
        let g = build_graph(pool_nodes(&enc), &enc, &GraphParams { q: 2, ..GraphParams::default() }, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.csv");
        g.write_edges_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), g.edges.len() + 1);
    }
}
