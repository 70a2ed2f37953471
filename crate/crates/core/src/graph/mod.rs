//! Reply-graph construction: cosine similarity matrix, average-threshold
//! pruning restricted to temporal ranges, forward orientation, and thinning
//! to a forest whose trees are the recovered conversations.

mod export;

pub use export::{export_graph, ExportFormat, GraphJson, JsonEdge};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::Embeddings;
use crate::ingest::Thread;
use crate::temporal::{is_partition, Range};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("ranges do not partition [0, {n})")]
    NotAPartition { n: usize },
    #[error("size mismatch: matrix has {matrix} rows, thread has {thread} posts")]
    SizeMismatch { matrix: usize, thread: usize },
    #[error("node {node} has {in_degree} parents; expected a forest")]
    NotAForest { node: usize, in_degree: usize },
    #[error("unknown export format {0:?} (expected `dot` or `json`)")]
    UnknownFormat(String),
    #[error("edge {parent}->{child} is not forward in canonical order or out of range")]
    BadEdge { parent: usize, child: usize },
    #[error("invalid graph json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Dense symmetric `n x n` matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    /// Build from row-major values. Panics if `values.len() != n * n`.
    pub fn from_values(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n, "matrix must be n x n");
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Pairwise cosine similarity. Rows flagged empty (or all zero) get
/// similarity 0 to everything.
pub fn similarity_matrix(embeddings: &Embeddings) -> SimilarityMatrix {
    let n = embeddings.len();
    let dim = embeddings.dim;
    let unit: Vec<f64> = (0..n)
        .flat_map(|i| {
            let row = embeddings.row(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if embeddings.empty[i] || norm == 0.0 {
                0.0
            } else {
                1.0 / norm
            };
            row.iter().map(move |v| v * scale)
        })
        .collect();
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, out)| {
        let a = &unit[i * dim..(i + 1) * dim];
        for (j, slot) in out.iter_mut().enumerate() {
            if j != i {
                let b = &unit[j * dim..(j + 1) * dim];
                let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                *slot = s.clamp(-1.0, 1.0);
            }
        }
    });
    SimilarityMatrix { n, values }
}

/// Mean of the strictly upper-triangular entries, or `None` when `n < 2`.
pub fn average_score(matrix: &SimilarityMatrix) -> Option<f64> {
    let n = matrix.n;
    if n < 2 {
        return None;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += matrix.get(i, j);
        }
    }
    Some(sum / (n * (n - 1) / 2) as f64)
}

/// Zero every entry below the average score, then keep only entries whose
/// row and column fall in the same range.
pub fn prune_average(mut matrix: SimilarityMatrix, ranges: &[Range]) -> Result<SimilarityMatrix, GraphError> {
    let n = matrix.n;
    if !(is_partition(ranges, n) || (n == 0 && ranges.is_empty())) {
        return Err(GraphError::NotAPartition { n });
    }
    if let Some(avg) = average_score(&matrix) {
        for v in &mut matrix.values {
            if *v < avg {
                *v = 0.0;
            }
        }
    }
    restrict_to_ranges(&mut matrix, ranges);
    Ok(matrix)
}

/// Zero all entries that cross range boundaries.
pub fn restrict_to_ranges(matrix: &mut SimilarityMatrix, ranges: &[Range]) {
    let n = matrix.n;
    let mut block = vec![usize::MAX; n];
    for (b, r) in ranges.iter().enumerate() {
        block[r.lo.min(n)..r.hi.min(n)].fill(b);
    }
    matrix.values.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            if block[i] != block[j] || block[i] == usize::MAX {
                *v = 0.0;
            }
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
    pub weight: f64,
}

/// Directed graph over canonical post indices; every edge points forward.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplyGraph {
    children: Vec<Vec<(usize, f64)>>,
}

impl ReplyGraph {
    pub fn new(n: usize) -> Self {
        Self {
            children: vec![Vec::new(); n],
        }
    }

    /// Build from edges; each must satisfy `parent < child < n`.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        let mut g = Self::new(n);
        for e in edges {
            if e.parent >= e.child || e.child >= n {
                return Err(GraphError::BadEdge {
                    parent: e.parent,
                    child: e.child,
                });
            }
            g.children[e.parent].push((e.child, e.weight));
        }
        for list in &mut g.children {
            list.sort_by_key(|&(c, _)| c);
            list.dedup_by_key(|&mut (c, _)| c);
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.children.len()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[node].iter().map(|&(c, _)| c)
    }

    /// Edges ordered by parent, then child.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.children.iter().enumerate().flat_map(|(p, list)| {
            list.iter().map(move |&(c, w)| Edge {
                parent: p,
                child: c,
                weight: w,
            })
        })
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count()];
        for e in self.edges() {
            deg[e.child] += 1;
        }
        deg
    }

    /// Nodes with no parent, ascending.
    pub fn roots(&self) -> Vec<usize> {
        self.in_degrees()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Parent of each node when the graph is a forest.
    pub fn parent_map(&self) -> Result<Vec<Option<usize>>, GraphError> {
        let mut parent = vec![None; self.node_count()];
        let deg = self.in_degrees();
        if let Some((node, &in_degree)) = deg.iter().enumerate().find(|(_, &d)| d > 1) {
            return Err(GraphError::NotAForest { node, in_degree });
        }
        for e in self.edges() {
            parent[e.child] = Some(e.parent);
        }
        Ok(parent)
    }
}

/// Turn every nonzero upper-triangle entry `(i, j)`, `i < j`, into an edge
/// `i -> j`. The thread must be in canonical order so that index order is
/// time order.
pub fn orient(pruned: &SimilarityMatrix, thread: &Thread) -> Result<ReplyGraph, GraphError> {
    let n = pruned.n;
    if thread.len() != n {
        return Err(GraphError::SizeMismatch {
            matrix: n,
            thread: thread.len(),
        });
    }
    let mut g = ReplyGraph::new(n);
    for i in 0..n {
        let row = pruned.row(i);
        for (j, &w) in row.iter().enumerate().skip(i + 1) {
            if w != 0.0 {
                g.children[i].push((j, w));
            }
        }
    }
    Ok(g)
}

/// Strip edges to shared descendants so every node keeps only its most
/// recent parent.
///
/// Nodes are visited in ascending order; when a node is visited, each of its
/// children is removed from every previously visited node. A child reachable
/// from several parents therefore ends up attached to the latest of them.
pub fn thin(graph: &ReplyGraph) -> ReplyGraph {
    let n = graph.node_count();
    let mut latest: Vec<Option<(usize, f64)>> = vec![None; n];
    for (p, list) in graph.children.iter().enumerate() {
        for &(c, w) in list {
            latest[c] = Some((p, w));
        }
    }
    let mut out = ReplyGraph::new(n);
    for (c, link) in latest.into_iter().enumerate() {
        if let Some((p, w)) = link {
            out.children[p].push((c, w));
        }
    }
    out
}

/// One recovered conversation: a tree rooted at its earliest post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub root: usize,
    /// Ascending post indices, root included.
    pub members: Vec<usize>,
    /// Child -> parent for every non-root member.
    pub parents: BTreeMap<usize, usize>,
}

impl Conversation {
    /// Longest root-to-leaf path length in edges.
    pub fn depth(&self) -> usize {
        let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
        let mut best = 0;
        // Parents precede children, so ascending order sees parents first.
        for &m in &self.members {
            let d = self.parents.get(&m).map_or(0, |p| depth[p] + 1);
            depth.insert(m, d);
            best = best.max(d);
        }
        best
    }
}

/// One conversation per tree of a forest, ordered by root.
pub fn extract_conversations(graph: &ReplyGraph) -> Result<Vec<Conversation>, GraphError> {
    let parent = graph.parent_map()?;
    let n = graph.node_count();
    let mut root = vec![0; n];
    let mut by_root: BTreeMap<usize, Conversation> = BTreeMap::new();
    for i in 0..n {
        root[i] = match parent[i] {
            Some(p) => root[p],
            None => i,
        };
        let conv = by_root.entry(root[i]).or_insert_with(|| Conversation {
            root: root[i],
            members: Vec::new(),
            parents: BTreeMap::new(),
        });
        conv.members.push(i);
        if let Some(p) = parent[i] {
            conv.parents.insert(i, p);
        }
    }
    Ok(by_root.into_values().collect())
}

/// Conversation id (position in `conversations`) for each post.
pub fn conversation_labels(conversations: &[Conversation], n: usize) -> Vec<usize> {
    let mut labels = vec![0; n];
    for (c, conv) in conversations.iter().enumerate() {
        for &m in &conv.members {
            labels[m] = c;
        }
    }
    labels
}
