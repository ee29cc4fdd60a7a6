//! Undirected graphs: loading, synthetic generation, normalization, edge splits and walks.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::DenseMatrix;
use crate::scalar::Scalar;

/// Undirected simple graph over dense node ids `0..node_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

impl Graph {
    /// Build from an edge list; duplicates and reversed duplicates collapse.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u == v {
                return Err(Error::Graph(format!("self-loop on node {u}")));
            }
            for id in [u, v] {
                if id >= node_count {
                    return Err(Error::NodeOutOfRange {
                        id,
                        count: node_count,
                    });
                }
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut edge_count = 0;
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
            nbrs.dedup();
            edge_count += nbrs.len();
        }
        Ok(Graph {
            adjacency,
            edge_count: edge_count / 2,
        })
    }

    pub fn edgeless(node_count: usize) -> Self {
        Graph {
            adjacency: vec![Vec::new(); node_count],
            edge_count: 0,
        }
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Sorted neighbor ids.
    #[inline]
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count() && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(min, max)`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }
}

/// Per-node label sets; a node may carry several labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTable {
    labels: Vec<Vec<usize>>,
    num_labels: usize,
}

impl LabelTable {
    pub fn new(labels: Vec<Vec<usize>>, num_labels: usize) -> Result<Self> {
        let mut labels = labels;
        for set in &mut labels {
            if let Some(&bad) = set.iter().find(|&&l| l >= num_labels) {
                return Err(Error::Config(format!(
                    "label {bad} out of range (label count {num_labels})"
                )));
            }
            set.sort_unstable();
            set.dedup();
        }
        Ok(LabelTable { labels, num_labels })
    }

    /// One label per node.
    pub fn single(labels: &[usize]) -> Self {
        let num_labels = labels.iter().max().map_or(0, |&m| m + 1);
        LabelTable {
            labels: labels.iter().map(|&l| vec![l]).collect(),
            num_labels,
        }
    }

    #[inline]
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn labels_of(&self, node: usize) -> &[usize] {
        &self.labels[node]
    }

    /// Nodes carrying at least one label.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| !self.labels[i].is_empty())
            .collect()
    }
}

/// Held-out edges and matched non-edges for link prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSplit {
    pub train_graph: Graph,
    pub positive_pairs: Vec<(usize, usize)>,
    pub negative_pairs: Vec<(usize, usize)>,
}

/// Parse `u v` lines; `#` starts a comment.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_id = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected two node ids, found {line:?}"),
            });
        };
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid node id {s:?}"),
            })
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u == v {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("self-loop on node {u}"),
            });
        }
        max_id = max_id.max(Some(u.max(v)));
        edges.push((u, v));
    }
    Graph::from_edges(max_id.map_or(0, |m| m + 1), &edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_edge_list(&text).map_err(|e| e.in_file(path))
}

/// Parse `node_id label_id` lines; repeated node ids add labels.
///
/// Nodes without any line get an empty label set.
pub fn parse_labels(text: &str, node_count: usize) -> Result<LabelTable> {
    let mut labels = vec![Vec::new(); node_count];
    let mut num_labels = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid label line {line:?}"),
            })?;
        let [node, label] = nums[..] else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `node label`, found {line:?}"),
            });
        };
        if node >= node_count {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("node {node} out of range (node count {node_count})"),
            });
        }
        labels[node].push(label);
        num_labels = num_labels.max(label + 1);
    }
    LabelTable::new(labels, num_labels)
}

pub fn load_labels(path: impl AsRef<Path>, node_count: usize) -> Result<LabelTable> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_labels(&text, node_count).map_err(|e| e.in_file(path))
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Stochastic block model; labels are block ids.
pub fn generate_sbm(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(Graph, LabelTable)> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(Error::Config("stochastic block model needs non-empty blocks".into()));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    let block: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = block.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block[u] == block[v] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok((Graph::from_edges(n, &edges)?, LabelTable::single(&block)))
}

/// Symmetric normalized adjacency with self-loops, stored by rows.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency<T> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> NormalizedAdjacency<T> {
    #[inline]
    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// Sorted `(column, value)` entries of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    /// `Â · m`.
    pub fn matmul(&self, m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if m.rows() != self.node_count() {
            return Err(Error::shape(
                "adjacency matmul",
                (self.node_count(), self.node_count()),
                m.shape(),
            ));
        }
        let mut out = DenseMatrix::zeros(m.rows(), m.cols());
        for (i, entries) in self.rows.iter().enumerate() {
            let out_row = out.row_mut(i);
            for &(j, a) in entries {
                for (o, &v) in out_row.iter_mut().zip(m.row(j)) {
                    *o += a * v;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.node_count();
        let mut out = DenseMatrix::zeros(n, n);
        for (i, entries) in self.rows.iter().enumerate() {
            for &(j, a) in entries {
                out[(i, j)] = a;
            }
        }
        out
    }
}

/// `D̃^{-1/2} (T + I) D̃^{-1/2}`.
pub fn normalize_adjacency<T: Scalar>(g: &Graph) -> NormalizedAdjacency<T> {
    let inv_sqrt: Vec<T> = (0..g.node_count())
        .map(|i| T::one() / T::from_count(g.degree(i) + 1).sqrt())
        .collect();
    let rows = (0..g.node_count())
        .map(|i| {
            let mut cols: Vec<usize> = g.neighbors(i).to_vec();
            let pos = cols.partition_point(|&j| j < i);
            cols.insert(pos, i);
            cols.into_iter()
                .map(|j| (j, inv_sqrt[i] * inv_sqrt[j]))
                .collect()
        })
        .collect();
    NormalizedAdjacency { rows }
}

/// Remove `⌊fraction·|E|⌋` edges and pair them with as many sampled non-edges.
pub fn split_edges(g: &Graph, holdout_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = g.edges();
    edges.shuffle(&mut rng);
    let holdout = (holdout_fraction * g.edge_count() as f64).floor() as usize;
    let positive_pairs: Vec<_> = edges[..holdout].to_vec();
    let train_graph = Graph::from_edges(g.node_count(), &edges[holdout..])?;

    let n = g.node_count();
    let mut negative_pairs = Vec::with_capacity(holdout);
    let mut seen = HashSet::with_capacity(holdout);
    let budget = 100 * holdout;
    let mut rejections = 0;
    while negative_pairs.len() < holdout {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        let pair = (u.min(v), u.max(v));
        if u == v || g.has_edge(u, v) || !seen.insert(pair) {
            rejections += 1;
            if rejections > budget {
                return Err(Error::Graph(format!(
                    "could not sample {holdout} non-edges after {budget} rejections"
                )));
            }
            continue;
        }
        negative_pairs.push(pair);
    }
    Ok(EdgeSplit {
        train_graph,
        positive_pairs,
        negative_pairs,
    })
}

/// Uniform random walks, `walks_per_node` starting at every node.
///
/// A walk stops early when it reaches a node without neighbors.
pub fn random_walks(
    g: &Graph,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if walk_length < 2 {
        return Err(Error::Config(format!("walk length must be ≥ 2, got {walk_length}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walks = Vec::with_capacity(walks_per_node * g.node_count());
    for _ in 0..walks_per_node {
        for start in 0..g.node_count() {
            let mut walk = Vec::with_capacity(walk_length);
            walk.push(start);
            let mut cur = start;
            while walk.len() < walk_length {
                let Some(&next) = g.neighbors(cur).choose(&mut rng) else {
                    break;
                };
                walk.push(next);
                cur = next;
            }
            walks.push(walk);
        }
    }
    Ok(walks)
}
