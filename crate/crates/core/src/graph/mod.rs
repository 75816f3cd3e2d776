//! Undirected graphs, hop distances and the similarity labels they induce.
//!
//! The label convention used across the crate is `+1 = similar`: a couple
//! `{i, j}` is labelled `+1` iff its hop distance is below the threshold
//! `tau` (1.5 by default, so `+1` means "joined by an edge").

mod star_packing;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use star_packing::{max_disjoint_star_packing, sphere_packing_number, StarPacking};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({u}, {v}) references a vertex outside 0..{n}")]
    VertexOutOfRange { u: usize, v: usize, n: usize },
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("vertex count overflows: {0}")]
    TooLarge(String),
    #[error("couple ({0}, {1}) is not a pair of distinct vertices")]
    BadCouple(usize, usize),
    #[error("hop distance {distance} equals the label threshold {tau}")]
    DegenerateThreshold { distance: u32, tau: f64 },
    #[error("star size must be at least 1")]
    ZeroStar,
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("graph is not a tree: {0}")]
    NotATree(String),
}

/// Finite simple undirected graph on vertices `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph; duplicate edges are merged, self-loops rejected.
    pub fn new<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::VertexOutOfRange { u, v, n });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph { n, edges, adj })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// Number of unordered couples `|E₂(V)| = n(n-1)/2`.
    pub fn couple_count(&self) -> usize {
        couple_count(self.n)
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &w in &self.adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }

    pub fn is_forest(&self) -> bool {
        self.edges.len() + self.component_count() == self.n
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n && self.component_count() == 1
    }

    /// Vertex minimizing eccentricity (smallest id among ties). Requires a tree.
    pub fn tree_center(&self) -> Result<usize, GraphError> {
        if !self.is_tree() {
            return Err(GraphError::NotATree(format!(
                "{} vertices, {} edges, {} components",
                self.n,
                self.edges.len(),
                self.component_count()
            )));
        }
        // Peel leaves layer by layer; the last layer holds the center(s).
        let mut deg: Vec<usize> = (0..self.n).map(|v| self.degree(v)).collect();
        let mut layer: Vec<usize> = (0..self.n).filter(|&v| deg[v] <= 1).collect();
        let mut remaining = self.n;
        while remaining > layer.len() {
            remaining -= layer.len();
            let mut next = Vec::new();
            for &v in &layer {
                for &w in &self.adj[v] {
                    if deg[w] > 1 {
                        deg[w] -= 1;
                        if deg[w] == 1 {
                            next.push(w);
                        }
                    }
                }
                deg[v] = 0;
            }
            layer = next;
        }
        Ok(*layer.iter().min().expect("non-empty tree has a center"))
    }

    /// Parses the edge-list format: one `u v` pair per line, 0-based ids,
    /// `#` starts a comment. The vertex count is `max id + 1` unless a larger
    /// `# vertices: N` header is present.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        let mut n = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let (body, comment) = match raw.find('#') {
                Some(pos) => (&raw[..pos], Some(&raw[pos + 1..])),
                None => (raw, None),
            };
            if let Some(c) = comment {
                if let Some(rest) = c.trim().strip_prefix("vertices:") {
                    let declared: usize = rest.trim().parse().map_err(|_| GraphError::Parse {
                        line,
                        msg: format!("bad vertex count {:?}", rest.trim()),
                    })?;
                    n = n.max(declared);
                }
            }
            let mut it = body.split_whitespace();
            let Some(a) = it.next() else { continue };
            let b = it.next().ok_or_else(|| GraphError::Parse {
                line,
                msg: "expected two vertex ids".into(),
            })?;
            if it.next().is_some() {
                return Err(GraphError::Parse {
                    line,
                    msg: "trailing tokens".into(),
                });
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| GraphError::Parse {
                    line,
                    msg: format!("bad vertex id {s:?}"),
                })
            };
            let (u, v) = (parse(a)?, parse(b)?);
            n = n.max(u + 1).max(v + 1);
            edges.push((u, v));
        }
        Graph::new(n, edges)
    }

    /// Serializes to the edge-list format read by [`Graph::from_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# vertices: {}\n", self.n);
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(|V|={}, |E|={})", self.n, self.edges.len())
    }
}

pub fn couple_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Index of couple `{i, j}` in the lexicographic enumeration of `E₂(V)`.
pub fn couple_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(a != b && b < n);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// Lexicographic enumeration of all couples `(i, j)`, `i < j`.
pub fn couples(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Complete rooted tree where every internal vertex has `arity` children and
/// `levels` counts vertex layers (the root alone is one level). Vertex ids
/// follow breadth-first order with the root at 0.
pub fn complete_ary_tree(arity: usize, levels: usize) -> Result<Graph, GraphError> {
    if arity == 0 || levels == 0 {
        return Err(GraphError::TooLarge(format!(
            "arity and levels must be positive (got {arity}, {levels})"
        )));
    }
    let mut total: usize = 0;
    let mut layer: usize = 1;
    for level in 0..levels {
        total = total.checked_add(layer).ok_or_else(|| {
            GraphError::TooLarge(format!("{arity}-ary tree with {levels} levels"))
        })?;
        if level + 1 < levels {
            layer = layer.checked_mul(arity).ok_or_else(|| {
                GraphError::TooLarge(format!("{arity}-ary tree with {levels} levels"))
            })?;
        }
    }
    let edges = (1..total).map(|v| ((v - 1) / arity, v));
    Graph::new(total, edges)
}

pub fn path_graph(n: usize) -> Result<Graph, GraphError> {
    Graph::new(n, (1..n).map(|v| (v - 1, v)))
}

/// `K_{1,leaves}` with center 0.
pub fn star_graph(leaves: usize) -> Result<Graph, GraphError> {
    Graph::new(leaves + 1, (1..=leaves).map(|v| (0, v)))
}

/// Random recursive tree: vertex `v > 0` attaches to a uniform earlier vertex.
pub fn random_recursive_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Graph, GraphError> {
    Graph::new(n, (1..n).map(|v| (rng.gen_range(0..v), v)))
}

/// Erdős–Rényi `G(n, p)`.
pub fn random_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph, GraphError> {
    let edges: Vec<_> = couples(n).filter(|_| rng.gen_bool(p)).collect();
    Graph::new(n, edges)
}

/// Hop distance between two vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hop {
    Finite(u32),
    Unreachable,
}

impl Hop {
    pub fn finite(self) -> Option<u32> {
        match self {
            Hop::Finite(d) => Some(d),
            Hop::Unreachable => None,
        }
    }
}

/// All-pairs hop distances; unreachable pairs carry [`Hop::Unreachable`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<u32>,
}

const UNREACHABLE: u32 = u32::MAX;

impl DistanceMatrix {
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Hop {
        match self.entries[i * self.n + j] {
            UNREACHABLE => Hop::Unreachable,
            d => Hop::Finite(d),
        }
    }
}

/// BFS from every vertex (sources processed in parallel).
pub fn all_pairs_distances(g: &Graph) -> DistanceMatrix {
    let n = g.vertex_count();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut dist = vec![UNREACHABLE; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &w in g.neighbors(u) {
                    if dist[w] == UNREACHABLE {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                }
            }
            dist
        })
        .collect();
    DistanceMatrix {
        n,
        entries: rows.concat(),
    }
}

/// Couple label: `Similar` is `+1`, `Dissimilar` is `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Similar,
    Dissimilar,
}

impl Label {
    pub fn from_sign(y: i8) -> Option<Label> {
        match y {
            1 => Some(Label::Similar),
            -1 => Some(Label::Dissimilar),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Similar => 1,
            Label::Dissimilar => -1,
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.sign())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConvention {
    pub tau: f64,
}

impl Default for LabelConvention {
    fn default() -> Self {
        LabelConvention { tau: 1.5 }
    }
}

impl LabelConvention {
    /// `+1` iff `d*(i, j) < tau`, `-1` iff `d*(i, j) > tau`.
    pub fn true_label(&self, dm: &DistanceMatrix, i: usize, j: usize) -> Result<Label, GraphError> {
        if i == j || i >= dm.n || j >= dm.n {
            return Err(GraphError::BadCouple(i, j));
        }
        match dm.get(i, j) {
            Hop::Unreachable => Ok(Label::Dissimilar),
            Hop::Finite(d) => {
                let d_f = f64::from(d);
                if d_f < self.tau {
                    Ok(Label::Similar)
                } else if d_f > self.tau {
                    Ok(Label::Dissimilar)
                } else {
                    Err(GraphError::DegenerateThreshold {
                        distance: d,
                        tau: self.tau,
                    })
                }
            }
        }
    }

    /// Labels of all couples in lexicographic couple order.
    pub fn all_labels(&self, dm: &DistanceMatrix) -> Result<Vec<Label>, GraphError> {
        couples(dm.n)
            .map(|(i, j)| self.true_label(dm, i, j))
            .collect()
    }
}

/// True labels of every couple under the default `tau = 1.5`.
pub fn graph_labels(g: &Graph) -> Vec<Label> {
    LabelConvention::default()
        .all_labels(&all_pairs_distances(g))
        .expect("integer hop distances never equal 1.5")
}
