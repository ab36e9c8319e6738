//! Finite directed multigraphs `(V, E, i, t)` and their admissible words.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

/// Default ceiling on the number of words [`DirectedMultigraph::admissible_words`]
/// will materialize.
pub const DEFAULT_WORD_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph needs at least one vertex")]
    NoVertices,
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("edge `{edge}` references undefined vertex `{vertex}`")]
    DanglingVertex { edge: String, vertex: String },
    #[error("vertices without outgoing edges: {0:?}")]
    NotSurjective(Vec<String>),
    #[error("graph is not irreducible")]
    Reducible,
    #[error("unknown edge id `{0}`")]
    UnknownEdge(String),
    #[error("word length must be at least 1")]
    EmptyWordLength,
    #[error("{count} admissible words of length {length} exceed the cap of {cap}")]
    EnumerationCap {
        length: usize,
        count: u128,
        cap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub from: usize,
    pub to: usize,
}

/// A finite word over the edge alphabet, stored as dense edge indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct EdgeWord(pub Vec<usize>);

impl EdgeWord {
    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<usize>> for EdgeWord {
    fn from(v: Vec<usize>) -> Self {
        EdgeWord(v)
    }
}

#[derive(Debug, Clone)]
pub struct DirectedMultigraph {
    vertex_ids: Vec<String>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<usize>>,
    edge_index: HashMap<String, usize>,
}

impl DirectedMultigraph {
    /// Builds a graph from user ids. Edges are `(id, from, to)`; their dense
    /// indices follow declaration order.
    pub fn new<S: AsRef<str>>(
        vertices: &[S],
        edges: &[(S, S, S)],
    ) -> Result<Self, GraphError> {
        if vertices.is_empty() {
            return Err(GraphError::NoVertices);
        }
        let mut vindex = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if vindex.insert(v.as_ref().to_string(), i).is_some() {
                return Err(GraphError::DuplicateVertex(v.as_ref().to_string()));
            }
        }
        let lookup = |edge: &str, v: &str| {
            vindex
                .get(v)
                .copied()
                .ok_or_else(|| GraphError::DanglingVertex {
                    edge: edge.to_string(),
                    vertex: v.to_string(),
                })
        };
        let mut built = Vec::with_capacity(edges.len());
        for (id, from, to) in edges {
            built.push(Edge {
                id: id.as_ref().to_string(),
                from: lookup(id.as_ref(), from.as_ref())?,
                to: lookup(id.as_ref(), to.as_ref())?,
            });
        }
        Self::assemble(vertices.iter().map(|v| v.as_ref().to_string()).collect(), built)
    }

    /// Builds a graph on vertices `0..n` (ids `"v0"`, `"v1"`, …) with edge ids
    /// equal to their index.
    pub fn from_indices(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::NoVertices);
        }
        let vertex_ids = (0..n).map(|i| format!("v{i}")).collect();
        let mut built = Vec::with_capacity(edges.len());
        for (k, &(from, to)) in edges.iter().enumerate() {
            for v in [from, to] {
                if v >= n {
                    return Err(GraphError::DanglingVertex {
                        edge: k.to_string(),
                        vertex: format!("v{v}"),
                    });
                }
            }
            built.push(Edge {
                id: k.to_string(),
                from,
                to,
            });
        }
        Self::assemble(vertex_ids, built)
    }

    fn assemble(vertex_ids: Vec<String>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut outgoing = vec![Vec::new(); vertex_ids.len()];
        let mut edge_index = HashMap::new();
        for (k, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id.clone(), k).is_some() {
                return Err(GraphError::DuplicateEdge(e.id.clone()));
            }
            outgoing[e.from].push(k);
        }
        Ok(Self {
            vertex_ids,
            edges,
            outgoing,
            edge_index,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_id(&self, v: usize) -> &str {
        &self.vertex_ids[v]
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertex_ids.iter().position(|v| v == id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    /// Edges `e` with `i(e) = v`, in declaration order.
    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    /// Can `next` follow `prev` in a code, i.e. `t(prev) = i(next)`?
    pub fn follows(&self, prev: usize, next: usize) -> bool {
        self.edges[prev].to == self.edges[next].from
    }

    pub fn is_admissible(&self, word: &[usize]) -> bool {
        word.iter().all(|&e| e < self.edges.len())
            && word.windows(2).all(|w| self.follows(w[0], w[1]))
    }

    /// Parses a word from user edge ids.
    pub fn word_from_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<EdgeWord, GraphError> {
        ids.iter()
            .map(|id| {
                self.edge_index(id.as_ref())
                    .ok_or_else(|| GraphError::UnknownEdge(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(EdgeWord)
    }

    pub fn word_ids(&self, word: &[usize]) -> Vec<String> {
        word.iter().map(|&e| self.edges[e].id.clone()).collect()
    }

    /// Checks that every vertex has an outgoing edge (`i` is onto).
    pub fn check_initial_surjective(&self) -> Result<(), GraphError> {
        let missing: Vec<String> = (0..self.vertex_count())
            .filter(|&v| self.outgoing[v].is_empty())
            .map(|v| self.vertex_ids[v].clone())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(GraphError::NotSurjective(missing))
        }
    }

    fn reach(&self, reverse: bool) -> Vec<bool> {
        let n = self.vertex_count();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            if reverse {
                adj[e.to].push(e.from);
            } else {
                adj[e.from].push(e.to);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Strong connectivity.
    pub fn is_irreducible(&self) -> bool {
        self.reach(false).iter().all(|&s| s) && self.reach(true).iter().all(|&s| s)
    }

    /// Period of an irreducible graph: gcd of all cycle lengths, computed from
    /// BFS levels as gcd over edges `u → v` of `level(u) + 1 − level(v)`.
    pub fn period(&self) -> Result<usize, GraphError> {
        if !self.is_irreducible() {
            return Err(GraphError::Reducible);
        }
        let n = self.vertex_count();
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.outgoing[u] {
                let v = self.edges[e].to;
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut g = 0usize;
        for e in &self.edges {
            let diff = (level[e.from] as i64 + 1 - level[e.to] as i64).unsigned_abs() as usize;
            g = gcd(g, diff);
        }
        Ok(g)
    }

    pub fn is_aperiodic(&self) -> Result<bool, GraphError> {
        Ok(self.period()? == 1)
    }

    /// Number of admissible words of the given length.
    pub fn count_words(&self, length: usize) -> u128 {
        if length == 0 {
            return 1;
        }
        // ways[v] = number of admissible words of the current length ending at vertex v
        let mut ways = vec![0u128; self.vertex_count()];
        for e in &self.edges {
            ways[e.to] = ways[e.to].saturating_add(1);
        }
        for _ in 1..length {
            let mut next = vec![0u128; self.vertex_count()];
            for e in &self.edges {
                next[e.to] = next[e.to].saturating_add(ways[e.from]);
            }
            ways = next;
        }
        ways.iter().fold(0u128, |a, &b| a.saturating_add(b))
    }

    /// All admissible words of `length`, in lexicographic order of dense edge
    /// indices, refusing to enumerate more than `cap` words.
    pub fn admissible_words(&self, length: usize, cap: usize) -> Result<Vec<EdgeWord>, GraphError> {
        if length == 0 {
            return Err(GraphError::EmptyWordLength);
        }
        let count = self.count_words(length);
        if count > cap as u128 {
            return Err(GraphError::EnumerationCap { length, count, cap });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut prefix = Vec::with_capacity(length);
        for e in 0..self.edge_count() {
            prefix.push(e);
            self.extend_words(&mut prefix, length, &mut out);
            prefix.pop();
        }
        Ok(out)
    }

    fn extend_words(&self, prefix: &mut Vec<usize>, length: usize, out: &mut Vec<EdgeWord>) {
        if prefix.len() == length {
            out.push(EdgeWord(prefix.clone()));
            return;
        }
        let last = *prefix.last().expect("non-empty prefix");
        for &e in &self.outgoing[self.edges[last].to] {
            prefix.push(e);
            self.extend_words(prefix, length, out);
            prefix.pop();
        }
    }
}

impl fmt::Display for DirectedMultigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vertices, {} edges", self.vertex_count(), self.edge_count())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
