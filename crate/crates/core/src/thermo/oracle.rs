use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DirectedMultigraph, DEFAULT_WORD_CAP};
use crate::stats::neumaier_sum;
use crate::system::MarkovSystem;

pub const ORACLE_MAX_ITERATIONS: usize = 100_000;
const NORMALIZATION_TOL: f64 = 1e-9;

/// Stationary law of the symbolic chain whose next letter depends on the
/// previous `k` through a normalized potential `g`.
#[derive(Debug, Clone, Serialize)]
pub struct WordMeasure {
    pub k: usize,
    pub words: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// For each word, `(next word, appended letter, g)`.
    #[serde(skip)]
    transitions: Vec<Vec<(usize, usize, f64)>>,
}

impl WordMeasure {
    /// Measure of the cylinder `[word]` at any fixed position.
    pub fn cylinder(&self, word: &[usize]) -> f64 {
        if word.len() <= self.k {
            return neumaier_sum(
                self.words
                    .iter()
                    .zip(&self.probs)
                    .filter(|(w, _)| w.starts_with(word))
                    .map(|(_, &p)| p),
            );
        }
        let Ok(mut s) = self.words.binary_search_by(|w| w.as_slice().cmp(&word[..self.k])) else {
            return 0.0;
        };
        let mut m = self.probs[s];
        for &e in &word[self.k..] {
            match self.transitions[s].iter().find(|t| t.1 == e) {
                Some(&(next, _, g)) => {
                    m *= g;
                    s = next;
                }
                None => return 0.0,
            }
        }
        m
    }
}

/// Power iteration of the transfer matrix on admissible `k`-words. `g`
/// receives a `(k+1)`-word and returns the probability of its last letter
/// given the first `k`; for every `k`-word these must be positive and sum to
/// one over the admissible continuations.
pub fn transfer_operator_fixed_point(
    graph: &DirectedMultigraph,
    k: usize,
    g: impl Fn(&[usize]) -> f64,
    tol: f64,
) -> Result<WordMeasure> {
    if k == 0 {
        return Err(Error::InvalidArgument("memory k must be at least 1".into()));
    }
    if !graph.is_irreducible() {
        return Err(Error::Graph(crate::graph::GraphError::Reducible));
    }
    let words: Vec<Vec<usize>> = graph
        .admissible_words(k, DEFAULT_WORD_CAP)?
        .into_iter()
        .map(|w| w.0)
        .collect();
    let mut transitions = Vec::with_capacity(words.len());
    let mut buf = Vec::with_capacity(k + 1);
    for w in &words {
        let last = *w.last().expect("k >= 1");
        let mut row = Vec::new();
        for &e in graph.outgoing(graph.edge(last).to) {
            buf.clear();
            buf.extend_from_slice(w);
            buf.push(e);
            let p = g(&buf);
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "potential must be positive, got {p} on {buf:?}"
                )));
            }
            let j = words
                .binary_search_by(|s| s.as_slice().cmp(&buf[1..]))
                .expect("shifted admissible word is admissible");
            row.push((j, e, p));
        }
        let total = neumaier_sum(row.iter().map(|r| r.2));
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "potential sums to {total} after {w:?}"
            )));
        }
        transitions.push(row);
    }
    let n = words.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 1..=ORACLE_MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        for (i, row) in transitions.iter().enumerate() {
            for &(j, _, p) in row {
                next[j] += v[i] * p;
            }
        }
        let total = neumaier_sum(next.iter().copied());
        next.iter_mut().for_each(|x| *x /= total);
        residual = 0.5 * v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum::<f64>();
        v = next;
        if residual <= tol {
            return Ok(WordMeasure {
                k,
                words,
                probs: v,
                iterations: it,
                residual,
                transitions,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: ORACLE_MAX_ITERATIONS,
        residual,
    })
}

/// Oracle for a system whose probabilities are constants: the letters form
/// a Markov chain on edges with `P(e → e') = p_{e'}`.
pub fn constant_probability_oracle(sys: &MarkovSystem, tol: f64) -> Result<WordMeasure> {
    let probs = (0..sys.graph().edge_count())
        .map(|e| {
            if !sys.edge_functions(e).prob.is_constant() {
                return Err(Error::InvalidArgument(format!(
                    "probability of edge `{}` is not constant",
                    sys.edge_id(e)
                )));
            }
            sys.prob(e, sys.anchor(sys.graph().edge(e).from))
        })
        .collect::<Result<Vec<f64>>>()?;
    transfer_operator_fixed_point(sys.graph(), 1, |w| probs[w[1]], tol)
}

/// The vertices visited by an edge word: `i(e_1), t(e_1), …, t(e_k)`.
pub fn vertex_path(graph: &DirectedMultigraph, word: &[usize]) -> Vec<usize> {
    let mut path = Vec::with_capacity(word.len() + 1);
    if let Some(&e) = word.first() {
        path.push(graph.edge(e).from);
    }
    path.extend(word.iter().map(|&e| graph.edge(e).to));
    path
}

/// Oracle on the full shift over vertex symbols, for a system with exactly
/// one edge `a → b` per ordered vertex pair and constant probabilities: the
/// `g`-measure with one-step memory `g(a, b) = p_{a→b}`. Cylinders of edge
/// words correspond to cylinders of their [`vertex_path`].
pub fn vertex_chain_oracle(sys: &MarkovSystem, tol: f64) -> Result<(DirectedMultigraph, WordMeasure)> {
    let graph = sys.graph();
    let n = graph.vertex_count();
    let mut q = vec![vec![None; n]; n];
    for (e, edge) in graph.edges().iter().enumerate() {
        if !sys.edge_functions(e).prob.is_constant() {
            return Err(Error::InvalidArgument(format!(
                "probability of edge `{}` is not constant",
                edge.id
            )));
        }
        if q[edge.from][edge.to].is_some() {
            return Err(Error::InvalidArgument(format!(
                "more than one edge from `{}` to `{}`",
                graph.vertex_id(edge.from),
                graph.vertex_id(edge.to)
            )));
        }
        q[edge.from][edge.to] = Some(sys.prob(e, sys.anchor(edge.from))?);
    }
    let q: Vec<Vec<f64>> = q
        .into_iter()
        .map(|row| row.into_iter().collect::<Option<Vec<f64>>>())
        .collect::<Option<_>>()
        .ok_or_else(|| Error::InvalidArgument("every ordered vertex pair needs an edge".into()))?;
    let symbols: Vec<String> = (0..n).map(|v| graph.vertex_id(v).to_string()).collect();
    let loops: Vec<(String, String, String)> = symbols
        .iter()
        .map(|s| (s.clone(), "s".to_string(), "s".to_string()))
        .collect();
    let shift = DirectedMultigraph::new(&["s".to_string()], &loops)?;
    let measure = transfer_operator_fixed_point(&shift, 1, |w| q[w[0]][w[1]], tol)?;
    Ok((shift, measure))
}

/// Stationary law `(q10, q01) / (q01 + q10)` of the two-state chain with
/// switching probabilities `q01 = P(0 → 1)` and `q10 = P(1 → 0)`.
pub fn two_state_stationary(q01: f64, q10: f64) -> [f64; 2] {
    let s = q01 + q10;
    [q10 / s, q01 / s]
}
