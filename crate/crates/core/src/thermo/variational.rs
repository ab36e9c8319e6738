use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::coding::{CodeWindow, CodingOptions};
use crate::error::{Error, Result};
use crate::graph::{DirectedMultigraph, DEFAULT_WORD_CAP};
use crate::rng::{SampleRng, StreamKey};
use crate::stats::{neumaier_sum, Estimate};
use crate::system::MarkovSystem;

use super::{energy, summarize_energies, EnergySummary};

const ROW_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;
const MAX_POWER_ITERATIONS: usize = 100_000;

/// A stationary order-`k` Markov measure on admissible codes: the next
/// letter depends on the previous `k`.
#[derive(Debug, Clone, Serialize)]
pub struct CompetitorMeasure {
    pub order: usize,
    /// Admissible `k`-words, the chain's states.
    pub states: Vec<Vec<usize>>,
    /// For each state, `(next state, appended letter, probability)`.
    pub transitions: Vec<Vec<(usize, usize, f64)>>,
    pub stationary: Vec<f64>,
}

impl CompetitorMeasure {
    /// Builds the chain with transition weights from `weight(state, letter)`,
    /// normalized per row.
    pub fn from_weights(
        graph: &DirectedMultigraph,
        order: usize,
        mut weight: impl FnMut(&[usize], usize) -> f64,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("competitor order must be at least 1".into()));
        }
        if !graph.is_irreducible() {
            return Err(Error::Graph(crate::graph::GraphError::Reducible));
        }
        let states: Vec<Vec<usize>> = graph
            .admissible_words(order, DEFAULT_WORD_CAP)?
            .into_iter()
            .map(|w| w.0)
            .collect();
        let index_of = |w: &[usize]| states.binary_search_by(|s| s.as_slice().cmp(w)).ok();
        let mut transitions = Vec::with_capacity(states.len());
        for s in &states {
            let last = *s.last().expect("order >= 1");
            let mut row = Vec::new();
            for &e in graph.outgoing(graph.edge(last).to) {
                let mut next: Vec<usize> = s[1..].to_vec();
                next.push(e);
                let j = index_of(&next).expect("shifted admissible word is admissible");
                let w = weight(s, e);
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::InvalidArgument(format!("invalid competitor weight {w}")));
                }
                row.push((j, e, w));
            }
            let total = neumaier_sum(row.iter().map(|r| r.2));
            if !(total > 0.0) {
                return Err(Error::InvalidArgument("competitor row has no mass".into()));
            }
            for r in &mut row {
                r.2 /= total;
            }
            transitions.push(row);
        }
        let mut theta = Self {
            order,
            states,
            transitions,
            stationary: Vec::new(),
        };
        theta.stationary = theta.compute_stationary()?;
        Ok(theta)
    }

    /// Uniform choice among admissible successors.
    pub fn uniform(graph: &DirectedMultigraph, order: usize) -> Result<Self> {
        Self::from_weights(graph, order, |_, _| 1.0)
    }

    /// Rows drawn from the flat Dirichlet distribution.
    pub fn random<R: Rng>(graph: &DirectedMultigraph, order: usize, rng: &mut R) -> Result<Self> {
        Self::from_weights(graph, order, |_, _| rng.sample::<f64, _>(Exp1))
    }

    fn step_distribution(&self, v: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; v.len()];
        for (i, row) in self.transitions.iter().enumerate() {
            for &(j, _, q) in row {
                next[j] += v[i] * q;
            }
        }
        next
    }

    fn compute_stationary(&self) -> Result<Vec<f64>> {
        let n = self.states.len();
        let mut v = vec![1.0 / n as f64; n];
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_POWER_ITERATIONS {
            // the lazy chain (I + Q)/2 has the same fixed point and is aperiodic
            let stepped = self.step_distribution(&v);
            let next: Vec<f64> = v.iter().zip(&stepped).map(|(a, b)| 0.5 * (a + b)).collect();
            residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            v = next;
            if residual <= 1e-13 {
                break;
            }
        }
        let total = neumaier_sum(v.iter().copied());
        v.iter_mut().for_each(|x| *x /= total);
        let fixed = self.step_distribution(&v);
        let err = v.iter().zip(&fixed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > STATIONARY_TOL {
            return Err(Error::NoConvergence {
                iterations: MAX_POWER_ITERATIONS,
                residual: residual.max(err),
            });
        }
        Ok(v)
    }

    /// Largest `|Σ_j Q_ij − 1|`.
    pub fn row_defect(&self) -> f64 {
        self.transitions
            .iter()
            .map(|row| (neumaier_sum(row.iter().map(|r| r.2)) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.row_defect() <= ROW_TOL
    }

    /// `h_Θ = −Σ_w π_w Σ_{w'} Q_{w,w'} log Q_{w,w'}`.
    pub fn entropy(&self) -> f64 {
        neumaier_sum(self.transitions.iter().zip(&self.stationary).map(|(row, &pi)| {
            -pi * neumaier_sum(row.iter().filter(|r| r.2 > 0.0).map(|r| r.2 * r.2.ln()))
        }))
    }

    /// A stationary path of `len ≥ order` letters.
    pub fn sample_path(&self, len: usize, rng: &mut SampleRng) -> Vec<usize> {
        let pick = |weights: &mut dyn Iterator<Item = f64>, u: f64| {
            let mut acc = 0.0;
            let mut chosen = 0;
            for (i, w) in weights.enumerate() {
                acc += w;
                chosen = i;
                if u < acc {
                    break;
                }
            }
            chosen
        };
        let mut s = pick(&mut self.stationary.iter().copied(), rng.random::<f64>());
        let mut path = self.states[s].clone();
        while path.len() < len {
            let row = &self.transitions[s];
            let j = pick(&mut row.iter().map(|r| r.2), rng.random::<f64>());
            path.push(row[j].1);
            s = row[j].0;
        }
        path.truncate(len);
        path
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub competitor_entropy: f64,
    pub energy: EnergySummary,
    /// `h_Θ + Θ(u)` over non-diverged samples.
    pub gap: Estimate,
    /// More than one sampled code diverged, so `Θ(u)` may be `−∞`.
    pub neg_inf_candidate: bool,
}

/// `h_Θ + Θ(u)` with `Θ(u)` averaged over `n_samples` stationary
/// `Θ`-windows `σ_{-past_depth}, …, σ_1`.
pub fn variational_gap(
    sys: &MarkovSystem,
    theta: &CompetitorMeasure,
    n_samples: usize,
    past_depth: usize,
    opts: &CodingOptions,
    seed: u64,
) -> Result<GapReport> {
    let key = StreamKey::new(seed).derive("competitor-paths");
    gap_with_key(sys, theta, n_samples, past_depth, opts, key)
}

fn gap_with_key(
    sys: &MarkovSystem,
    theta: &CompetitorMeasure,
    n_samples: usize,
    past_depth: usize,
    opts: &CodingOptions,
    key: StreamKey,
) -> Result<GapReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let len = (past_depth + 2).max(theta.order);
    let evals = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.stream(i);
            let path = theta.sample_path(len, &mut rng);
            let window = CodeWindow::ending_at(sys.graph(), 1, path);
            energy(sys, &window, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_energies(&evals);
    let h = theta.entropy();
    let diverged = (summary.diverged_fraction * n_samples as f64).round() as usize;
    Ok(GapReport {
        competitor_entropy: h,
        gap: Estimate {
            estimate: h + summary.mean.estimate,
            ..summary.mean
        },
        neg_inf_candidate: diverged > 1,
        energy: summary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub order: usize,
    pub gaps: Vec<GapReport>,
    /// Index of the competitor with the largest gap.
    pub max_gap_index: usize,
    pub max_gap: Estimate,
    pub min_gap: f64,
    /// Every gap is at most `3σ` above zero.
    pub all_within_three_sigma: bool,
}

/// Gaps for `n_competitors` random order-`order` competitors.
pub fn competitor_sweep(
    sys: &MarkovSystem,
    n_competitors: usize,
    order: usize,
    n_samples: usize,
    past_depth: usize,
    opts: &CodingOptions,
    seed: u64,
) -> Result<SweepReport> {
    if n_competitors == 0 {
        return Err(Error::InvalidArgument("need at least one competitor".into()));
    }
    let root = StreamKey::new(seed).derive("competitors");
    let gaps = (0..n_competitors as u64)
        .map(|i| {
            let mut rng = root.derive_indexed("weights", i).stream(0);
            let theta = CompetitorMeasure::random(sys.graph(), order, &mut rng)?;
            gap_with_key(sys, &theta, n_samples, past_depth, opts, root.derive_indexed("paths", i))
        })
        .collect::<Result<Vec<_>>>()?;
    let (max_gap_index, max) = gaps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.gap.estimate.total_cmp(&b.1.gap.estimate))
        .expect("non-empty");
    let max_gap = max.gap;
    let min_gap = gaps.iter().map(|g| g.gap.estimate).fold(f64::INFINITY, f64::min);
    let all_within_three_sigma = gaps.iter().all(|g| g.gap.estimate <= 3.0 * g.gap.stderr);
    Ok(SweepReport {
        order,
        gaps,
        max_gap_index,
        max_gap,
        min_gap,
        all_within_three_sigma,
    })
}
