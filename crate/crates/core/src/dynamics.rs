//! The Markov process of a system, its operator `Uf = Σ_e p_e·(f∘w_e)` and
//! adjoint `U*`, and particle estimates of the invariant measure `μ`.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::graph::EdgeWord;
use crate::rng::{SampleRng, StreamKey};
use crate::stats::{neumaier_sum, pairwise_sum, wasserstein1, Estimate};
use crate::system::{distance, MarkovSystem};

/// Default particle cap for split-mode pushes.
pub const DEFAULT_SPLIT_CAP: usize = 10_000_000;
/// Default threshold on the burn-in Wasserstein diagnostic.
pub const DEFAULT_W1_THRESHOLD: f64 = 0.01;
/// Target forgetting factor `â^burn_in` for the default burn-in.
pub const BURN_IN_TARGET: f64 = 1e-6;
/// Allowed deviation of ensemble weights from a unit total.
pub const WEIGHT_TOL: f64 = 1e-9;

/// Draws the edge taken from `x ∈ K_v` given a uniform variate `u ∈ [0, 1)`.
pub fn choose_edge(sys: &MarkovSystem, v: usize, x: &[f64], u: f64) -> Result<usize> {
    let out = sys.graph().outgoing(v);
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for &e in out {
        let p = sys.prob(e, x)?;
        if !(0.0..=1.0 + 1e-9).contains(&p) {
            return Err(Error::InvalidProbability {
                edge: sys.edge_id(e).to_string(),
                value: p,
                point: x.to_vec(),
            });
        }
        if p > 0.0 {
            cumulative += p;
            last_positive = Some(e);
            if u < cumulative {
                return Ok(e);
            }
        }
    }
    // rounding can leave Σ p slightly below one
    last_positive.ok_or_else(|| Error::InvalidProbability {
        edge: sys.edge_id(out[0]).to_string(),
        value: 0.0,
        point: x.to_vec(),
    })
}

/// State of the process: the current point, its vertex, and optionally the
/// last `H` `(point, edge)` pairs that led here.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub point: Vec<f64>,
    pub vertex: usize,
    history: Option<(usize, VecDeque<(Vec<f64>, usize)>)>,
}

impl ChainState {
    pub fn new(point: Vec<f64>, vertex: usize) -> Self {
        Self {
            point,
            vertex,
            history: None,
        }
    }

    /// Starts at `x`, placed in the first region that contains it.
    pub fn locate(sys: &MarkovSystem, x: &[f64]) -> Result<Self> {
        Ok(Self::new(x.to_vec(), sys.locate(x)?))
    }

    pub fn at_anchor(sys: &MarkovSystem, vertex: usize) -> Self {
        Self::new(sys.anchor(vertex).to_vec(), vertex)
    }

    /// Keeps the last `capacity` steps as `(point before, edge)` pairs.
    pub fn with_history(mut self, capacity: usize) -> Self {
        self.history = Some((capacity, VecDeque::with_capacity(capacity)));
        self
    }

    pub fn history(&self) -> Option<&VecDeque<(Vec<f64>, usize)>> {
        self.history.as_ref().map(|(_, h)| h)
    }

    /// Moves along edge `e`, which must leave the current vertex.
    pub fn advance(&mut self, sys: &MarkovSystem, e: usize) -> Result<()> {
        let edge = sys.graph().edge(e);
        if edge.from != self.vertex {
            return Err(Error::InvalidArgument(format!(
                "edge `{}` does not leave vertex `{}`",
                edge.id,
                sys.graph().vertex_id(self.vertex)
            )));
        }
        let next = sys.apply_map(e, &self.point)?;
        if !sys.contains(edge.to, &next)? {
            return Err(Error::RegionViolation {
                edge: edge.id.clone(),
                vertex: sys.graph().vertex_id(edge.to).to_string(),
                point: next,
            });
        }
        let prev = std::mem::replace(&mut self.point, next);
        if let Some((cap, hist)) = &mut self.history {
            if *cap > 0 {
                if hist.len() == *cap {
                    hist.pop_front();
                }
                hist.push_back((prev, e));
            }
        }
        self.vertex = edge.to;
        Ok(())
    }

    /// One random transition; returns the edge taken.
    pub fn step<R: Rng>(&mut self, sys: &MarkovSystem, rng: &mut R) -> Result<usize> {
        let e = choose_edge(sys, self.vertex, &self.point, rng.random::<f64>())?;
        self.advance(sys, e)?;
        Ok(e)
    }
}

/// Outcome of [`run_chain`].
#[derive(Debug, Clone, Serialize)]
pub struct ChainRun {
    pub word: Vec<usize>,
    /// Points visited, starting with `x0`; one more than the number of steps.
    pub trajectory: Vec<Vec<f64>>,
    pub vertices: Vec<usize>,
    /// Time averages of the requested observables over the visited points
    /// after the start.
    pub observable_means: Vec<f64>,
}

impl ChainRun {
    pub fn edge_word(&self) -> EdgeWord {
        EdgeWord(self.word.clone())
    }
}

/// Runs the process for `n_steps` from `x0`.
pub fn run_chain(
    sys: &MarkovSystem,
    x0: &[f64],
    n_steps: usize,
    observables: &[Expr],
    seed: u64,
) -> Result<ChainRun> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let mut state = ChainState::locate(sys, x0)?;
    let mut rng = StreamKey::new(seed).derive("chain").stream(0);
    let mut word = Vec::with_capacity(n_steps);
    let mut trajectory = Vec::with_capacity(n_steps + 1);
    let mut vertices = Vec::with_capacity(n_steps + 1);
    trajectory.push(state.point.clone());
    vertices.push(state.vertex);
    for _ in 0..n_steps {
        word.push(state.step(sys, &mut rng)?);
        trajectory.push(state.point.clone());
        vertices.push(state.vertex);
    }
    let observable_means = observables
        .iter()
        .map(|f| -> Result<f64> {
            let vals = trajectory[1..]
                .iter()
                .map(|x| eval_observable(f, x))
                .collect::<Result<Vec<_>>>()?;
            Ok(pairwise_sum(&vals) / n_steps as f64)
        })
        .collect::<Result<_>>()?;
    Ok(ChainRun {
        word,
        trajectory,
        vertices,
        observable_means,
    })
}

/// Follows a fixed admissible word from `x0`, returning every visited point.
pub fn follow_word(sys: &MarkovSystem, x0: &[f64], word: &[usize]) -> Result<Vec<Vec<f64>>> {
    if !sys.graph().is_admissible(word) {
        return Err(Error::InvalidArgument("word is not admissible".into()));
    }
    let start = match word.first() {
        Some(&e) => sys.graph().edge(e).from,
        None => sys.locate(x0)?,
    };
    if !sys.contains(start, x0)? {
        return Err(Error::OutsideRegions { point: x0.to_vec() });
    }
    let mut state = ChainState::new(x0.to_vec(), start);
    let mut out = vec![state.point.clone()];
    for &e in word {
        state.advance(sys, e)?;
        out.push(state.point.clone());
    }
    Ok(out)
}

fn eval_observable(f: &Expr, x: &[f64]) -> Result<f64> {
    f.eval(x).map_err(|source| Error::Eval {
        what: format!("observable `{f}` at {x:?}"),
        source,
    })
}

/// `Uf(x) = Σ_{i(e) = v} p_e(x) f(w_e x)` where `v` is the region of `x`.
pub fn apply_markov_operator(sys: &MarkovSystem, f: &Expr, x: &[f64]) -> Result<f64> {
    let v = sys.locate(x)?;
    markov_operator_at(sys, f, x, v)
}

fn markov_operator_at(sys: &MarkovSystem, f: &Expr, x: &[f64], v: usize) -> Result<f64> {
    let terms = sys
        .graph()
        .outgoing(v)
        .iter()
        .map(|&e| Ok(sys.prob(e, x)? * eval_observable(f, &sys.apply_map(e, x)?)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(neumaier_sum(terms))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Particle {
    pub point: Vec<f64>,
    pub vertex: usize,
    pub weight: f64,
}

/// A weighted point cloud standing for a probability measure on the
/// disjoint union of the regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    particles: Vec<Particle>,
}

impl ParticleEnsemble {
    /// Builds an ensemble, checking positivity and unit total weight.
    pub fn new(dim: usize, particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("ensemble is empty".into()));
        }
        if particles.iter().any(|p| p.point.len() != dim || !(p.weight > 0.0)) {
            return Err(Error::InvalidArgument(
                "particles need positive weight and matching dimension".into(),
            ));
        }
        let ens = Self { dim, particles };
        let total = ens.total_weight();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!(
                "ensemble weights sum to {total}"
            )));
        }
        Ok(ens)
    }

    /// `n` unit-mass particles at the anchors, cycling through the vertices.
    pub fn at_anchors(sys: &MarkovSystem, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one particle".into()));
        }
        let nv = sys.graph().vertex_count();
        let w = 1.0 / n as f64;
        let particles = (0..n)
            .map(|i| Particle {
                point: sys.anchor(i % nv).to_vec(),
                vertex: i % nv,
                weight: w,
            })
            .collect();
        Ok(Self {
            dim: sys.dim(),
            particles,
        })
    }

    /// Point mass at `x`, placed in the first region containing it.
    pub fn point_mass(sys: &MarkovSystem, x: &[f64]) -> Result<Self> {
        let vertex = sys.locate(x)?;
        Self::new(
            sys.dim(),
            vec![Particle {
                point: x.to_vec(),
                vertex,
                weight: 1.0,
            }],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        neumaier_sum(self.particles.iter().map(|p| p.weight))
    }

    /// Values of coordinate `j` (0-based) across particles.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.point[j]).collect()
    }

    /// Checks that every particle lies in its labeled region.
    pub fn check_regions(&self, sys: &MarkovSystem) -> Result<()> {
        for p in &self.particles {
            if !sys.contains(p.vertex, &p.point)? {
                return Err(Error::RegionViolation {
                    edge: "-".into(),
                    vertex: sys.graph().vertex_id(p.vertex).to_string(),
                    point: p.point.clone(),
                });
            }
        }
        Ok(())
    }

    /// Weighted mean of `f`, with standard error treating particles as an
    /// importance sample.
    pub fn mean(&self, f: &Expr) -> Result<Estimate> {
        let values = self
            .particles
            .par_iter()
            .map(|p| eval_observable(f, &p.point))
            .collect::<Result<Vec<_>>>()?;
        Ok(Estimate::from_weighted(&values, &self.weights()))
    }

    /// Weighted mean of `Uf`.
    pub fn mean_of_operator(&self, sys: &MarkovSystem, f: &Expr) -> Result<Estimate> {
        let values = self
            .particles
            .par_iter()
            .map(|p| markov_operator_at(sys, f, &p.point, p.vertex))
            .collect::<Result<Vec<_>>>()?;
        Ok(Estimate::from_weighted(&values, &self.weights()))
    }

    /// Index of the particle selected by a uniform variate, from the prefix
    /// sums of the weights.
    pub fn sampler(&self) -> WeightedIndex {
        let mut prefix = Vec::with_capacity(self.particles.len());
        let mut acc = 0.0;
        for p in &self.particles {
            acc += p.weight;
            prefix.push(acc);
        }
        WeightedIndex { prefix }
    }

    /// Writes `x1..xd, vertex, weight` rows.
    pub fn write_csv<W: Write>(&self, sys: &MarkovSystem, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        header.push("vertex".into());
        header.push("weight".into());
        w.write_record(&header)?;
        for p in &self.particles {
            let mut row: Vec<String> = p.point.iter().map(|c| format!("{c:?}")).collect();
            row.push(sys.graph().vertex_id(p.vertex).to_string());
            row.push(format!("{:?}", p.weight));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws particle indices proportionally to weight.
#[derive(Debug, Clone)]
pub struct WeightedIndex {
    prefix: Vec<f64>,
}

impl WeightedIndex {
    pub fn pick(&self, u: f64) -> usize {
        let target = u * self.prefix.last().copied().unwrap_or(0.0);
        self.prefix
            .partition_point(|&c| c <= target)
            .min(self.prefix.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PushMode {
    /// Every particle moves along one randomly drawn edge.
    Stochastic,
    /// Every particle splits into one child per outgoing edge with weight
    /// multiplied by `p_e`; fails once the ensemble would exceed `cap`.
    Split { cap: usize },
}

/// One application of `U*` to the ensemble.
pub fn push_ensemble(
    sys: &MarkovSystem,
    ens: &ParticleEnsemble,
    mode: PushMode,
    seed: u64,
) -> Result<ParticleEnsemble> {
    let particles = match mode {
        PushMode::Stochastic => {
            let key = StreamKey::new(seed).derive("push");
            ens.particles
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut rng = key.stream(i as u64);
                    let mut state = ChainState::new(p.point.clone(), p.vertex);
                    state.step(sys, &mut rng)?;
                    Ok(Particle {
                        point: state.point,
                        vertex: state.vertex,
                        weight: p.weight,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        PushMode::Split { cap } => {
            let size: usize = ens
                .particles
                .iter()
                .map(|p| sys.graph().outgoing(p.vertex).len())
                .sum();
            if size > cap {
                return Err(Error::EnsembleCap { size, cap });
            }
            let children = ens
                .particles
                .par_iter()
                .map(|p| {
                    let mut out = Vec::new();
                    for &e in sys.graph().outgoing(p.vertex) {
                        let prob = sys.prob(e, &p.point)?;
                        if prob > 0.0 {
                            let mut state = ChainState::new(p.point.clone(), p.vertex);
                            state.advance(sys, e)?;
                            out.push(Particle {
                                point: state.point,
                                vertex: state.vertex,
                                weight: p.weight * prob,
                            });
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            children.into_iter().flatten().collect()
        }
    };
    Ok(ParticleEnsemble {
        dim: ens.dim,
        particles,
    })
}

/// `ceil(ln 1e-6 / ln â)`, the number of steps after which an average
/// contraction at rate `â` has shrunk initial discrepancies by `10⁻⁶`.
pub fn default_burn_in(rate: f64) -> Result<usize> {
    if !(rate < 1.0) || rate.is_nan() {
        return Err(Error::NotContractive(rate));
    }
    if rate <= 0.0 {
        return Ok(1);
    }
    // sampled rates carry rounding noise; do not let it add a whole step
    let steps = BURN_IN_TARGET.ln() / rate.ln();
    Ok(((steps - 1e-9).ceil() as usize).max(1))
}

/// Result of [`estimate_invariant_measure`].
#[derive(Debug, Clone)]
pub struct InvariantEstimate {
    pub ensemble: ParticleEnsemble,
    pub burn_in: usize,
    /// Contraction rate used for the default burn-in, if it was estimated.
    pub rate: Option<f64>,
    /// Largest per-coordinate Wasserstein-1 distance between the ensembles
    /// at `burn_in / 2` and `burn_in`.
    pub w1_diagnostic: f64,
    pub threshold: f64,
    pub converged: bool,
}

/// Pairs drawn for the rate estimate behind the default burn-in.
pub const BURN_IN_RATE_PAIRS: usize = 20_000;

/// Estimates `μ` by running `n_particles` independent chains from the
/// anchors for `burn_in` stochastic `U*` steps. Without an explicit burn-in
/// the default is derived from an empirical contraction rate.
pub fn estimate_invariant_measure(
    sys: &MarkovSystem,
    n_particles: usize,
    burn_in: Option<usize>,
    seed: u64,
) -> Result<InvariantEstimate> {
    let root = StreamKey::new(seed);
    let (burn_in, rate) = match burn_in {
        Some(b) => (b, None),
        None => {
            let rate = sys
                .estimate_contraction_rate(BURN_IN_RATE_PAIRS, seed)?
                .empirical_rate;
            (default_burn_in(rate)?, Some(rate))
        }
    };
    let start = ParticleEnsemble::at_anchors(sys, n_particles)?;
    let key = root.derive("invariant");
    let half_at = burn_in / 2;
    let pairs = start
        .particles
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = key.stream(i as u64);
            let mut state = ChainState::new(p.point.clone(), p.vertex);
            let mut half = state.point.clone();
            for t in 0..burn_in {
                if t == half_at {
                    half = state.point.clone();
                }
                state.step(sys, &mut rng)?;
            }
            if half_at == burn_in {
                half = state.point.clone();
            }
            Ok((
                half,
                Particle {
                    point: state.point,
                    vertex: state.vertex,
                    weight: p.weight,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (halves, particles): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let weights = start.weights();
    let w1_diagnostic = (0..sys.dim())
        .map(|j| {
            let a: Vec<f64> = halves.iter().map(|x| x[j]).collect();
            let b: Vec<f64> = particles.iter().map(|p| p.point[j]).collect();
            wasserstein1(&a, Some(&weights), &b, Some(&weights))
        })
        .fold(0.0, f64::max);
    Ok(InvariantEstimate {
        ensemble: ParticleEnsemble {
            dim: sys.dim(),
            particles,
        },
        burn_in,
        rate,
        w1_diagnostic,
        threshold: DEFAULT_W1_THRESHOLD,
        converged: w1_diagnostic <= DEFAULT_W1_THRESHOLD,
    })
}

/// Estimates `(1/n) Σ_{k=1..n} U^k f(x0)` by averaging `f` along
/// `replicates` independent chains of length `n` started at `x0`; the
/// standard error comes from the spread between replicates.
pub fn ergodic_average(
    sys: &MarkovSystem,
    f: &Expr,
    x0: &[f64],
    n_steps: usize,
    replicates: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_steps == 0 || replicates < 2 {
        return Err(Error::InvalidArgument(
            "need at least one step and two replicates".into(),
        ));
    }
    let start = ChainState::locate(sys, x0)?;
    let key = StreamKey::new(seed).derive("ergodic");
    let means = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng: SampleRng = key.stream(r as u64);
            let mut state = start.clone();
            let mut vals = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                state.step(sys, &mut rng)?;
                vals.push(eval_observable(f, &state.point)?);
            }
            Ok(pairwise_sum(&vals) / n_steps as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&means))
}

/// `Σ_i ∫_{K_i} d(x, x_i) dμ(x)` over the ensemble.
pub fn moment_check(sys: &MarkovSystem, ens: &ParticleEnsemble) -> Estimate {
    let values: Vec<f64> = ens
        .particles
        .iter()
        .map(|p| distance(&p.point, sys.anchor(p.vertex)))
        .collect();
    Estimate::from_weighted(&values, &ens.weights())
}
