//! Finite windows of codes, the coding map `F` evaluated by backward
//! composition from the anchors, and sampling of codes under the
//! generalized Markov measure.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{default_burn_in, moment_check, ChainState, ParticleEnsemble, WeightedIndex, BURN_IN_RATE_PAIRS};
use crate::error::{Error, Result};
use crate::graph::DirectedMultigraph;
use crate::rng::StreamKey;
use crate::stats::{ols_slope, Estimate};
use crate::system::{distance, norm, MarkovSystem};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_DEPTH: usize = 10_000;
/// Norm beyond which a backward orbit counts as diverged.
pub const DEFAULT_GUARD: f64 = 1e12;

/// The letters `σ_m, …, σ_n` of a code, `m = origin`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodeWindow {
    origin: i64,
    letters: Vec<usize>,
    admissible: bool,
}

/// Serialized form: edge ids with the index of the first one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeWindowJson {
    pub origin: i64,
    pub edges: Vec<String>,
}

impl CodeWindow {
    pub fn new(graph: &DirectedMultigraph, origin: i64, letters: Vec<usize>) -> Self {
        let admissible = graph.is_admissible(&letters);
        Self {
            origin,
            letters,
            admissible,
        }
    }

    /// The window whose last letter sits at index `last`.
    pub fn ending_at(graph: &DirectedMultigraph, last: i64, letters: Vec<usize>) -> Self {
        let origin = last + 1 - letters.len() as i64;
        Self::new(graph, origin, letters)
    }

    pub fn from_ids<S: AsRef<str>>(graph: &DirectedMultigraph, origin: i64, ids: &[S]) -> Result<Self> {
        let word = graph.word_from_ids(ids)?;
        Ok(Self::new(graph, origin, word.0))
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Index of the last letter.
    pub fn end(&self) -> i64 {
        self.origin + self.letters.len() as i64 - 1
    }

    pub fn is_admissible(&self) -> bool {
        self.admissible
    }

    pub fn get(&self, index: i64) -> Option<usize> {
        let k = index - self.origin;
        if k < 0 {
            return None;
        }
        self.letters.get(k as usize).copied()
    }

    /// Letters `σ_a, …, σ_b` if the window covers them.
    pub fn range(&self, a: i64, b: i64) -> Option<&[usize]> {
        if a < self.origin || b > self.end() || a > b {
            return None;
        }
        let s = (a - self.origin) as usize;
        let t = (b - self.origin) as usize;
        Some(&self.letters[s..=t])
    }

    /// Letters at indices `≤ 0`, oldest first.
    pub fn past(&self) -> &[usize] {
        if self.origin > 0 {
            return &[];
        }
        let upto = ((-self.origin) as usize + 1).min(self.letters.len());
        &self.letters[..upto]
    }

    /// The same letters seen from the left shift `(Sσ)_j = σ_{j+1}`.
    pub fn shifted(&self) -> Self {
        Self {
            origin: self.origin - 1,
            ..self.clone()
        }
    }

    pub fn to_json(&self, graph: &DirectedMultigraph) -> CodeWindowJson {
        CodeWindowJson {
            origin: self.origin,
            edges: graph.word_ids(&self.letters),
        }
    }

    pub fn from_json(graph: &DirectedMultigraph, json: &CodeWindowJson) -> Result<Self> {
        Self::from_ids(graph, json.origin, &json.edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodingStatus {
    Converged,
    NotConverged,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingOptions {
    pub tol: f64,
    pub max_depth: usize,
    pub guard: f64,
}

impl Default for CodingOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_depth: DEFAULT_MAX_DEPTH,
            guard: DEFAULT_GUARD,
        }
    }
}

impl CodingOptions {
    pub fn new(tol: f64, max_depth: usize) -> Self {
        Self {
            tol,
            max_depth,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodingResult {
    /// `y_m`, the composition over the deepest past used.
    pub value: Vec<f64>,
    /// `y_{m/2}`, the composition over the most recent half of that past.
    pub half_value: Vec<f64>,
    pub status: CodingStatus,
    /// `d(y_m, y_{m/2})`; infinite on divergence.
    pub diameter: f64,
    /// Number of past letters composed.
    pub depth: usize,
    /// Composition step at which the guard was crossed.
    pub diverged_at: Option<usize>,
}

/// Applies `w_{σ_0} ∘ … ∘ w_{σ_k}` to the anchor of `i(σ_k)`; `letters` is
/// `σ_k, …, σ_0`. With no letters the result is the anchor of `end_vertex`.
/// Returns the point and, if the guard was crossed, the step at which it was.
pub fn compose_from_anchor(
    sys: &MarkovSystem,
    letters: &[usize],
    end_vertex: usize,
    guard: f64,
) -> Result<(Vec<f64>, Option<usize>)> {
    let start = match letters.first() {
        Some(&e) => sys.graph().edge(e).from,
        None => end_vertex,
    };
    compose_from(sys, sys.anchor(start), letters, guard)
}

fn compose_from(
    sys: &MarkovSystem,
    x: &[f64],
    letters: &[usize],
    guard: f64,
) -> Result<(Vec<f64>, Option<usize>)> {
    let mut y = x.to_vec();
    for (k, &e) in letters.iter().enumerate() {
        y = sys.apply_map(e, &y)?;
        if !(norm(&y) <= guard) {
            return Ok((y, Some(k + 1)));
        }
    }
    Ok((y, None))
}

/// Approximates `F(σ) = lim w_{σ_0} ∘ … ∘ w_{σ_m} x_{i(σ_m)}` from the
/// window's past, comparing the deepest composition `y_m` against the one
/// over the most recent half of the letters.
pub fn coding_map(sys: &MarkovSystem, window: &CodeWindow, opts: &CodingOptions) -> Result<CodingResult> {
    if !window.is_admissible() {
        return Err(Error::InvalidArgument("code window is not admissible".into()));
    }
    if window.origin() > 0 || window.end() < 0 {
        return Err(Error::InvalidArgument(
            "code window must cover index 0 and some index m ≤ 0".into(),
        ));
    }
    if opts.max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
    }
    let past = window.past();
    let depth = past.len().min(opts.max_depth);
    let used = &past[past.len() - depth..];
    let end_vertex = sys.graph().edge(*used.last().expect("non-empty past")).to;
    let (value, diverged_at) = compose_from_anchor(sys, used, end_vertex, opts.guard)?;
    if diverged_at.is_some() {
        return Ok(CodingResult {
            value,
            half_value: Vec::new(),
            status: CodingStatus::Diverged,
            diameter: f64::INFINITY,
            depth,
            diverged_at,
        });
    }
    let half = &used[depth - depth / 2..];
    let (half_value, half_div) = compose_from_anchor(sys, half, end_vertex, opts.guard)?;
    let diameter = if half_div.is_some() {
        f64::INFINITY
    } else {
        distance(&value, &half_value)
    };
    let status = if diameter <= opts.tol {
        CodingStatus::Converged
    } else {
        CodingStatus::NotConverged
    };
    Ok(CodingResult {
        value,
        half_value,
        status,
        diameter,
        depth,
        diverged_at: None,
    })
}

/// A sampled window together with the chain point at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCode {
    pub window: CodeWindow,
    /// The chain point after `σ_0` (rebased windows) or the initial
    /// `μ`-distributed point (windows starting at index 1).
    pub origin_point: Vec<f64>,
}

/// Draws windows `σ_{-past_depth}, …, σ_{future_len}` whose law on each
/// cylinder is the generalized Markov measure: a start point is drawn from
/// the ensemble and the chain is run forward. Sample `i` depends only on
/// the seed and `i`.
#[derive(Debug, Clone)]
pub struct CodeSampler<'a> {
    sys: &'a MarkovSystem,
    mu: &'a ParticleEnsemble,
    picker: WeightedIndex,
    past_depth: usize,
    future_len: usize,
    rebase: bool,
    key: StreamKey,
}

impl<'a> CodeSampler<'a> {
    pub fn new(
        sys: &'a MarkovSystem,
        mu: &'a ParticleEnsemble,
        past_depth: usize,
        future_len: usize,
        seed: u64,
    ) -> Self {
        Self {
            sys,
            mu,
            picker: mu.sampler(),
            past_depth,
            future_len,
            rebase: true,
            key: StreamKey::new(seed).derive("codes"),
        }
    }

    /// With `false`, windows start at index 1 instead of `-past_depth`.
    pub fn rebased(mut self, rebase: bool) -> Self {
        self.rebase = rebase;
        self
    }

    /// Uses a sub-stream so several samplers on one seed stay independent.
    pub fn labeled(mut self, label: &str) -> Self {
        self.key = self.key.derive(label);
        self
    }

    pub fn window_len(&self) -> usize {
        self.past_depth + 1 + self.future_len
    }

    pub fn sample(&self, index: u64) -> Result<SampledCode> {
        let mut rng = self.key.stream(index);
        let p = &self.mu.particles()[self.picker.pick(rng.random::<f64>())];
        let mut state = ChainState::new(p.point.clone(), p.vertex);
        let len = self.window_len();
        let mut letters = Vec::with_capacity(len);
        let mut origin_point = state.point.clone();
        for k in 0..len {
            letters.push(state.step(self.sys, &mut rng)?);
            if self.rebase && k == self.past_depth {
                origin_point = state.point.clone();
            }
        }
        let origin = if self.rebase {
            -(self.past_depth as i64)
        } else {
            1
        };
        Ok(SampledCode {
            window: CodeWindow {
                origin,
                letters,
                admissible: true,
            },
            origin_point,
        })
    }

    /// Samples `0..n` in parallel, in index order.
    pub fn sample_many(&self, n: usize) -> Result<Vec<SampledCode>> {
        (0..n as u64).into_par_iter().map(|i| self.sample(i)).collect()
    }
}

/// One window sampled under the generalized Markov measure.
pub fn sample_code(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    past_depth: usize,
    future_len: usize,
    seed: u64,
) -> Result<SampledCode> {
    CodeSampler::new(sys, mu, past_depth, future_len, seed).sample(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    /// `|m|`; the composition covers `|m| + 1` letters.
    pub depth: usize,
    pub mean_distance: Estimate,
    /// `â^{|m|+1} · Ĉ`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceProfile {
    pub rows: Vec<ProfileRow>,
    pub rate: f64,
    pub moment: Estimate,
    /// OLS slope of `ln(mean distance)` against depth over rows with a
    /// positive mean.
    pub log_slope: f64,
}

/// Mean of `d(w_{σ_0}∘…∘w_{σ_m} x, w_{σ_0}∘…∘w_{σ_m} x_{i(σ_m)})` over
/// sampled codes, where `x` is the chain's own point before `σ_m`.
pub fn coding_convergence_profile(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    depths: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<ConvergenceProfile> {
    if depths.is_empty() || n_samples < 2 {
        return Err(Error::InvalidArgument(
            "need at least one depth and two samples".into(),
        ));
    }
    let rate = sys
        .estimate_contraction_rate(BURN_IN_RATE_PAIRS, seed)?
        .empirical_rate;
    default_burn_in(rate)?;
    let moment = moment_check(sys, mu);
    let max_depth = *depths.iter().max().expect("non-empty");
    let sampler = CodeSampler::new(sys, mu, max_depth, 0, seed).labeled("profile");
    let per_sample = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let code = sampler.sample(i)?;
            let past = code.window.past();
            let end_vertex = sys.graph().edge(*past.last().expect("non-empty")).to;
            depths
                .iter()
                .map(|&m| {
                    let letters = &past[past.len() - (m + 1)..];
                    let (y, _) = compose_from_anchor(sys, letters, end_vertex, f64::INFINITY)?;
                    Ok(distance(&code.origin_point, &y))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ProfileRow> = depths
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let vals: Vec<f64> = per_sample.iter().map(|v| v[j]).collect();
            ProfileRow {
                depth: m,
                mean_distance: Estimate::from_samples(&vals),
                bound: rate.powi(m as i32 + 1) * moment.estimate,
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.mean_distance.estimate > 0.0)
        .map(|r| (r.depth as f64, r.mean_distance.estimate.ln()))
        .unzip();
    let log_slope = if xs.len() >= 2 { ols_slope(&xs, &ys) } else { f64::NAN };
    Ok(ConvergenceProfile {
        rows,
        rate,
        moment,
        log_slope,
    })
}

/// Writes `depth, mean_distance, stderr, bound` rows.
pub fn write_profile_csv<W: std::io::Write>(profile: &ConvergenceProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["depth", "mean_distance", "stderr", "bound"])?;
    for r in &profile.rows {
        w.write_record([
            r.depth.to_string(),
            format!("{:?}", r.mean_distance.estimate),
            format!("{:?}", r.mean_distance.stderr),
            format!("{:?}", r.bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}
