//! The generalized Markov measure `M` on cylinders, the energy function
//! `u = log p_{σ_1} ∘ F`, and the entropy and equilibrium identities tied to
//! them.

mod blocks;
mod condexp;
mod oracle;
mod pushforward;
mod variational;

pub use blocks::{block_entropy, write_blocks_csv, BlockEntropyReport, BlockRow, MAX_DISTINCT_WORDS};
pub use condexp::{conditional_expectation_test, familywise_z, CondExpReport, MIN_BIN_SIZE, THREE_SIGMA_LEVEL};
pub use oracle::{
    constant_probability_oracle, two_state_stationary, transfer_operator_fixed_point, vertex_chain_oracle,
    vertex_path, WordMeasure, ORACLE_MAX_ITERATIONS,
};
pub use pushforward::{pushforward_check, PushforwardReport};
pub use variational::{competitor_sweep, variational_gap, CompetitorMeasure, GapReport, SweepReport};

use rayon::prelude::*;
use serde::Serialize;

use crate::coding::{coding_map, CodeSampler, CodeWindow, CodingOptions, CodingStatus};
use crate::dynamics::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::stats::Estimate;
use crate::system::MarkovSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CylinderMode {
    /// Particle average with a Monte Carlo standard error.
    Quadrature,
    /// The same sum, with the ensemble taken as the exact measure (for
    /// ensembles built by split pushes).
    ExactSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderMeasureResult {
    pub word: Vec<String>,
    pub estimate: f64,
    pub stderr: f64,
    pub method: CylinderMode,
}

/// `p_{e_1}(x) p_{e_2}(w_{e_1} x) ⋯ p_{e_k}(w_{e_{k-1}} ∘ ⋯ ∘ w_{e_1} x)` for
/// `x ∈ K_{i(e_1)}`.
pub fn path_weight(sys: &MarkovSystem, x: &[f64], word: &[usize]) -> Result<f64> {
    let mut y = x.to_vec();
    let mut w = 1.0;
    for (j, &e) in word.iter().enumerate() {
        w *= sys.prob(e, &y)?;
        if w == 0.0 {
            break;
        }
        if j + 1 < word.len() {
            y = sys.apply_map(e, &y)?;
        }
    }
    Ok(w)
}

/// `M(_m[e_1, …, e_k]) = ∫ p_{e_1} ⋯ p_{e_k}(w_{e_{k-1}} ∘ ⋯ ∘ w_{e_1} x) dμ(x)`
/// over the ensemble.
pub fn cylinder_measure(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    word: &[usize],
    mode: CylinderMode,
) -> Result<CylinderMeasureResult> {
    if word.is_empty() {
        return Err(Error::InvalidArgument("cylinder word is empty".into()));
    }
    let ids = sys.graph().word_ids(word);
    if !sys.graph().is_admissible(word) {
        return Ok(CylinderMeasureResult {
            word: ids,
            estimate: 0.0,
            stderr: 0.0,
            method: mode,
        });
    }
    let start = sys.graph().edge(word[0]).from;
    let values = mu
        .particles()
        .par_iter()
        .map(|p| {
            if p.vertex == start {
                path_weight(sys, &p.point, word)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let est = Estimate::from_weighted(&values, &mu.weights());
    Ok(CylinderMeasureResult {
        word: ids,
        estimate: est.estimate,
        stderr: match mode {
            CylinderMode::Quadrature => est.stderr,
            CylinderMode::ExactSplit => 0.0,
        },
        method: mode,
    })
}

/// Frequencies of each word at indices `1..=len` among `n_samples` codes
/// drawn under `M`, with binomial standard errors.
pub fn cylinder_frequencies(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    words: &[Vec<usize>],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    let len = words.iter().map(Vec::len).max().unwrap_or(0);
    if len == 0 || n_samples == 0 {
        return Err(Error::InvalidArgument("need non-empty words and samples".into()));
    }
    let sampler = CodeSampler::new(sys, mu, 0, len - 1, seed)
        .rebased(false)
        .labeled("cylinder-frequencies");
    let hits = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let code = sampler.sample(i)?;
            let letters = code.window.letters();
            Ok(words
                .iter()
                .map(|w| letters[..w.len()] == w[..])
                .collect::<Vec<bool>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..words.len())
        .map(|j| {
            let count = hits.iter().filter(|h| h[j]).count();
            let f = count as f64 / n_samples as f64;
            Estimate {
                estimate: f,
                stderr: (f * (1.0 - f) / n_samples as f64).sqrt(),
                n_samples,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyEvaluation {
    #[serde(skip)]
    pub window: CodeWindow,
    /// `log p_{σ_1}(F σ)`, `-∞` on divergence.
    pub u: f64,
    pub status: CodingStatus,
    pub depth: usize,
    pub diameter: f64,
    /// `|u(y_m) − u(y_{m/2})|`, the spread of `u` across the two depths
    /// compared by the coding map.
    pub u_error: f64,
}

/// `u(σ) = log p_{σ_1}(F(σ))` from the window's past and `σ_1`.
pub fn energy(sys: &MarkovSystem, window: &CodeWindow, opts: &CodingOptions) -> Result<EnergyEvaluation> {
    let next = window
        .get(1)
        .ok_or_else(|| Error::InvalidArgument("energy needs the letter at index 1".into()))?;
    let coded = coding_map(sys, window, opts)?;
    if coded.status == CodingStatus::Diverged {
        return Ok(EnergyEvaluation {
            window: window.clone(),
            u: f64::NEG_INFINITY,
            status: coded.status,
            depth: coded.depth,
            diameter: coded.diameter,
            u_error: f64::INFINITY,
        });
    }
    let u = sys.prob(next, &coded.value)?.ln();
    let u_half = sys.prob(next, &coded.half_value)?.ln();
    let u_error = if u == u_half { 0.0 } else { (u - u_half).abs() };
    Ok(EnergyEvaluation {
        window: window.clone(),
        u,
        status: coded.status,
        depth: coded.depth,
        diameter: coded.diameter,
        u_error,
    })
}

/// `−Σ_e p_e log p_e` at `x ∈ K_v`, with `0 log 0 = 0`.
pub fn local_entropy(sys: &MarkovSystem, v: usize, x: &[f64]) -> Result<f64> {
    let mut h = 0.0;
    for &e in sys.graph().outgoing(v) {
        let p = sys.prob(e, x)?;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// `h_M = −Σ_e ∫ p_e log p_e dμ` over the ensemble.
pub fn entropy_formula(sys: &MarkovSystem, mu: &ParticleEnsemble) -> Result<Estimate> {
    let values = mu
        .particles()
        .par_iter()
        .map(|p| local_entropy(sys, p.vertex, &p.point))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_weighted(&values, &mu.weights()))
}

/// Average of `u` over codes drawn under `M`, excluding diverged ones.
#[derive(Debug, Clone, Serialize)]
pub struct EnergySummary {
    pub mean: Estimate,
    pub diverged_fraction: f64,
    pub not_converged_fraction: f64,
    pub max_u_error: f64,
}

pub(crate) fn summarize_energies(evals: &[EnergyEvaluation]) -> EnergySummary {
    let n = evals.len().max(1) as f64;
    let finite: Vec<f64> = evals
        .iter()
        .filter(|e| e.status != CodingStatus::Diverged)
        .map(|e| e.u)
        .collect();
    let diverged = evals.len() - finite.len();
    let not_converged = evals
        .iter()
        .filter(|e| e.status == CodingStatus::NotConverged)
        .count();
    EnergySummary {
        mean: Estimate::from_samples(&finite),
        diverged_fraction: diverged as f64 / n,
        not_converged_fraction: not_converged as f64 / n,
        max_u_error: evals
            .iter()
            .filter(|e| e.status != CodingStatus::Diverged)
            .map(|e| e.u_error)
            .fold(0.0, f64::max),
    }
}

/// `Ê_M[u]` from `n_samples` codes with `past_depth` letters before index 0.
pub fn mean_energy(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    n_samples: usize,
    past_depth: usize,
    opts: &CodingOptions,
    seed: u64,
) -> Result<EnergySummary> {
    let sampler = CodeSampler::new(sys, mu, past_depth, 1, seed).labeled("energy");
    let evals = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| energy(sys, &sampler.sample(i)?.window, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_energies(&evals))
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfConsistency {
    pub entropy: Estimate,
    pub energy: EnergySummary,
    /// `entropy_formula + Ê_M[u]`, zero in theory.
    pub sum: f64,
    pub combined_stderr: f64,
}

impl SelfConsistency {
    pub fn within(&self, sigmas: f64) -> bool {
        self.sum.abs() <= sigmas * self.combined_stderr
    }
}

/// Compares the entropy formula with the sampled mean energy.
pub fn self_consistency(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    n_samples: usize,
    past_depth: usize,
    opts: &CodingOptions,
    seed: u64,
) -> Result<SelfConsistency> {
    let entropy = entropy_formula(sys, mu)?;
    let energy = mean_energy(sys, mu, n_samples, past_depth, opts, seed)?;
    Ok(SelfConsistency {
        sum: entropy.estimate + energy.mean.estimate,
        combined_stderr: entropy.stderr.hypot(energy.mean.stderr),
        entropy,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_system;
    use crate::dynamics::{estimate_invariant_measure, push_ensemble, PushMode};
    use crate::graph::DirectedMultigraph;
    use crate::expr::parse;
    use crate::rng::StreamKey;
    use crate::system::{EdgeFunctions, Region};
    use rand::Rng;

    fn constant_system(probs: &[&str]) -> MarkovSystem {
        let edges: Vec<(usize, usize)> = probs.iter().map(|_| (0, 0)).collect();
        let g = DirectedMultigraph::from_indices(1, &edges).unwrap();
        let n = probs.len() as f64;
        MarkovSystem::new(
            g,
            1,
            vec![Region {
                predicate: parse("x1 >= 0 and x1 <= 1").unwrap(),
                bbox: vec![(0.0, 1.0)],
                anchor: vec![0.0],
            }],
            probs
                .iter()
                .enumerate()
                .map(|(e, p)| EdgeFunctions {
                    map: vec![parse(&format!("x1/{n} + {e}/{n}")).unwrap()],
                    prob: parse(p).unwrap(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn decimal_cylinder_is_a_thousandth() {
        let sys = preset_system("decimal-uniform").unwrap();
        let mu = estimate_invariant_measure(&sys, 1000, None, 0).unwrap().ensemble;
        let r = cylinder_measure(&sys, &mu, &[3, 1, 4], CylinderMode::Quadrature).unwrap();
        assert!((r.estimate - 0.001).abs() < 1e-15);
        assert_eq!(r.word, vec!["3", "1", "4"]);
    }

    #[test]
    fn inadmissible_cylinder_is_zero() {
        let g = DirectedMultigraph::new(&["1", "2"], &[("a", "1", "2"), ("b", "2", "1")]).unwrap();
        let region = |lo: f64| Region {
            predicate: parse(&format!("x1 >= {lo} and x1 <= {lo} + 1")).unwrap(),
            bbox: vec![(lo, lo + 1.0)],
            anchor: vec![lo],
        };
        let sys = MarkovSystem::new(
            g,
            1,
            vec![region(0.0), region(2.0)],
            vec![
                EdgeFunctions {
                    map: vec![parse("x1/2 + 2").unwrap()],
                    prob: parse("1").unwrap(),
                },
                EdgeFunctions {
                    map: vec![parse("(x1 - 2)/2").unwrap()],
                    prob: parse("1").unwrap(),
                },
            ],
        )
        .unwrap();
        let mu = ParticleEnsemble::at_anchors(&sys, 10).unwrap();
        let r = cylinder_measure(&sys, &mu, &[0, 0], CylinderMode::Quadrature).unwrap();
        assert_eq!((r.estimate, r.stderr), (0.0, 0.0));
        let ok = cylinder_measure(&sys, &mu, &[0, 1], CylinderMode::ExactSplit).unwrap();
        assert!((ok.estimate - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cylinder_level_sums_to_one() {
        let sys = preset_system("decimal-weighted").unwrap();
        let mu = estimate_invariant_measure(&sys, 2000, None, 0).unwrap().ensemble;
        for k in 1..=3 {
            let words = sys.graph().admissible_words(k, 10_000).unwrap();
            let results: Vec<_> = words
                .iter()
                .map(|w| cylinder_measure(&sys, &mu, w.letters(), CylinderMode::Quadrature).unwrap())
                .collect();
            let total: f64 = crate::stats::neumaier_sum(results.iter().map(|r| r.estimate));
            assert!((total - 1.0).abs() < 1e-12 * k as f64, "{k}: {total}");
        }
    }

    #[test]
    fn shift_consistency_on_random_words() {
        let sys = preset_system("decimal-weighted").unwrap();
        let mu = estimate_invariant_measure(&sys, 100_000, None, 0).unwrap().ensemble;
        let mut rng = StreamKey::new(0).derive("words").stream(0);
        let measure = |w: &[usize]| cylinder_measure(&sys, &mu, w, CylinderMode::Quadrature).unwrap();
        for _ in 0..20 {
            let len = rng.random_range(1..=3);
            let w: Vec<usize> = (0..len).map(|_| rng.random_range(0..10)).collect();
            let base = measure(&w);
            let (mut left, mut left_var) = (0.0, 0.0);
            let mut right = 0.0;
            for e in 0..10 {
                let mut lw = vec![e];
                lw.extend(&w);
                let l = measure(&lw);
                left += l.estimate;
                left_var += l.stderr * l.stderr;
                let mut rw = w.clone();
                rw.push(e);
                let r = measure(&rw);
                right += r.estimate;
            }
            // appending on the right integrates to the same word exactly
            assert!((right - base.estimate).abs() < 1e-12);
            let band = 3.0 * (left_var.sqrt() + base.stderr);
            assert!((left - base.estimate).abs() <= band, "{w:?}");
        }
    }

    #[test]
    fn energy_examples() {
        let opts = CodingOptions::default();
        let dec = preset_system("decimal-uniform").unwrap();
        let w = CodeWindow::new(dec.graph(), -3, vec![3, 1, 4, 1, 5]);
        let e = energy(&dec, &w, &opts).unwrap();
        assert!((e.u - 0.1f64.ln()).abs() < 1e-15);
        let ex3 = preset_system("example3").unwrap();
        let zeros = CodeWindow::new(ex3.graph(), -63, vec![0; 65]);
        let e = energy(&ex3, &zeros, &opts).unwrap();
        assert_eq!(e.status, CodingStatus::Converged);
        assert!((e.u - (17.0f64 / 24.0).ln()).abs() < 1e-12);
        let mut ones = vec![1; 200];
        ones.push(0);
        let e = energy(&ex3, &CodeWindow::new(ex3.graph(), -199, ones), &opts).unwrap();
        assert_eq!(e.status, CodingStatus::Diverged);
        assert_eq!(e.u, f64::NEG_INFINITY);
        let short = CodeWindow::new(dec.graph(), -1, vec![1, 2]);
        assert!(energy(&dec, &short, &opts).is_err());
    }

    #[test]
    fn energies_are_nonpositive() {
        let sys = preset_system("decimal-weighted").unwrap();
        let mu = estimate_invariant_measure(&sys, 5000, None, 0).unwrap().ensemble;
        let sampler = CodeSampler::new(&sys, &mu, 12, 1, 1);
        for code in sampler.sample_many(2000).unwrap() {
            let e = energy(&sys, &code.window, &CodingOptions::default()).unwrap();
            assert!(e.u <= 0.0);
        }
    }

    #[test]
    fn entropy_formula_examples() {
        let dec = preset_system("decimal-uniform").unwrap();
        let mu = ParticleEnsemble::at_anchors(&dec, 10).unwrap();
        let h = entropy_formula(&dec, &mu).unwrap();
        assert!((h.estimate - 10f64.ln()).abs() < 1e-14);
        let single = constant_system(&["1"]);
        let mu = ParticleEnsemble::at_anchors(&single, 3).unwrap();
        assert_eq!(entropy_formula(&single, &mu).unwrap().estimate, 0.0);
        let binary = constant_system(&["0.3", "0.7"]);
        let mu = ParticleEnsemble::at_anchors(&binary, 3).unwrap();
        let closed = -(0.3f64 * 0.3f64.ln() + 0.7 * 0.7f64.ln());
        assert!((entropy_formula(&binary, &mu).unwrap().estimate - closed).abs() < 1e-15);
    }

    #[test]
    fn entropy_within_bounds() {
        for name in crate::config::PRESET_NAMES {
            let sys = preset_system(name).unwrap();
            let mu = estimate_invariant_measure(&sys, 5000, None, 0).unwrap().ensemble;
            let h = entropy_formula(&sys, &mu).unwrap().estimate;
            assert!(h >= 0.0 && h <= (sys.graph().edge_count() as f64).ln() + 1e-12, "{name}");
        }
    }

    #[test]
    fn split_ensemble_cylinders_are_exact() {
        let sys = constant_system(&["0.25", "0.75"]);
        let delta = ParticleEnsemble::point_mass(&sys, &[0.5]).unwrap();
        let mu = push_ensemble(&sys, &delta, PushMode::Split { cap: 100 }, 0).unwrap();
        let r = cylinder_measure(&sys, &mu, &[1, 0], CylinderMode::ExactSplit).unwrap();
        assert_eq!(r.stderr, 0.0);
        assert!((r.estimate - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn decimal_weighted_self_consistency() {
        let sys = preset_system("decimal-weighted").unwrap();
        let mu = estimate_invariant_measure(&sys, 50_000, None, 0).unwrap().ensemble;
        let sc = self_consistency(&sys, &mu, 50_000, 12, &CodingOptions::default(), 1).unwrap();
        assert!(sc.within(3.0), "{sc:?}");
        assert_eq!(sc.energy.diverged_fraction, 0.0);
    }
}
