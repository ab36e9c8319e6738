//! Measurements behind the `report` table. Each function only measures;
//! thresholds live with the caller.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use cms_core::coding::{coding_map, CodeWindow, CodingOptions, CodingStatus};
use cms_core::stats::ks_one_sample;
use cms_core::thermo::{
    block_entropy, competitor_sweep, conditional_expectation_test, constant_probability_oracle,
    cylinder_frequencies, mean_energy, pushforward_check, self_consistency, two_state_stationary,
    vertex_chain_oracle,
};
use cms_core::{estimate_invariant_measure, MarkovSystem, ParticleEnsemble};
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::to_value;

#[derive(Debug, Clone, Serialize)]
pub struct Measured {
    pub values: BTreeMap<String, f64>,
    pub details: Value,
}

impl Measured {
    fn new(values: &[(&str, f64)], details: Value) -> Self {
        Self {
            values: values.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            details,
        }
    }

    /// The named value; panics on a name the measurement does not produce.
    pub fn get(&self, key: &str) -> f64 {
        *self
            .values
            .get(key)
            .unwrap_or_else(|| panic!("measurement has no value `{key}`"))
    }
}

fn bool_value(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn contraction_rate(sys: &MarkovSystem, pairs: usize, seed: u64) -> Result<Measured> {
    let r = sys.estimate_contraction_rate(pairs, seed)?;
    Ok(Measured::new(
        &[
            ("empirical_rate", r.empirical_rate),
            ("max_observed_lipschitz", r.max_observed_lipschitz),
            ("pairs_used", r.pairs_used as f64),
        ],
        to_value(&r),
    ))
}

/// KS distance of the first coordinate of the μ ensemble from the uniform
/// law on `[0, 1]`.
pub fn uniform_ks(sys: &MarkovSystem, particles: usize, seed: u64) -> Result<Measured> {
    let inv = estimate_invariant_measure(sys, particles, None, seed)?;
    let xs = inv.ensemble.coordinate(0);
    let ks = ks_one_sample(&xs, Some(&inv.ensemble.weights()), |x| x.clamp(0.0, 1.0));
    Ok(Measured::new(
        &[
            ("ks", ks),
            ("particles", particles as f64),
            ("burn_in", inv.burn_in as f64),
            ("w1_diagnostic", inv.w1_diagnostic),
        ],
        json!({ "converged": inv.converged, "rate": inv.rate }),
    ))
}

pub fn entropy_and_blocks(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    max_len: usize,
    codes: usize,
    seed: u64,
) -> Result<Measured> {
    let r = block_entropy(sys, mu, max_len, codes, seed)?;
    let last = r.rows.last().expect("max_len >= 1");
    Ok(Measured::new(
        &[
            ("entropy_formula", r.formula.estimate),
            ("entropy_formula_stderr", r.formula.stderr),
            ("block_entropy_per_symbol", last.per_symbol.estimate),
            ("block_entropy_stderr", last.per_symbol.stderr),
            ("miller_madow", last.miller_madow),
            ("k", last.k as f64),
            ("codes", codes as f64),
        ],
        to_value(&r),
    ))
}

pub fn entropy_energy_balance(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    samples: usize,
    past_depth: usize,
    seed: u64,
) -> Result<Measured> {
    let r = self_consistency(sys, mu, samples, past_depth, &CodingOptions::default(), seed)?;
    Ok(Measured::new(
        &[
            ("entropy", r.entropy.estimate),
            ("mean_energy", r.energy.mean.estimate),
            ("sum", r.sum),
            ("combined_stderr", r.combined_stderr),
            ("diverged_fraction", r.energy.diverged_fraction),
            ("samples", samples as f64),
        ],
        to_value(&r),
    ))
}

pub fn variational_sweep(
    sys: &MarkovSystem,
    competitors: usize,
    samples: usize,
    past_depth: usize,
    seed: u64,
) -> Result<Measured> {
    let r = competitor_sweep(sys, competitors, 1, samples, past_depth, &CodingOptions::default(), seed)?;
    let max_gap_z = r
        .gaps
        .iter()
        .map(|g| {
            let e = g.gap.estimate;
            if g.gap.stderr > 0.0 {
                e / g.gap.stderr
            } else if e > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let candidates = r.gaps.iter().filter(|g| g.neg_inf_candidate).count();
    Ok(Measured::new(
        &[
            ("competitors", r.gaps.len() as f64),
            ("max_gap", r.max_gap.estimate),
            ("max_gap_stderr", r.max_gap.stderr),
            ("max_gap_z", max_gap_z),
            ("min_gap", r.min_gap),
            ("neg_inf_candidates", candidates as f64),
        ],
        json!({
            "max_gap_index": r.max_gap_index,
            "max_gap_competitor": to_value(&r.gaps[r.max_gap_index]),
            "gaps": r.gaps.iter().map(|g| g.gap).collect::<Vec<_>>(),
        }),
    ))
}

pub fn pushforward(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    samples: usize,
    past_depth: usize,
    seed: u64,
) -> Result<Measured> {
    let r = pushforward_check(sys, mu, samples, past_depth, &CodingOptions::default(), seed)?;
    Ok(Measured::new(
        &[
            ("sliced_ks", r.sliced_ks),
            ("not_converged_fraction", r.not_converged_fraction),
            ("diverged_fraction", r.diverged_fraction),
            ("samples", samples as f64),
        ],
        to_value(&r),
    ))
}

pub fn conditional_expectation(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    samples: usize,
    past_len: usize,
    seed: u64,
) -> Result<Measured> {
    let r = conditional_expectation_test(sys, mu, samples, past_len, seed)?;
    Ok(Measured::new(
        &[
            ("max_discrepancy", r.max_discrepancy),
            ("worst_discrepancy", r.worst_discrepancy),
            ("band", r.band),
            ("max_excess_z", r.max_excess_z),
            ("z_threshold", r.z_threshold),
            ("max_z", r.max_z),
            ("sigma_max", r.sigma_max),
            ("modulus_term", r.modulus_term),
            ("bins_tested", r.bins_tested as f64),
            ("cells_tested", r.cells_tested as f64),
            ("within_band", bool_value(r.within_band)),
            ("samples", samples as f64),
        ],
        to_value(&r),
    ))
}

/// The constant past `letter, letter, …` of length `steps`, and the
/// diverged fraction of codes sampled at `past_depth`.
pub fn divergence(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    letter: usize,
    steps: usize,
    samples: usize,
    past_depth: usize,
    seed: u64,
) -> Result<Measured> {
    let window = CodeWindow::ending_at(sys.graph(), 0, vec![letter; steps]);
    if !window.is_admissible() {
        bail!("the constant past of edge `{}` is not admissible", sys.edge_id(letter));
    }
    let fixed = coding_map(sys, &window, &CodingOptions::default())?;
    let sampled = mean_energy(sys, mu, samples, past_depth, &CodingOptions::default(), seed)?;
    Ok(Measured::new(
        &[
            ("constant_past_diverged", bool_value(fixed.status == CodingStatus::Diverged)),
            ("constant_past_diverged_at", fixed.diverged_at.map_or(f64::NAN, |k| k as f64)),
            ("sampled_diverged_fraction", sampled.diverged_fraction),
            ("samples", samples as f64),
        ],
        json!({
            "constant_past": { "edge": sys.edge_id(letter), "steps": steps, "status": fixed.status },
            "sampled": to_value(&sampled),
        }),
    ))
}

/// Sampled cylinder frequencies of all admissible words of length `len`
/// against the transfer-operator oracle. For two vertices with one edge per
/// ordered pair, also the oracle's stationary law against the closed form.
pub fn oracle_agreement(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    len: usize,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<Measured> {
    let oracle = constant_probability_oracle(sys, tol)?;
    let words: Vec<Vec<usize>> = sys
        .graph()
        .admissible_words(len, 1_000_000)?
        .into_iter()
        .map(|w| w.0)
        .collect();
    let freqs = cylinder_frequencies(sys, mu, &words, samples, seed)?;
    let mut max_z = 0.0f64;
    let mut rows = Vec::with_capacity(words.len());
    for (w, f) in words.iter().zip(&freqs) {
        let exact = oracle.cylinder(w);
        let z = if f.stderr > 0.0 {
            (f.estimate - exact).abs() / f.stderr
        } else if f.estimate == exact {
            0.0
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z);
        rows.push(json!({
            "word": sys.graph().word_ids(w),
            "oracle": exact,
            "estimate": f.estimate,
            "stderr": f.stderr,
            "z": z,
        }));
    }
    let mut closed_form_diff = f64::NAN;
    let mut stationary = Value::Null;
    if sys.graph().vertex_count() == 2 {
        if let Ok((_, vm)) = vertex_chain_oracle(sys, tol) {
            let g = sys.graph();
            let switch = |a: usize, b: usize| -> Result<f64> {
                let e = g.outgoing(a).iter().copied().find(|&e| g.edge(e).to == b).expect("complete graph");
                Ok(sys.prob(e, sys.anchor(a))?)
            };
            let closed = two_state_stationary(switch(0, 1)?, switch(1, 0)?);
            closed_form_diff = (0..2).map(|s| (vm.probs[s] - closed[s]).abs()).fold(0.0, f64::max);
            stationary = json!({ "oracle": vm.probs, "closed_form": closed, "iterations": vm.iterations });
        }
    }
    Ok(Measured::new(
        &[
            ("words", words.len() as f64),
            ("max_z", max_z),
            ("closed_form_max_abs_diff", closed_form_diff),
            ("oracle_residual", oracle.residual),
            ("samples", samples as f64),
        ],
        json!({ "cylinders": rows, "stationary": stationary }),
    ))
}
