use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::coding::{coding_map, CodeSampler, CodingOptions, CodingStatus};
use crate::dynamics::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::system::MarkovSystem;

/// Bins with fewer samples are not tested.
pub const MIN_BIN_SIZE: usize = 200;
/// Past letters used to evaluate `F` when `past_len` is shorter.
const CODING_DEPTH: usize = 12;
const CHUNK: usize = 1 << 15;

/// Two-sided tail probability of a single 3σ normal test.
pub const THREE_SIGMA_LEVEL: f64 = 0.002_699_796_063_260_2;

#[derive(Debug, Clone, Serialize)]
pub struct CondExpReport {
    pub past_len: usize,
    pub n_samples: usize,
    pub bins_observed: usize,
    pub bins_tested: usize,
    pub cells_tested: usize,
    /// Largest `|freq(σ_1 = e) − mean p_e(F)|` over tested cells.
    pub max_discrepancy: f64,
    /// The cell with the largest standardized excess over the modulus term.
    pub worst_bin: Vec<String>,
    pub worst_edge: String,
    pub worst_discrepancy: f64,
    /// `z_threshold · σ + modulus_term` at the worst cell.
    pub band: f64,
    /// Largest binomial standard error `sqrt(p̄(1 − p̄)/n_b)` over cells.
    pub sigma_max: f64,
    /// Largest spread of `p_e ∘ F` within a bin, an observed modulus of
    /// continuity at the cylinder diameter.
    pub modulus_term: f64,
    /// Critical value giving the whole family of cells the coverage of one
    /// 3σ test (Šidák).
    pub z_threshold: f64,
    /// Largest `max(|d| − modulus_term, 0) / σ` over cells.
    pub max_excess_z: f64,
    /// Largest raw `|d| / σ`, and how many cells exceed 3 in that scale.
    pub max_z: f64,
    pub cells_beyond_three_sigma: usize,
    pub diverged: usize,
    pub within_band: bool,
}

/// Šidák critical value for `cells` simultaneous two-sided normal tests
/// with family-wise level [`THREE_SIGMA_LEVEL`].
pub fn familywise_z(cells: usize) -> f64 {
    let m = cells.max(1) as f64;
    // 1 − (1 − α)^(1/m), computed without cancellation
    let per_cell = -(-THREE_SIGMA_LEVEL).ln_1p() / m;
    let per_cell = -(-per_cell).exp_m1();
    let normal = statrs::distribution::Normal::standard();
    -statrs::distribution::ContinuousCDF::inverse_cdf(&normal, per_cell / 2.0)
}

#[derive(Default)]
struct BinAcc {
    n: usize,
    /// Per outgoing edge of the bin's end vertex: (hits, Σ p_e(F), min, max).
    cells: Vec<(usize, f64, f64, f64)>,
}

/// Bins codes by `σ_{-past_len+1}, …, σ_0` and compares, within each bin,
/// the frequency of `σ_1 = e` with the average of `p_e ∘ F`. A cell passes
/// when its discrepancy is at most `z·σ + modulus_term`, with `z` from
/// [`familywise_z`] over all tested cells.
pub fn conditional_expectation_test(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    n_samples: usize,
    past_len: usize,
    seed: u64,
) -> Result<CondExpReport> {
    if past_len == 0 || n_samples == 0 {
        return Err(Error::InvalidArgument(
            "past_len and n_samples must be at least 1".into(),
        ));
    }
    let depth = past_len.max(CODING_DEPTH);
    let opts = CodingOptions::new(crate::coding::DEFAULT_TOL, depth);
    let sampler = CodeSampler::new(sys, mu, depth - 1, 1, seed).labeled("condexp");
    let graph = sys.graph();
    let mut bins: BTreeMap<Vec<usize>, BinAcc> = BTreeMap::new();
    let mut diverged = 0usize;
    let mut start = 0usize;
    while start < n_samples {
        let end = (start + CHUNK).min(n_samples);
        let chunk = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| {
                let code = sampler.sample(i)?;
                let w = &code.window;
                let f = coding_map(sys, w, &opts)?;
                if f.status == CodingStatus::Diverged {
                    return Ok(None);
                }
                let past = w.past();
                let key = past[past.len() - past_len..].to_vec();
                let v = graph.edge(*past.last().expect("non-empty")).to;
                let probs = graph
                    .outgoing(v)
                    .iter()
                    .map(|&e| sys.prob(e, &f.value))
                    .collect::<Result<Vec<f64>>>()?;
                let next = w.get(1).expect("window covers index 1");
                let slot = graph.outgoing(v).iter().position(|&e| e == next).expect("admissible");
                Ok(Some((key, slot, probs)))
            })
            .collect::<Result<Vec<_>>>()?;
        for item in chunk {
            let Some((key, slot, probs)) = item else {
                diverged += 1;
                continue;
            };
            let acc = bins.entry(key).or_default();
            if acc.cells.is_empty() {
                acc.cells = vec![(0, 0.0, f64::INFINITY, f64::NEG_INFINITY); probs.len()];
            }
            acc.n += 1;
            for (j, &p) in probs.iter().enumerate() {
                let c = &mut acc.cells[j];
                c.1 += p;
                c.2 = c.2.min(p);
                c.3 = c.3.max(p);
            }
            acc.cells[slot].0 += 1;
        }
        start = end;
    }
    let mut cells = Vec::new();
    let mut modulus_term = 0.0f64;
    let mut bins_tested = 0;
    for (key, acc) in &bins {
        if acc.n < MIN_BIN_SIZE {
            continue;
        }
        bins_tested += 1;
        let n = acc.n as f64;
        for (j, &(hits, sum_p, lo, hi)) in acc.cells.iter().enumerate() {
            let pbar = sum_p / n;
            let disc = (hits as f64 / n - pbar).abs();
            let sigma = (pbar * (1.0 - pbar) / n).sqrt();
            modulus_term = modulus_term.max(hi - lo);
            cells.push((key, j, disc, sigma));
        }
    }
    let z_threshold = familywise_z(cells.len());
    let ratio = |num: f64, sigma: f64| {
        if sigma > 0.0 {
            num / sigma
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let mut report = CondExpReport {
        past_len,
        n_samples,
        bins_observed: bins.len(),
        bins_tested,
        cells_tested: cells.len(),
        max_discrepancy: 0.0,
        worst_bin: Vec::new(),
        worst_edge: String::new(),
        worst_discrepancy: 0.0,
        band: 0.0,
        sigma_max: 0.0,
        modulus_term,
        z_threshold,
        max_excess_z: 0.0,
        max_z: 0.0,
        cells_beyond_three_sigma: 0,
        diverged,
        within_band: false,
    };
    for &(key, j, disc, sigma) in &cells {
        report.max_discrepancy = report.max_discrepancy.max(disc);
        report.sigma_max = report.sigma_max.max(sigma);
        let z = ratio(disc, sigma);
        report.max_z = report.max_z.max(z);
        if z > 3.0 {
            report.cells_beyond_three_sigma += 1;
        }
        let excess = ratio((disc - modulus_term).max(0.0), sigma);
        if excess > report.max_excess_z || report.worst_bin.is_empty() {
            let v = graph.edge(*key.last().expect("past_len >= 1")).to;
            report.max_excess_z = excess;
            report.worst_bin = graph.word_ids(key);
            report.worst_edge = sys.edge_id(graph.outgoing(v)[j]).to_string();
            report.worst_discrepancy = disc;
            report.band = z_threshold * sigma + modulus_term;
        }
    }
    report.within_band = report.cells_tested > 0 && report.max_excess_z <= z_threshold;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_system;
    use crate::dynamics::estimate_invariant_measure;

    #[test]
    fn familywise_threshold_reduces_to_three_sigma() {
        assert!((familywise_z(1) - 3.0).abs() < 1e-9);
        let z = familywise_z(10_000);
        // Bonferroni is slightly more conservative than Šidák
        let normal = statrs::distribution::Normal::standard();
        let bonf = -statrs::distribution::ContinuousCDF::inverse_cdf(&normal, THREE_SIGMA_LEVEL / 20_000.0);
        assert!(z > 4.9 && z < bonf && bonf - z < 1e-3, "{z} {bonf}");
    }

    #[test]
    fn constant_probabilities_match_in_every_bin() {
        let sys = preset_system("gmeasure-2symbol").unwrap();
        let mu = estimate_invariant_measure(&sys, 20_000, None, 0).unwrap().ensemble;
        let r = conditional_expectation_test(&sys, &mu, 100_000, 3, 1).unwrap();
        assert_eq!(r.modulus_term, 0.0);
        assert_eq!(r.bins_tested, 16);
        assert!(r.within_band, "{r:?}");
    }

    #[test]
    fn decimal_weighted_within_band() {
        let sys = preset_system("decimal-weighted").unwrap();
        let mu = estimate_invariant_measure(&sys, 20_000, None, 0).unwrap().ensemble;
        let r = conditional_expectation_test(&sys, &mu, 200_000, 2, 2).unwrap();
        assert!(r.bins_tested > 10);
        assert!(r.within_band, "{r:?}");
        assert!(r.modulus_term > 0.0 && r.modulus_term <= 0.28 * 0.01 + 1e-12);
    }

    #[test]
    fn modulus_term_shrinks_with_longer_pasts() {
        let sys = preset_system("decimal-weighted").unwrap();
        let mu = estimate_invariant_measure(&sys, 20_000, None, 0).unwrap().ensemble;
        let terms: Vec<f64> = (1..=3)
            .map(|k| conditional_expectation_test(&sys, &mu, 100_000, k, 3).unwrap().modulus_term)
            .collect();
        assert!(terms[0] > terms[1] && terms[1] > terms[2], "{terms:?}");
    }
}
