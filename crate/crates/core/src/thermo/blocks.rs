use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::coding::CodeSampler;
use crate::dynamics::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::stats::{neumaier_sum, Estimate};
use crate::system::MarkovSystem;

use super::entropy_formula;

/// Largest number of distinct observed words per block length.
pub const MAX_DISTINCT_WORDS: usize = 1_000_000;
/// Dense count tables are used up to this many possible words.
const DENSE_LIMIT: u128 = 1 << 24;
const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Serialize)]
pub struct BlockRow {
    pub k: usize,
    /// Plug-in `H_k` over all overlapping `k`-blocks.
    pub h_k: f64,
    /// `H_k / k` with a delta-method standard error.
    pub per_symbol: Estimate,
    /// Miller–Madow corrected `H_k / k`.
    pub miller_madow: f64,
    pub distinct_words: usize,
    pub blocks: usize,
    /// More distinct words than `n_samples / 100`.
    pub undersampled: bool,
    /// `H_k / k − entropy_formula`.
    pub gap_to_formula: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockEntropyReport {
    pub rows: Vec<BlockRow>,
    pub formula: Estimate,
    pub n_samples: usize,
    pub code_len: usize,
    pub warnings: Vec<String>,
}

enum Counter {
    Dense(Vec<u32>),
    Sparse(HashMap<u128, u64>),
}

impl Counter {
    fn new(possible: u128) -> Self {
        if possible <= DENSE_LIMIT {
            Counter::Dense(vec![0; possible as usize])
        } else {
            Counter::Sparse(HashMap::new())
        }
    }

    fn add(&mut self, key: u128) {
        match self {
            Counter::Dense(v) => v[key as usize] += 1,
            Counter::Sparse(m) => *m.entry(key).or_insert(0) += 1,
        }
    }

    fn distinct(&self) -> usize {
        match self {
            Counter::Dense(v) => v.iter().filter(|&&c| c > 0).count(),
            Counter::Sparse(m) => m.len(),
        }
    }

    /// Nonzero counts in ascending order.
    fn sorted_counts(&self) -> Vec<u64> {
        let mut c: Vec<u64> = match self {
            Counter::Dense(v) => v.iter().filter(|&&c| c > 0).map(|&c| c as u64).collect(),
            Counter::Sparse(m) => m.values().copied().collect(),
        };
        c.sort_unstable();
        c
    }
}

/// Empirical block entropies `H_k / k`, `k = 1..=max_len`, from overlapping
/// blocks in `n_samples` codes of length `2·max_len` drawn under `M`.
pub fn block_entropy(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    max_len: usize,
    n_samples: usize,
    seed: u64,
) -> Result<BlockEntropyReport> {
    if max_len == 0 || n_samples == 0 {
        return Err(Error::InvalidArgument(
            "max_len and n_samples must be at least 1".into(),
        ));
    }
    let alphabet = sys.graph().edge_count() as u128;
    let possible: Vec<u128> = (1..=max_len as u32)
        .map(|k| alphabet.checked_pow(k).filter(|&p| p < u128::MAX / alphabet))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::InvalidArgument("block length too large for the alphabet".into()))?;
    let code_len = 2 * max_len;
    let sampler = CodeSampler::new(sys, mu, 0, code_len - 1, seed)
        .rebased(false)
        .labeled("blocks");
    let mut counters: Vec<Counter> = possible.iter().map(|&p| Counter::new(p)).collect();
    let mut start = 0usize;
    while start < n_samples {
        let end = (start + CHUNK).min(n_samples);
        let chunk = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| sampler.sample(i).map(|c| c.window.letters().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        for letters in &chunk {
            for (ki, counter) in counters.iter_mut().enumerate() {
                let k = ki + 1;
                for block in letters.windows(k) {
                    let key = block.iter().fold(0u128, |acc, &e| acc * alphabet + e as u128);
                    counter.add(key);
                }
            }
        }
        for (ki, counter) in counters.iter().enumerate() {
            if counter.distinct() > MAX_DISTINCT_WORDS && matches!(counter, Counter::Sparse(_)) {
                return Err(Error::InvalidArgument(format!(
                    "more than {MAX_DISTINCT_WORDS} distinct words of length {}",
                    ki + 1
                )));
            }
        }
        start = end;
    }
    let formula = entropy_formula(sys, mu)?;
    let mut warnings = Vec::new();
    let rows = counters
        .iter()
        .enumerate()
        .map(|(ki, counter)| {
            let k = ki + 1;
            let counts = counter.sorted_counts();
            let blocks = n_samples * (code_len - k + 1);
            let n = blocks as f64;
            let h = -neumaier_sum(counts.iter().map(|&c| {
                let f = c as f64 / n;
                f * f.ln()
            }));
            let second = neumaier_sum(counts.iter().map(|&c| {
                let f = c as f64 / n;
                f * f.ln() * f.ln()
            }));
            // blocks within one code are dependent; count codes, not blocks
            let stderr = ((second - h * h).max(0.0) / n_samples as f64).sqrt();
            let distinct = counts.len();
            let undersampled = distinct > n_samples / 100;
            if undersampled {
                warnings.push(format!(
                    "k = {k}: {distinct} distinct words exceed n_samples/100; H_k is biased low"
                ));
            }
            BlockRow {
                k,
                h_k: h,
                per_symbol: Estimate {
                    estimate: h / k as f64,
                    stderr: stderr / k as f64,
                    n_samples,
                },
                miller_madow: (h + (distinct as f64 - 1.0) / (2.0 * n)) / k as f64,
                distinct_words: distinct,
                blocks,
                undersampled,
                gap_to_formula: h / k as f64 - formula.estimate,
            }
        })
        .collect();
    Ok(BlockEntropyReport {
        rows,
        formula,
        n_samples,
        code_len,
        warnings,
    })
}

/// Writes `k, h_k, per_symbol, stderr, miller_madow, distinct_words` rows.
pub fn write_blocks_csv<W: std::io::Write>(report: &BlockEntropyReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "h_k", "per_symbol", "stderr", "miller_madow", "distinct_words"])?;
    for r in &report.rows {
        w.write_record([
            r.k.to_string(),
            format!("{:?}", r.h_k),
            format!("{:?}", r.per_symbol.estimate),
            format!("{:?}", r.per_symbol.stderr),
            format!("{:?}", r.miller_madow),
            r.distinct_words.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_system;
    use crate::dynamics::estimate_invariant_measure;
    use crate::expr::parse;
    use crate::graph::DirectedMultigraph;
    use crate::system::{EdgeFunctions, Region};

    #[test]
    fn decimal_blocks_are_log_ten_per_symbol() {
        let sys = preset_system("decimal-uniform").unwrap();
        let mu = estimate_invariant_measure(&sys, 10_000, None, 0).unwrap().ensemble;
        let report = block_entropy(&sys, &mu, 3, 200_000, 1).unwrap();
        let ln10 = 10f64.ln();
        for r in &report.rows {
            // plug-in bias is about (10^k − 1) / (2 · blocks)
            let bias = (10f64.powi(r.k as i32) - 1.0) / (2.0 * r.blocks as f64) / r.k as f64;
            assert!((r.per_symbol.estimate + bias - ln10).abs() <= 3.0 * r.per_symbol.stderr + 1e-3, "{r:?}");
            assert!((r.miller_madow - ln10).abs() < 2e-3);
        }
        for w in report.rows.windows(2) {
            let sigma = w[0].per_symbol.stderr.hypot(w[1].per_symbol.stderr);
            assert!(w[1].per_symbol.estimate <= w[0].per_symbol.estimate + 3.0 * sigma);
        }
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn deterministic_system_has_zero_block_entropy() {
        let g = DirectedMultigraph::from_indices(1, &[(0, 0)]).unwrap();
        let sys = MarkovSystem::new(
            g,
            1,
            vec![Region {
                predicate: parse("true").unwrap(),
                bbox: vec![(-1.0, 1.0)],
                anchor: vec![0.0],
            }],
            vec![EdgeFunctions {
                map: vec![parse("x1/3").unwrap()],
                prob: parse("1").unwrap(),
            }],
        )
        .unwrap();
        let mu = ParticleEnsemble::at_anchors(&sys, 10).unwrap();
        let report = block_entropy(&sys, &mu, 4, 1000, 0).unwrap();
        assert!(report.rows.iter().all(|r| r.h_k == 0.0 && r.distinct_words == 1));
    }

    #[test]
    fn undersampling_is_flagged_and_csv_written() {
        let sys = preset_system("decimal-uniform").unwrap();
        let mu = ParticleEnsemble::at_anchors(&sys, 10).unwrap();
        let report = block_entropy(&sys, &mu, 3, 5000, 0).unwrap();
        assert!(report.rows[2].undersampled);
        assert_eq!(report.warnings.len(), 2);
        let mut buf = Vec::new();
        write_blocks_csv(&report, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
