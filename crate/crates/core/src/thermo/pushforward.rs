use rayon::prelude::*;
use serde::Serialize;

use crate::coding::{coding_map, CodeSampler, CodingOptions, CodingStatus};
use crate::dynamics::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::stats::ks_two_sample;
use crate::system::MarkovSystem;

#[derive(Debug, Clone, Serialize)]
pub struct PushforwardReport {
    /// Two-sample KS distance between `F`-values and the ensemble, per
    /// coordinate.
    pub ks_per_coordinate: Vec<f64>,
    /// Largest coordinate distance.
    pub sliced_ks: f64,
    pub not_converged_fraction: f64,
    pub diverged_fraction: f64,
    pub n_samples: usize,
    pub past_depth: usize,
}

/// Compares the law of `F` over codes drawn under `M` (evaluated from the
/// anchors, not from the sampled start) with the ensemble itself.
pub fn pushforward_check(
    sys: &MarkovSystem,
    mu: &ParticleEnsemble,
    n_samples: usize,
    past_depth: usize,
    opts: &CodingOptions,
    seed: u64,
) -> Result<PushforwardReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let sampler = CodeSampler::new(sys, mu, past_depth, 0, seed).labeled("pushforward");
    let coded = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| coding_map(sys, &sampler.sample(i)?.window, opts))
        .collect::<Result<Vec<_>>>()?;
    let n = n_samples as f64;
    let diverged = coded.iter().filter(|c| c.status == CodingStatus::Diverged).count();
    let not_converged = coded
        .iter()
        .filter(|c| c.status == CodingStatus::NotConverged)
        .count();
    let values: Vec<&Vec<f64>> = coded
        .iter()
        .filter(|c| c.status != CodingStatus::Diverged)
        .map(|c| &c.value)
        .collect();
    let weights = mu.weights();
    let ks_per_coordinate: Vec<f64> = (0..sys.dim())
        .map(|j| {
            let f: Vec<f64> = values.iter().map(|v| v[j]).collect();
            if f.is_empty() {
                1.0
            } else {
                ks_two_sample(&f, None, &mu.coordinate(j), Some(&weights))
            }
        })
        .collect();
    Ok(PushforwardReport {
        sliced_ks: ks_per_coordinate.iter().copied().fold(0.0, f64::max),
        ks_per_coordinate,
        not_converged_fraction: not_converged as f64 / n,
        diverged_fraction: diverged as f64 / n,
        n_samples,
        past_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_system;
    use crate::dynamics::estimate_invariant_measure;
    use crate::expr::parse;
    use crate::graph::DirectedMultigraph;
    use crate::system::{EdgeFunctions, Region};

    fn binary() -> MarkovSystem {
        let g = DirectedMultigraph::from_indices(1, &[(0, 0), (0, 0)]).unwrap();
        let edge = |e: u32| EdgeFunctions {
            map: vec![parse(&format!("x1/2 + {e}/2")).unwrap()],
            prob: parse("1/2").unwrap(),
        };
        MarkovSystem::new(
            g,
            1,
            vec![Region {
                predicate: parse("x1 >= 0 and x1 <= 1").unwrap(),
                bbox: vec![(0.0, 1.0)],
                anchor: vec![0.0],
            }],
            vec![edge(0), edge(1)],
        )
        .unwrap()
    }

    #[test]
    fn decimal_pushforward_is_uniform() {
        let sys = preset_system("decimal-uniform").unwrap();
        let mu = estimate_invariant_measure(&sys, 100_000, None, 0).unwrap().ensemble;
        let r = pushforward_check(&sys, &mu, 100_000, 12, &CodingOptions::default(), 1).unwrap();
        assert!(r.sliced_ks <= 0.01, "{r:?}");
        assert_eq!(r.diverged_fraction, 0.0);
    }

    #[test]
    fn point_mass_pushforward() {
        let g = DirectedMultigraph::from_indices(1, &[(0, 0)]).unwrap();
        let sys = MarkovSystem::new(
            g,
            1,
            vec![Region {
                predicate: parse("true").unwrap(),
                bbox: vec![(-1.0, 1.0)],
                anchor: vec![1.0],
            }],
            vec![EdgeFunctions {
                map: vec![parse("x1/2").unwrap()],
                prob: parse("1").unwrap(),
            }],
        )
        .unwrap();
        let mu = estimate_invariant_measure(&sys, 100, Some(80), 0).unwrap().ensemble;
        let opts = CodingOptions::default();
        let sampler = CodeSampler::new(&sys, &mu, 40, 0, 0);
        for code in sampler.sample_many(50).unwrap() {
            let f = coding_map(&sys, &code.window, &opts).unwrap();
            assert!(f.value[0].abs() <= opts.tol);
        }
    }

    #[test]
    fn distance_shrinks_with_depth() {
        let sys = binary();
        let mu = estimate_invariant_measure(&sys, 50_000, Some(40), 0).unwrap().ensemble;
        let opts = CodingOptions::default();
        let ks: Vec<f64> = [1, 3, 7]
            .iter()
            .map(|&d| pushforward_check(&sys, &mu, 50_000, d, &opts, 2).unwrap().sliced_ks)
            .collect();
        assert!(ks[0] > ks[1] && ks[1] > ks[2], "{ks:?}");
    }
}
