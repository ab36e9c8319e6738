//! Summation, weighted estimates and distribution distances.
//!
//! Reductions here always run in a fixed order so that results depend only
//! on the input sequence, never on thread scheduling.

use serde::{Deserialize, Serialize};

/// Compensated (Neumaier) sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Pairwise sum with a fixed split tree.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            estimate: value,
            stderr: 0.0,
            n_samples: 0,
        }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                estimate: f64::NAN,
                stderr: f64::NAN,
                n_samples: 0,
            };
        }
        let mean = pairwise_sum(values) / n as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if n > 1 {
            pairwise_sum(&sq) / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            estimate: mean,
            stderr: (var / n as f64).sqrt(),
            n_samples: n,
        }
    }

    /// Weighted mean of `values` with weights summing to one, treating the
    /// weighted points as an importance sample: stderr² = Σ w²(v − mean)².
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Self {
        assert_eq!(values.len(), weights.len());
        let total = pairwise_sum(weights);
        let terms: Vec<f64> = values.iter().zip(weights).map(|(v, w)| v * w).collect();
        let mean = pairwise_sum(&terms) / total;
        let sq: Vec<f64> = values
            .iter()
            .zip(weights)
            .map(|(v, w)| {
                let wn = w / total;
                wn * wn * (v - mean) * (v - mean)
            })
            .collect();
        Self {
            estimate: mean,
            stderr: pairwise_sum(&sq).sqrt(),
            n_samples: values.len(),
        }
    }

    /// `|self − other| / sqrt(se₁² + se₂²)`; infinite when both errors vanish
    /// and the estimates differ.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let diff = (self.estimate - other.estimate).abs();
        let se = self.stderr.hypot(other.stderr);
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }
}

fn sorted_weighted(values: &[f64], weights: Option<&[f64]>) -> Vec<(f64, f64)> {
    let n = values.len();
    let mut pairs: Vec<(f64, f64)> = match weights {
        Some(w) => {
            let total = pairwise_sum(w);
            values.iter().zip(w).map(|(&v, &w)| (v, w / total)).collect()
        }
        None => values.iter().map(|&v| (v, 1.0 / n as f64)).collect(),
    };
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// One-sample Kolmogorov–Smirnov distance of a (weighted) sample to a CDF.
pub fn ks_one_sample(values: &[f64], weights: Option<&[f64]>, cdf: impl Fn(f64) -> f64) -> f64 {
    let pairs = sorted_weighted(values, weights);
    let mut below = 0.0;
    let mut d = 0.0_f64;
    let mut i = 0;
    while i < pairs.len() {
        let x = pairs[i].0;
        let mut mass = 0.0;
        while i < pairs.len() && pairs[i].0 == x {
            mass += pairs[i].1;
            i += 1;
        }
        let f = cdf(x);
        d = d.max((below - f).abs());
        below += mass;
        d = d.max((below - f).abs());
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance between weighted samples.
pub fn ks_two_sample(a: &[f64], wa: Option<&[f64]>, b: &[f64], wb: Option<&[f64]>) -> f64 {
    let pa = sorted_weighted(a, wa);
    let pb = sorted_weighted(b, wb);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0_f64, 0.0_f64);
    let mut d = 0.0_f64;
    while i < pa.len() || j < pb.len() {
        let x = match (pa.get(i), pb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        while i < pa.len() && pa[i].0 == x {
            fa += pa[i].1;
            i += 1;
        }
        while j < pb.len() && pb[j].0 == x {
            fb += pb[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    d
}

/// Wasserstein-1 distance between two weighted samples on the line.
pub fn wasserstein1(a: &[f64], wa: Option<&[f64]>, b: &[f64], wb: Option<&[f64]>) -> f64 {
    let pa = sorted_weighted(a, wa);
    let pb = sorted_weighted(b, wb);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0_f64, 0.0_f64);
    let mut prev: Option<f64> = None;
    let mut area = 0.0;
    while i < pa.len() || j < pb.len() {
        let x = match (pa.get(i), pb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            area += (fa - fb).abs() * (x - p);
        }
        while i < pa.len() && pa[i].0 == x {
            fa += pa[i].1;
            i += 1;
        }
        while j < pb.len() && pb[j].0 == x {
            fb += pb[j].1;
            j += 1;
        }
        prev = Some(x);
    }
    area
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
