//! The Markov system `(K_{i(e)}, w_e, p_e)` on regions of ℝ^d, with sampled
//! checks of its standing hypotheses.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, Kind};
use crate::graph::DirectedMultigraph;
use crate::rng::{SampleRng, StreamKey};
use crate::stats::neumaier_sum;

/// Consecutive rejections after which a region counts as empty.
pub const MAX_REJECTIONS: usize = 10_000;
/// Absolute tolerance on `|Σ_e p_e(x) − 1|`.
pub const STOCHASTICITY_TOL: f64 = 1e-9;

/// Vertex set `K_i`: a membership predicate, a bounding box used for
/// sampling, and the anchor point `x_i` used by the coding map.
#[derive(Debug, Clone)]
pub struct Region {
    pub predicate: Expr,
    pub bbox: Vec<(f64, f64)>,
    pub anchor: Vec<f64>,
}

/// The map `w_e` (one expression per coordinate) and probability `p_e`.
#[derive(Debug, Clone)]
pub struct EdgeFunctions {
    pub map: Vec<Expr>,
    pub prob: Expr,
}

#[derive(Debug, Clone)]
pub struct MarkovSystem {
    graph: DirectedMultigraph,
    dim: usize,
    regions: Vec<Region>,
    edge_fns: Vec<EdgeFunctions>,
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    if a.len() == 1 {
        return a[0].abs();
    }
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl MarkovSystem {
    /// Assembles a system and checks its structure: dimensions, expression
    /// kinds, surjectivity of `i`, and anchors lying in their regions.
    pub fn new(
        graph: DirectedMultigraph,
        dim: usize,
        regions: Vec<Region>,
        edge_fns: Vec<EdgeFunctions>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSystem("dimension must be at least 1".into()));
        }
        if regions.len() != graph.vertex_count() {
            return Err(Error::InvalidSystem(format!(
                "{} regions for {} vertices",
                regions.len(),
                graph.vertex_count()
            )));
        }
        if edge_fns.len() != graph.edge_count() {
            return Err(Error::InvalidSystem(format!(
                "{} edge definitions for {} edges",
                edge_fns.len(),
                graph.edge_count()
            )));
        }
        graph.check_initial_surjective()?;
        for (v, r) in regions.iter().enumerate() {
            let vid = graph.vertex_id(v);
            if r.predicate.kind() != Kind::Boolean {
                return Err(Error::InvalidSystem(format!(
                    "region of `{vid}` must be a predicate"
                )));
            }
            if r.predicate.required_dimension() > dim {
                return Err(Error::InvalidSystem(format!(
                    "region of `{vid}` uses coordinates beyond dimension {dim}"
                )));
            }
            if r.bbox.len() != dim || r.anchor.len() != dim {
                return Err(Error::InvalidSystem(format!(
                    "region of `{vid}` needs a {dim}-dimensional box and anchor"
                )));
            }
            if r.bbox.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
                return Err(Error::InvalidSystem(format!(
                    "bounding box of `{vid}` must be finite with lo <= hi"
                )));
            }
            let inside = r.predicate.eval_bool(&r.anchor).map_err(|source| Error::Eval {
                what: format!("region of `{vid}` at its anchor"),
                source,
            })?;
            if !inside {
                return Err(Error::InvalidSystem(format!(
                    "anchor {:?} of `{vid}` is outside its region",
                    r.anchor
                )));
            }
        }
        for (e, f) in edge_fns.iter().enumerate() {
            let eid = &graph.edge(e).id;
            if f.map.len() != dim {
                return Err(Error::InvalidSystem(format!(
                    "map of edge `{eid}` has {} components, expected {dim}",
                    f.map.len()
                )));
            }
            let exprs = f.map.iter().chain(std::iter::once(&f.prob));
            for ex in exprs {
                if ex.kind() != Kind::Numeric {
                    return Err(Error::InvalidSystem(format!(
                        "map and probability of edge `{eid}` must be numeric"
                    )));
                }
                if ex.required_dimension() > dim {
                    return Err(Error::InvalidSystem(format!(
                        "edge `{eid}` uses coordinates beyond dimension {dim}"
                    )));
                }
            }
        }
        Ok(Self {
            graph,
            dim,
            regions,
            edge_fns,
        })
    }

    pub fn graph(&self) -> &DirectedMultigraph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn region(&self, v: usize) -> &Region {
        &self.regions[v]
    }

    pub fn anchor(&self, v: usize) -> &[f64] {
        &self.regions[v].anchor
    }

    pub fn edge_functions(&self, e: usize) -> &EdgeFunctions {
        &self.edge_fns[e]
    }

    pub fn edge_id(&self, e: usize) -> &str {
        &self.graph.edge(e).id
    }

    /// Copy of the system with different anchors.
    pub fn with_anchors(&self, anchors: Vec<Vec<f64>>) -> Result<Self> {
        let regions = self
            .regions
            .iter()
            .zip(anchors)
            .map(|(r, a)| Region {
                anchor: a,
                ..r.clone()
            })
            .collect();
        Self::new(self.graph.clone(), self.dim, regions, self.edge_fns.clone())
    }

    /// `p_e(x)` for `x` in `K_{i(e)}`.
    pub fn prob(&self, e: usize, x: &[f64]) -> Result<f64> {
        self.edge_fns[e].prob.eval(x).map_err(|source| Error::Eval {
            what: format!("p_{} at {x:?}", self.edge_id(e)),
            source,
        })
    }

    /// `w_e(x)`.
    pub fn apply_map(&self, e: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.edge_fns[e]
            .map
            .iter()
            .map(|c| c.eval(x))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|source| Error::Eval {
                what: format!("w_{} at {x:?}", self.edge_id(e)),
                source,
            })
    }

    pub fn contains(&self, v: usize, x: &[f64]) -> Result<bool> {
        self.regions[v]
            .predicate
            .eval_bool(x)
            .map_err(|source| Error::Eval {
                what: format!("region of `{}` at {x:?}", self.graph.vertex_id(v)),
                source,
            })
    }

    /// The first region containing `x`.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        for v in 0..self.regions.len() {
            if self.contains(v, x)? {
                return Ok(v);
            }
        }
        Err(Error::OutsideRegions { point: x.to_vec() })
    }

    /// Rejection sample from the bounding box of region `v`.
    pub fn sample_in_region<R: Rng>(&self, v: usize, rng: &mut R) -> Result<Vec<f64>> {
        let bbox = &self.regions[v].bbox;
        for _ in 0..MAX_REJECTIONS {
            let x: Vec<f64> = bbox
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect();
            // an evaluation failure inside the box counts as a rejection
            if self.contains(v, &x).unwrap_or(false) {
                return Ok(x);
            }
        }
        Err(Error::DegenerateRegion {
            vertex: self.graph.vertex_id(v).to_string(),
            attempts: MAX_REJECTIONS,
        })
    }

    fn box_width(&self, v: usize) -> f64 {
        let w = self.regions[v]
            .bbox
            .iter()
            .map(|&(lo, hi)| hi - lo)
            .fold(0.0, f64::max);
        if w > 0.0 {
            w
        } else {
            1.0
        }
    }

    /// Sampled check of stochasticity, probability range and region mapping.
    /// `samples` points are drawn per vertex.
    pub fn validate(&self, samples: usize, seed: u64) -> Result<ValidationReport> {
        if samples == 0 {
            return Err(Error::InvalidArgument("samples must be at least 1".into()));
        }
        let key = StreamKey::new(seed).derive("validate");
        let n_edges = self.graph.edge_count();
        let mut edges: Vec<EdgeCheck> = (0..n_edges)
            .map(|e| EdgeCheck {
                edge: self.edge_id(e).to_string(),
                min_prob: f64::INFINITY,
                max_prob: f64::NEG_INFINITY,
                out_of_range: 0,
                mapping_violations: 0,
                first_violation: None,
            })
            .collect();
        let mut vertices = Vec::with_capacity(self.graph.vertex_count());
        let mut eval_errors = 0usize;
        let mut first_eval_error = None;
        for v in 0..self.graph.vertex_count() {
            let mut rng = key.stream(v as u64);
            let mut max_defect = 0.0_f64;
            let mut worst_point = None;
            for _ in 0..samples {
                let x = self.sample_in_region(v, &mut rng)?;
                let mut probs = Vec::with_capacity(self.graph.outgoing(v).len());
                let mut failed = false;
                for &e in self.graph.outgoing(v) {
                    let check = &mut edges[e];
                    match self.prob(e, &x) {
                        Ok(p) => {
                            check.min_prob = check.min_prob.min(p);
                            check.max_prob = check.max_prob.max(p);
                            if !(0.0..=1.0).contains(&p) {
                                check.out_of_range += 1;
                            }
                            probs.push(p);
                        }
                        Err(err) => {
                            failed = true;
                            eval_errors += 1;
                            first_eval_error.get_or_insert_with(|| err.to_string());
                        }
                    }
                    let target = self.graph.edge(e).to;
                    let mapped = self
                        .apply_map(e, &x)
                        .and_then(|y| self.contains(target, &y).map(|inside| (y, inside)));
                    match mapped {
                        Ok((_, true)) => {}
                        Ok((y, false)) => {
                            check.mapping_violations += 1;
                            check.first_violation.get_or_insert((x.clone(), y));
                        }
                        Err(err) => {
                            eval_errors += 1;
                            first_eval_error.get_or_insert_with(|| err.to_string());
                        }
                    }
                }
                if !failed {
                    let defect = (neumaier_sum(probs.iter().copied()) - 1.0).abs();
                    if defect > max_defect || worst_point.is_none() {
                        max_defect = max_defect.max(defect);
                        worst_point = Some(x.clone());
                    }
                }
            }
            vertices.push(VertexCheck {
                vertex: self.graph.vertex_id(v).to_string(),
                max_stochasticity_defect: max_defect,
                worst_point,
            })
        }
        let irreducible = self.graph.is_irreducible();
        let aperiodic = self.graph.is_aperiodic().ok();
        let min_prob = edges.iter().map(|c| c.min_prob).fold(f64::INFINITY, f64::min);
        let ok = eval_errors == 0
            && vertices
                .iter()
                .all(|v| v.max_stochasticity_defect <= STOCHASTICITY_TOL)
            && edges
                .iter()
                .all(|c| c.out_of_range == 0 && c.mapping_violations == 0);
        Ok(ValidationReport {
            samples_per_vertex: samples,
            seed,
            tolerance: STOCHASTICITY_TOL,
            irreducible,
            aperiodic,
            min_prob,
            vertices,
            edges,
            eval_errors,
            first_eval_error,
            ok,
        })
    }

    /// Empirical average contraction rate: the largest observed
    /// `Σ_e p_e(x)·d(w_e x, w_e y) / d(x, y)` over same-region pairs whose
    /// separations span six orders of magnitude below the region's box width.
    pub fn estimate_contraction_rate(&self, pairs: usize, seed: u64) -> Result<RateReport> {
        if pairs == 0 {
            return Err(Error::InvalidArgument("pairs must be at least 1".into()));
        }
        let key = StreamKey::new(seed).derive("contraction-rate");
        let n_vertices = self.graph.vertex_count();
        let results: Vec<Option<(f64, f64)>> = (0..pairs)
            .into_par_iter()
            .map(|i| {
                let v = i % n_vertices;
                let mut rng = key.stream(i as u64);
                self.rate_sample(v, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mut rate = f64::NEG_INFINITY;
        let mut lip = f64::NEG_INFINITY;
        let mut used = 0;
        for (r, l) in results.into_iter().flatten() {
            rate = rate.max(r);
            lip = lip.max(l);
            used += 1;
        }
        if used == 0 {
            return Err(Error::InvalidArgument(
                "no same-region pairs could be sampled".into(),
            ));
        }
        Ok(RateReport {
            empirical_rate: rate,
            max_observed_lipschitz: lip,
            pairs_requested: pairs,
            pairs_used: used,
            verified_contractive: rate < 1.0,
            method: "empirical",
        })
    }

    fn random_direction(&self, rng: &mut SampleRng) -> Vec<f64> {
        if self.dim == 1 {
            return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
        }
        loop {
            let g: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm(&g);
            if n > 1e-12 {
                return g.into_iter().map(|c| c / n).collect();
            }
        }
    }

    fn partner(&self, v: usize, x: &[f64], scale: f64, rng: &mut SampleRng) -> Result<Option<Vec<f64>>> {
        let dir = self.random_direction(rng);
        let mut s = scale;
        for _ in 0..4 {
            for sign in [1.0, -1.0] {
                let y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + sign * s * d).collect();
                if y != x && self.contains(v, &y).unwrap_or(false) {
                    return Ok(Some(y));
                }
            }
            s /= 10.0;
        }
        Ok(None)
    }

    fn rate_sample(&self, v: usize, rng: &mut SampleRng) -> Result<Option<(f64, f64)>> {
        let x = self.sample_in_region(v, rng)?;
        let scale = self.box_width(v) * 10f64.powf(-6.0 * rng.random::<f64>());
        let Some(y) = self.partner(v, &x, scale, rng)? else {
            return Ok(None);
        };
        let dxy = distance(&x, &y);
        if dxy == 0.0 {
            return Ok(None);
        }
        let mut terms = Vec::with_capacity(self.graph.outgoing(v).len());
        let mut lip = 0.0_f64;
        for &e in self.graph.outgoing(v) {
            let p = self.prob(e, &x)?;
            let d = distance(&self.apply_map(e, &x)?, &self.apply_map(e, &y)?);
            let ratio = d / dxy;
            lip = lip.max(ratio);
            terms.push(p * ratio);
        }
        Ok(Some((neumaier_sum(terms), lip)))
    }

    /// Observed modulus of continuity of `p_e` on its region: for each scale
    /// `t`, the largest `|p_e(x) − p_e(y)|` over sampled pairs with
    /// `d(x, y) ≤ t`. Pairs drawn for smaller scales count toward larger
    /// ones, so the result is nondecreasing in `t`.
    pub fn modulus_probe(
        &self,
        e: usize,
        scales: &[f64],
        pairs_per_scale: usize,
        seed: u64,
    ) -> Result<Vec<(f64, f64)>> {
        if scales.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidArgument("scales must be positive".into()));
        }
        let v = self.graph.edge(e).from;
        let key = StreamKey::new(seed).derive_indexed("modulus", e as u64);
        let mut order: Vec<usize> = (0..scales.len()).collect();
        order.sort_by(|&a, &b| scales[a].total_cmp(&scales[b]));
        let mut out = vec![(0.0, 0.0); scales.len()];
        let mut running = 0.0_f64;
        for (rank, &si) in order.iter().enumerate() {
            let t = scales[si];
            let sub = key.derive_indexed("scale", rank as u64);
            let diffs: Vec<f64> = (0..pairs_per_scale)
                .into_par_iter()
                .map(|i| -> Result<f64> {
                    let mut rng = sub.stream(i as u64);
                    let x = self.sample_in_region(v, &mut rng)?;
                    let r = t * rng.random::<f64>();
                    let Some(y) = self.partner(v, &x, r, &mut rng)? else {
                        return Ok(0.0);
                    };
                    if distance(&x, &y) > t {
                        return Ok(0.0);
                    }
                    Ok((self.prob(e, &x)? - self.prob(e, &y)?).abs())
                })
                .collect::<Result<_>>()?;
            running = diffs.into_iter().fold(running, f64::max);
            out[si] = (t, running);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VertexCheck {
    pub vertex: String,
    pub max_stochasticity_defect: f64,
    pub worst_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeCheck {
    pub edge: String,
    pub min_prob: f64,
    pub max_prob: f64,
    pub out_of_range: usize,
    pub mapping_violations: usize,
    pub first_violation: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub samples_per_vertex: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub irreducible: bool,
    pub aperiodic: Option<bool>,
    /// Smallest sampled probability over all edges (the `δ` of the
    /// bounded-away-from-zero hypothesis, empirically).
    pub min_prob: f64,
    pub vertices: Vec<VertexCheck>,
    pub edges: Vec<EdgeCheck>,
    pub eval_errors: usize,
    pub first_eval_error: Option<String>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub empirical_rate: f64,
    pub max_observed_lipschitz: f64,
    pub pairs_requested: usize,
    pub pairs_used: usize,
    /// `empirical_rate < 1`; a sampled supremum, not a proof.
    pub verified_contractive: bool,
    pub method: &'static str,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_system;
    use crate::expr::parse;

    fn constant_pair(p0: &str, p1: &str) -> MarkovSystem {
        let g = DirectedMultigraph::from_indices(1, &[(0, 0), (0, 0)]).unwrap();
        let region = Region {
            predicate: parse("x1 >= 0 and x1 <= 1").unwrap(),
            bbox: vec![(0.0, 1.0)],
            anchor: vec![0.0],
        };
        let edge = |p: &str| EdgeFunctions {
            map: vec![parse("x1").unwrap()],
            prob: parse(p).unwrap(),
        };
        MarkovSystem::new(g, 1, vec![region], vec![edge(p0), edge(p1)]).unwrap()
    }

    #[test]
    fn decimal_validation_is_exact() {
        let sys = preset_system("decimal-uniform").unwrap();
        let report = sys.validate(10_000, 3).unwrap();
        assert!(report.ok);
        assert_eq!(report.vertices[0].max_stochasticity_defect, 0.0);
        assert_eq!(report.min_prob, 0.1);
        assert!(report.irreducible);
        assert_eq!(report.aperiodic, Some(true));
    }

    #[test]
    fn example_three_minimum_probability() {
        let sys = preset_system("example3").unwrap();
        let report = sys.validate(10_000, 5).unwrap();
        assert!(report.ok);
        // dense-grid oracle for min over the box of (1/6)cos²x + 1/8
        let grid_min = (0..=2_000_000)
            .map(|i| -10.0 + 20.0 * i as f64 / 2e6)
            .map(|x: f64| x.cos().powi(2) / 6.0 + 0.125)
            .fold(f64::INFINITY, f64::min);
        assert!((grid_min - 0.125).abs() < 1e-10);
        let p1 = &report.edges[1];
        assert!(p1.min_prob >= 0.125 && p1.min_prob - grid_min < 1e-4, "{}", p1.min_prob);
    }

    #[test]
    fn stochasticity_defect_detected() {
        let sys = constant_pair("0.6", "0.6");
        let report = sys.validate(100, 0).unwrap();
        assert!(!report.ok);
        assert!((report.vertices[0].max_stochasticity_defect - 0.2).abs() < 1e-12);
    }

    #[test]
    fn region_mapping_violation_detected() {
        let g = DirectedMultigraph::from_indices(1, &[(0, 0)]).unwrap();
        let region = Region {
            predicate: parse("x1 >= 0 and x1 <= 1").unwrap(),
            bbox: vec![(0.0, 1.0)],
            anchor: vec![0.0],
        };
        let sys = MarkovSystem::new(
            g,
            1,
            vec![region],
            vec![EdgeFunctions {
                map: vec![parse("x1 + 0.5").unwrap()],
                prob: parse("1").unwrap(),
            }],
        )
        .unwrap();
        let report = sys.validate(1000, 0).unwrap();
        assert!(!report.ok);
        assert!(report.edges[0].mapping_violations > 0);
    }

    #[test]
    fn degenerate_region_is_an_error() {
        let g = DirectedMultigraph::from_indices(1, &[(0, 0)]).unwrap();
        let region = Region {
            predicate: parse("x1 > 0.5 and x1 < 0.5 or x1 <= 0").unwrap(),
            bbox: vec![(0.1, 1.0)],
            anchor: vec![0.0],
        };
        let sys = MarkovSystem::new(
            g,
            1,
            vec![region],
            vec![EdgeFunctions {
                map: vec![parse("0").unwrap()],
                prob: parse("1").unwrap(),
            }],
        )
        .unwrap();
        assert!(matches!(sys.validate(10, 0), Err(Error::DegenerateRegion { .. })));
    }

    #[test]
    fn structural_errors() {
        let g = DirectedMultigraph::from_indices(1, &[(0, 0)]).unwrap();
        let bad_anchor = Region {
            predicate: parse("x1 >= 0").unwrap(),
            bbox: vec![(0.0, 1.0)],
            anchor: vec![-1.0],
        };
        let edge = EdgeFunctions {
            map: vec![parse("x1").unwrap()],
            prob: parse("1").unwrap(),
        };
        assert!(MarkovSystem::new(g.clone(), 1, vec![bad_anchor], vec![edge.clone()]).is_err());
        let wide = EdgeFunctions {
            map: vec![parse("x2").unwrap()],
            prob: parse("1").unwrap(),
        };
        let region = Region {
            predicate: parse("true").unwrap(),
            bbox: vec![(0.0, 1.0)],
            anchor: vec![0.0],
        };
        assert!(MarkovSystem::new(g, 1, vec![region], vec![wide]).is_err());
    }

    #[test]
    fn decimal_rate_is_one_tenth() {
        let sys = preset_system("decimal-uniform").unwrap();
        let r = sys.estimate_contraction_rate(2000, 1).unwrap();
        assert!((r.empirical_rate - 0.1).abs() < 1e-9, "{}", r.empirical_rate);
        assert!(r.verified_contractive);
    }

    #[test]
    fn identity_maps_have_rate_one() {
        let sys = constant_pair("0.3", "0.7");
        let r = sys.estimate_contraction_rate(500, 1).unwrap();
        assert!((r.empirical_rate - 1.0).abs() < 1e-12);
        assert!(!r.verified_contractive);
    }

    #[test]
    fn example_three_rate_and_lipschitz_bound() {
        let sys = preset_system("example3").unwrap();
        let r = sys.estimate_contraction_rate(100_000, 7).unwrap();
        assert!(r.empirical_rate <= 45.0 / 48.0 + 1e-12);
        assert!(45.0 / 48.0 - r.empirical_rate < 1e-4, "{}", r.empirical_rate);
        assert!(r.empirical_rate <= r.max_observed_lipschitz);
        assert_eq!(r.max_observed_lipschitz, 2.0);
    }

    #[test]
    fn rate_estimate_is_deterministic() {
        let sys = preset_system("decimal-weighted").unwrap();
        let a = sys.estimate_contraction_rate(500, 9).unwrap();
        let b = sys.estimate_contraction_rate(500, 9).unwrap();
        assert_eq!(a.empirical_rate.to_bits(), b.empirical_rate.to_bits());
    }

    #[test]
    fn modulus_of_constant_probability_vanishes() {
        let sys = preset_system("decimal-uniform").unwrap();
        let m = sys.modulus_probe(3, &[0.1, 0.01], 500, 0).unwrap();
        assert!(m.iter().all(|&(_, phi)| phi == 0.0));
    }

    #[test]
    fn modulus_of_example_three_respects_lipschitz_bound() {
        let sys = preset_system("example3").unwrap();
        let scales = [0.001, 0.01, 0.1, 1.0];
        let m = sys.modulus_probe(0, &scales, 20_000, 4).unwrap();
        // |d/dx (1/6) sin²x| = |sin 2x| / 6 ≤ 1/6
        let at_001 = m[1].1;
        assert!(at_001 <= 0.01 / 6.0 + 1e-15, "{at_001}");
        assert!(at_001 > 0.5 * 0.01 / 6.0);
        for w in m.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }
}
