use cms_core::coding::{coding_map, CodeWindow, CodingOptions, CodingStatus};
use cms_core::dynamics::{apply_markov_operator, choose_edge, ParticleEnsemble};
use cms_core::thermo::{
    cylinder_measure, energy, transfer_operator_fixed_point, CompetitorMeasure, CylinderMode,
};
use cms_core::{parse, preset_system, DirectedMultigraph, StreamKey};
use proptest::prelude::*;
use rand::Rng;

fn digits(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..10, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decimal_coding_map_is_the_digit_expansion(past in digits(14)) {
        let sys = preset_system("decimal-uniform").unwrap();
        let window = CodeWindow::ending_at(sys.graph(), 0, past.clone());
        let r = coding_map(&sys, &window, &CodingOptions::default()).unwrap();
        // σ_0 is the leading digit
        let expected: f64 = past.iter().rev().enumerate().map(|(j, &d)| d as f64 * 10f64.powi(-(j as i32 + 1))).sum();
        prop_assert!((r.value[0] - expected).abs() < 1e-14);
        prop_assert!(r.status != CodingStatus::Diverged);
        prop_assert!(r.diameter <= 10f64.powi(-(past.len() as i32 / 2)) + 1e-15);
    }

    #[test]
    fn markov_operator_fixes_constants_and_is_linear(x in 0.0f64..1.0, a in -3.0f64..3.0) {
        let sys = preset_system("decimal-weighted").unwrap();
        let one = apply_markov_operator(&sys, &parse("1").unwrap(), &[x]).unwrap();
        prop_assert!((one - 1.0).abs() < 1e-12);
        let f = parse("x1^2").unwrap();
        let g = parse(&format!("{a}*x1^2 + 1")).unwrap();
        let uf = apply_markov_operator(&sys, &f, &[x]).unwrap();
        let ug = apply_markov_operator(&sys, &g, &[x]).unwrap();
        prop_assert!((ug - (a * uf + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn chosen_edges_leave_the_current_vertex(x in 0.0f64..1.0, u in 0.0f64..1.0) {
        let sys = preset_system("gmeasure-2symbol").unwrap();
        for v in 0..sys.graph().vertex_count() {
            let e = choose_edge(&sys, v, &[x], u).unwrap();
            prop_assert_eq!(sys.graph().edge(e).from, v);
        }
    }

    #[test]
    fn energy_is_never_positive(past in prop::collection::vec(0usize..2, 1..40)) {
        let sys = preset_system("example3").unwrap();
        let window = CodeWindow::ending_at(sys.graph(), 1, past.iter().copied().chain([0]).collect());
        let e = energy(&sys, &window, &CodingOptions::default()).unwrap();
        prop_assert!(e.u <= 0.0);
        if e.status == CodingStatus::Diverged {
            prop_assert_eq!(e.u, f64::NEG_INFINITY);
        }
    }

    #[test]
    fn cylinders_are_additive_over_extensions(word in digits(3)) {
        let sys = preset_system("decimal-weighted").unwrap();
        let mu = ParticleEnsemble::at_anchors(&sys, 1).unwrap();
        let base = cylinder_measure(&sys, &mu, &word, CylinderMode::Quadrature).unwrap().estimate;
        let mut total = 0.0;
        for e in 0..10 {
            let mut w = word.clone();
            w.push(e);
            total += cylinder_measure(&sys, &mu, &w, CylinderMode::Quadrature).unwrap().estimate;
        }
        prop_assert!((total - base).abs() < 1e-14);
        prop_assert!(base > 0.0 && base <= 1.0);
    }

    #[test]
    fn random_competitors_are_stationary_chains(seed in any::<u64>(), order in 1usize..=2) {
        let graph = preset_system("gmeasure-2symbol").unwrap().graph().clone();
        let mut rng = StreamKey::new(seed).stream(0);
        let theta = CompetitorMeasure::random(&graph, order, &mut rng).unwrap();
        prop_assert!(theta.is_valid());
        let total: f64 = theta.stationary.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        // out-degree is 2 everywhere
        prop_assert!(theta.entropy() >= 0.0 && theta.entropy() <= 2f64.ln() + 1e-12);
    }

    #[test]
    fn oracle_fixed_point_is_stationary(weights in prop::collection::vec(0.05f64..1.0, 9)) {
        let g = DirectedMultigraph::from_indices(1, &[(0, 0); 3]).unwrap();
        let row = |a: usize, b: usize| weights[3 * a + b] / (0..3).map(|c| weights[3 * a + c]).sum::<f64>();
        let m = transfer_operator_fixed_point(&g, 1, |w| row(w[0], w[1]), 1e-14).unwrap();
        for b in 0..3 {
            let inflow: f64 = (0..3).map(|a| m.probs[a] * row(a, b)).sum();
            prop_assert!((inflow - m.probs[b]).abs() < 1e-12);
        }
        prop_assert!((m.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn streams_are_reproducible_and_distinct(seed in any::<u64>(), i in 0u64..1000) {
        let key = StreamKey::new(seed).derive("prop");
        let mut s1 = key.stream(i);
        let mut s2 = key.stream(i);
        let mut s3 = key.stream(i + 1);
        let x1: Vec<u64> = (0..4).map(|_| s1.random()).collect();
        let x2: Vec<u64> = (0..4).map(|_| s2.random()).collect();
        let x3: Vec<u64> = (0..4).map(|_| s3.random()).collect();
        prop_assert_eq!(&x1, &x2);
        prop_assert_ne!(&x1, &x3);
    }
}
