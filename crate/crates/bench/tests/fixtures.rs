use cms_bench::{cyclic_window, system};

#[test]
fn cyclic_windows_are_admissible() {
    for preset in ["example3", "decimal-weighted", "gmeasure-2symbol"] {
        let sys = system(preset);
        let w = cyclic_window(&sys, 24);
        assert_eq!(w.len(), 24);
        assert!(w.is_admissible(), "{preset}");
    }
}
