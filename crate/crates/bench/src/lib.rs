//! Fixtures shared by the criterion benches.

use cms_core::{preset_system, CodeWindow, MarkovSystem};

/// A preset system; panics on an unknown name.
pub fn system(preset: &str) -> MarkovSystem {
    preset_system(preset).unwrap_or_else(|e| panic!("preset `{preset}`: {e}"))
}

/// A window of `depth` letters ending at index 0, cycling through the edges of `sys`,
/// restricted to admissible continuations.
pub fn cyclic_window(sys: &MarkovSystem, depth: usize) -> CodeWindow {
    let g = sys.graph();
    let mut letters = Vec::with_capacity(depth);
    let mut e = 0usize;
    for i in 0..depth {
        letters.push(e);
        let next = g.outgoing(g.edge(e).to);
        e = next[i % next.len()];
    }
    CodeWindow::ending_at(g, 0, letters)
}
