//! Stable text rendering for CSV emission.

/// Render a float in scientific notation with full round-trip precision.
/// Rust's shortest-representation formatting is deterministic, so repeated
/// runs produce byte-identical files.
pub fn float(x: f64) -> String {
    format!("{x:e}")
}
