//! Benchmark fixtures shared by the criterion targets.

use perishape_core::{GridSpec, LevelSetField, Shape};

/// Unit disk on a grid of spacing `h`, with half-width 1.2.
pub fn unit_disk(h: f64) -> LevelSetField {
    let g = GridSpec::centered([0.0, 0.0], 1.2, h).expect("valid grid");
    Shape::disk([0.0, 0.0], 1.0).rasterize(&g).expect("disk fits")
}

/// Off-centre ellipse of area π on a grid of spacing `h`.
pub fn ellipse(h: f64) -> LevelSetField {
    let g = GridSpec::centered([0.0, 0.0], 1.6, h).expect("valid grid");
    Shape::ellipse([0.1, -0.05], 1.25, 0.8).rasterize(&g).expect("ellipse fits")
}
