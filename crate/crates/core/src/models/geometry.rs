//! Spatial bookkeeping shared by the abstraction, reward and value stages.
//!
//! Every level map has the same side `s` and is centered on the robot. The
//! level-`l` map covers the center quarter of the level-`l+1` map, so cell
//! `(i, j)` at level `l` lies inside cell `(⌊i/2⌋ + s/4, ⌊j/2⌋ + s/4)` one
//! level up. Indices outside `0..s` (the padding ring) map the same way.

use crate::env::Footprint;

/// Level-`l+1` cell containing level-`l` cell `(i, j)` (either index may be
/// `-1` or `s` for the padding ring).
pub fn parent_cell(i: isize, j: isize, side: usize) -> (usize, usize) {
    let q = (side / 4) as isize;
    let p = (i.div_euclid(2) + q, j.div_euclid(2) + q);
    debug_assert!(p.0 >= 0 && p.1 >= 0 && (p.0 as usize) < side && (p.1 as usize) < side);
    (p.0 as usize, p.1 as usize)
}

/// Offset of the level-`l` crop inside the full-resolution level-`l` map of
/// side `full`.
pub fn crop_offset(full: usize, side: usize) -> usize {
    (full - side) / 2
}

/// Original-map window `(x0, y0, extent)` covered by level `level` (1-based)
/// of an `n×n` robot-centered input with level side `side`.
pub fn coverage(n: usize, side: usize, level: usize) -> (usize, usize, usize) {
    let extent = side << (level - 1);
    let o = (n - extent) / 2;
    (o, o, extent)
}

/// Wheel-cell offsets per orientation at one level's resolution.
pub fn level_wheel_cells(
    footprint: &Footprint,
    orientations: usize,
    cell_size_m: f64,
) -> Vec<[(i32, i32); 4]> {
    (0..orientations).map(|t| footprint.wheel_cells(t, orientations, cell_size_m)).collect()
}
