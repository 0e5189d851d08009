//! Signed distance by fast marching.
//!
//! Nodes within `2.5 h` of the marching-squares contour (and every corner of a
//! cut cell) receive the exact distance to the polyline; the first-order fast
//! marching method then propagates `|grad d| = 1` outward. Node signs are never
//! changed, so `{d > 0}` equals the input node set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::contour::{self, Contour};
use crate::grid::{GridSpec, LevelSetField, ScalarField};

const EXACT_BAND: f64 = 2.5;

#[derive(Copy, Clone, PartialEq)]
struct Trial {
    dist: f64,
    node: usize,
}

impl Eq for Trial {}

impl Ord for Trial {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance; ties broken by node index for determinism.
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

/// Unsigned distances near the contour; `INFINITY` elsewhere.
fn near_distances(grid: &GridSpec, contour: &Contour) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; grid.len()];
    let reach = 3i64;
    for s in &contour.segments {
        let (ci, cj) = grid.ij(s.cell);
        let i0 = (ci as i64 - reach).max(0) as usize;
        let j0 = (cj as i64 - reach).max(0) as usize;
        let i1 = (ci + 1 + reach as usize).min(grid.nx - 1);
        let j1 = (cj + 1 + reach as usize).min(grid.ny - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let k = grid.index(i, j);
                let d = point_segment_distance(grid.point(i, j), s.a, s.b);
                if d < dist[k] {
                    dist[k] = d;
                }
            }
        }
    }
    dist
}

fn eikonal_update(grid: &GridSpec, dist: &[f64], known: &[bool], i: usize, j: usize) -> f64 {
    let h = grid.h;
    let k = grid.index(i, j);
    let pick = |a: Option<usize>, b: Option<usize>| {
        let va = a.filter(|&n| known[n]).map_or(f64::INFINITY, |n| dist[n]);
        let vb = b.filter(|&n| known[n]).map_or(f64::INFINITY, |n| dist[n]);
        va.min(vb)
    };
    let a = pick((i > 0).then(|| k - 1), (i + 1 < grid.nx).then(|| k + 1));
    let b = pick((j > 0).then(|| k - grid.nx), (j + 1 < grid.ny).then(|| k + grid.nx));
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if !hi.is_finite() || hi - lo >= h {
        lo + h
    } else {
        0.5 * (lo + hi + (2.0 * h * h - (hi - lo).powi(2)).sqrt())
    }
}

/// Unsigned distance to the zero contour for every node.
fn unsigned_distance(field: &LevelSetField, contour: &Contour) -> Vec<f64> {
    let grid = field.grid();
    let phi = field.values();
    let mut dist = near_distances(grid, contour);
    let mut known = vec![false; grid.len()];

    // Corners of cut cells are always seeded.
    for s in &contour.segments {
        let k = s.cell;
        for n in [k, k + 1, k + grid.nx, k + grid.nx + 1] {
            known[n] = true;
        }
    }
    for k in 0..grid.len() {
        if dist[k] <= EXACT_BAND * grid.h {
            known[k] = true;
        } else if !known[k] {
            dist[k] = f64::INFINITY;
        }
    }
    let mut heap = BinaryHeap::new();
    let push_neighbours = |k: usize, dist: &mut Vec<f64>, known: &Vec<bool>, heap: &mut BinaryHeap<Trial>| {
        let (i, j) = grid.ij(k);
        let mut nbrs = [usize::MAX; 4];
        if i > 0 {
            nbrs[0] = k - 1;
        }
        if i + 1 < grid.nx {
            nbrs[1] = k + 1;
        }
        if j > 0 {
            nbrs[2] = k - grid.nx;
        }
        if j + 1 < grid.ny {
            nbrs[3] = k + grid.nx;
        }
        for n in nbrs {
            if n == usize::MAX || known[n] {
                continue;
            }
            let (ni, nj) = grid.ij(n);
            let d = eikonal_update(grid, dist, known, ni, nj);
            if d < dist[n] {
                dist[n] = d;
                heap.push(Trial { dist: d, node: n });
            }
        }
    };
    for k in 0..grid.len() {
        if known[k] {
            push_neighbours(k, &mut dist, &known, &mut heap);
        }
    }
    while let Some(Trial { dist: d, node }) = heap.pop() {
        if known[node] || d > dist[node] {
            continue;
        }
        known[node] = true;
        push_neighbours(node, &mut dist, &known, &mut heap);
    }
    debug_assert!(phi.len() == dist.len());
    dist
}

/// Signed distance values (positive inside) with the contour already extracted.
pub(crate) fn signed_values(field: &LevelSetField, contour: &Contour) -> Vec<f64> {
    let grid = field.grid();
    if contour.is_empty() {
        let far = grid.h * (grid.nx + grid.ny) as f64;
        return field.values().iter().map(|&v| if v > 0.0 { far } else { -far }).collect();
    }
    let dist = unsigned_distance(field, contour);
    field.values().iter().zip(dist).map(|(&v, d)| if v > 0.0 { d } else { -d }).collect()
}

/// Signed distance to the zero contour, positive inside the set.
pub fn signed_distance(field: &LevelSetField) -> ScalarField {
    let contour = contour::extract(field.grid(), field.values());
    ScalarField::new(*field.grid(), signed_values(field, &contour)).expect("distances are finite")
}

/// Replaces `phi` by its signed distance while keeping the node set.
pub fn redistance(field: &LevelSetField) -> LevelSetField {
    let contour = contour::extract(field.grid(), field.values());
    let values = signed_values(field, &contour);
    // A node exactly on the contour keeps a tiny negative value so its sign
    // survives the round trip.
    let values = values
        .into_iter()
        .zip(field.values())
        .map(|(d, &v)| if v > 0.0 { d.max(f64::MIN_POSITIVE) } else { d.min(0.0) })
        .collect();
    LevelSetField::new(*field.grid(), values).expect("distances are finite")
}

/// Godunov upwind gradient magnitude of a distance field at node `(i, j)`.
pub fn upwind_gradient_norm(grid: &GridSpec, d: &[f64], i: usize, j: usize) -> f64 {
    let k = grid.index(i, j);
    let a = d[k].abs();
    let h = grid.h;
    let axis = |lo: usize, hi: usize| {
        let l = (a - d[lo].abs()) / h;
        let r = (a - d[hi].abs()) / h;
        l.max(r).max(0.0)
    };
    let gx = axis(k - 1, k + 1);
    let gy = axis(k - grid.nx, k + grid.nx);
    (gx * gx + gy * gy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::Shape;

    fn disk_grid(h: f64) -> GridSpec {
        GridSpec::centered([0.0, 0.0], 1.6, h).unwrap()
    }

    #[test]
    fn disk_center_and_exterior_distances() {
        let h = 1.0 / 64.0;
        let g = disk_grid(h);
        // Rasterize a non-distance function with the same zero set.
        let f = LevelSetField::from_fn(g, |p| 1.0 - (p[0] * p[0] + p[1] * p[1])).unwrap();
        let d = signed_distance(&f);
        assert!((d.interpolate([0.0, 0.0]) - 1.0).abs() <= 3.0 * h);
        assert!(d.interpolate([1.0, 0.0]).abs() <= h);
        let p = [1.3 / 2f64.sqrt(), 1.3 / 2f64.sqrt()];
        assert!((d.interpolate(p) + 0.3).abs() <= 3.0 * h);
    }

    #[test]
    fn eikonal_residual_away_from_contour() {
        let h = 1.0 / 48.0;
        let g = disk_grid(h);
        let f = Shape::Union(vec![Shape::disk([-0.4, 0.0], 0.6), Shape::ellipse([0.5, 0.2], 0.7, 0.4)])
            .rasterize(&g)
            .unwrap();
        let d = signed_distance(&f);
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                // Band nodes carry exact distances, which need not satisfy the
                // discrete equation where two contour arcs compete.
                if d.values()[g.index(i, j)].abs() >= 3.0 * h {
                    let r = (upwind_gradient_norm(&g, d.values(), i, j) - 1.0).abs();
                    assert!(r <= 0.1, "residual {r} at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn redistance_keeps_node_signs() {
        let g = disk_grid(1.0 / 32.0);
        let f = LevelSetField::from_fn(g, |p| 0.3 * (0.8 - p[0].abs() - p[1].abs())).unwrap();
        let r = redistance(&f);
        for (a, b) in f.values().iter().zip(r.values()) {
            assert_eq!(*a > 0.0, *b > 0.0);
        }
    }

    #[test]
    fn empty_set_is_uniformly_negative() {
        let g = disk_grid(1.0 / 16.0);
        let r = redistance(&LevelSetField::empty(g));
        assert!(r.values().iter().all(|&v| v < 0.0));
    }
}
