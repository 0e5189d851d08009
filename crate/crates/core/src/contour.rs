//! Marching-squares reconstruction of `{phi > 0}`.
//!
//! Crossings are placed by linear interpolation along cell edges. Saddle cells
//! are resolved with the cell-centre average: a positive centre joins the two
//! positive corners. Every segment is oriented with the set on its left, so
//! each closed loop runs counter-clockwise around a component and clockwise
//! around a hole.

use std::collections::HashMap;

use crate::grid::GridSpec;

/// One oriented piece of the zero contour inside a single cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Length computed in cell-local coordinates, then scaled by `h`.
    pub length: f64,
    pub edge_a: usize,
    pub edge_b: usize,
    pub cell: usize,
}

impl Segment {
    pub fn midpoint(&self) -> [f64; 2] {
        [(self.a[0] + self.b[0]) / 2.0, (self.a[1] + self.b[1]) / 2.0]
    }

    /// Outward unit normal (the set lies to the left of `a -> b`).
    pub fn outward_normal(&self) -> [f64; 2] {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if n == 0.0 {
            [0.0, 0.0]
        } else {
            [d[1] / n, -d[0] / n]
        }
    }
}

/// Polyline chain of segment indices; `closed` when it returns to its start.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub segments: Vec<usize>,
    pub closed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Contour {
    pub segments: Vec<Segment>,
    pub chains: Vec<Chain>,
}

impl Contour {
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Ordered vertex list of a chain (closed chains do not repeat the start).
    pub fn chain_points(&self, chain: &Chain) -> Vec<[f64; 2]> {
        let mut pts: Vec<[f64; 2]> = chain.segments.iter().map(|&s| self.segments[s].a).collect();
        if !chain.closed {
            if let Some(&last) = chain.segments.last() {
                pts.push(self.segments[last].b);
            }
        }
        pts
    }
}

#[inline]
fn horizontal_edge(grid: &GridSpec, i: usize, j: usize) -> usize {
    2 * grid.index(i, j)
}

#[inline]
fn vertical_edge(grid: &GridSpec, i: usize, j: usize) -> usize {
    2 * grid.index(i, j) + 1
}

/// Corner values in counter-clockwise order starting at the lower-left node.
#[inline]
fn corners(grid: &GridSpec, phi: &[f64], i: usize, j: usize) -> [f64; 4] {
    let k = grid.index(i, j);
    [phi[k], phi[k + 1], phi[k + 1 + grid.nx], phi[k + grid.nx]]
}

/// Crossing positions on the four cell edges in local coordinates, computed
/// from the lower/left node so neighbouring cells agree bit-for-bit.
#[inline]
fn crossings(v: &[f64; 4]) -> [Option<[f64; 2]>; 4] {
    let cut = |a: f64, b: f64| (a > 0.0) != (b > 0.0);
    let t = |a: f64, b: f64| a / (a - b);
    [
        cut(v[0], v[1]).then(|| [t(v[0], v[1]), 0.0]),
        cut(v[1], v[2]).then(|| [1.0, t(v[1], v[2])]),
        cut(v[3], v[2]).then(|| [t(v[3], v[2]), 1.0]),
        cut(v[0], v[3]).then(|| [0.0, t(v[0], v[3])]),
    ]
}

const LOCAL_CORNERS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

/// Pairs of local edge indices `(from, to)` describing the contour in a cell.
fn cell_segments(v: &[f64; 4]) -> ([(usize, usize); 2], usize) {
    let pos = [v[0] > 0.0, v[1] > 0.0, v[2] > 0.0, v[3] > 0.0];
    let exits: Vec<usize> = (0..4).filter(|&k| pos[k] && !pos[(k + 1) % 4]).collect();
    let mut out = [(0, 0); 2];
    match exits.len() {
        0 => (out, 0),
        1 => {
            let ex = exits[0];
            let en = (0..4).find(|&k| !pos[k] && pos[(k + 1) % 4]).unwrap();
            out[0] = (ex, en);
            (out, 1)
        }
        _ => {
            let centre = (v[0] + v[1] + v[2] + v[3]) / 4.0;
            for (n, &ex) in exits.iter().enumerate() {
                let en = if centre > 0.0 { (ex + 1) % 4 } else { (ex + 3) % 4 };
                out[n] = (ex, en);
            }
            (out, 2)
        }
    }
}

fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

/// Area of `{phi > 0}` inside one cell, in units of `h^2`.
pub(crate) fn cell_area(v: &[f64; 4]) -> f64 {
    let pos = [v[0] > 0.0, v[1] > 0.0, v[2] > 0.0, v[3] > 0.0];
    let npos = pos.iter().filter(|&&p| p).count();
    if npos == 0 {
        return 0.0;
    }
    if npos == 4 {
        return 1.0;
    }
    let x = crossings(v);
    let saddle = npos == 2 && pos[0] == pos[2];
    let centre = (v[0] + v[1] + v[2] + v[3]) / 4.0;
    if saddle && centre <= 0.0 {
        let mut area = 0.0;
        for k in (0..4).filter(|&k| pos[k]) {
            let tri = [x[(k + 3) % 4].unwrap(), LOCAL_CORNERS[k], x[k].unwrap()];
            area += shoelace(&tri);
        }
        return area;
    }
    let mut poly = Vec::with_capacity(8);
    for k in 0..4 {
        if pos[k] {
            poly.push(LOCAL_CORNERS[k]);
        }
        if let Some(p) = x[k] {
            poly.push(p);
        }
    }
    shoelace(&poly)
}

/// Sub-cell area of `{phi > 0}` summed in row-major cell order.
pub fn area(grid: &GridSpec, phi: &[f64]) -> f64 {
    let mut sum = 0.0;
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx - 1 {
            let v = corners(grid, phi, i, j);
            if v.iter().all(|&a| a <= 0.0) {
                continue;
            }
            sum += cell_area(&v);
        }
    }
    sum * grid.h * grid.h
}

/// Extracts all contour segments and links them into chains.
pub fn extract(grid: &GridSpec, phi: &[f64]) -> Contour {
    let h = grid.h;
    let mut segments = Vec::new();
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx - 1 {
            let v = corners(grid, phi, i, j);
            let (pairs, n) = cell_segments(&v);
            if n == 0 {
                continue;
            }
            let x = crossings(&v);
            let edge_ids = [
                horizontal_edge(grid, i, j),
                vertical_edge(grid, i + 1, j),
                horizontal_edge(grid, i, j + 1),
                vertical_edge(grid, i, j),
            ];
            let base = grid.point(i, j);
            for &(from, to) in &pairs[..n] {
                let la = x[from].unwrap();
                let lb = x[to].unwrap();
                let length = ((lb[0] - la[0]).powi(2) + (lb[1] - la[1]).powi(2)).sqrt() * h;
                segments.push(Segment {
                    a: [base[0] + la[0] * h, base[1] + la[1] * h],
                    b: [base[0] + lb[0] * h, base[1] + lb[1] * h],
                    length,
                    edge_a: edge_ids[from],
                    edge_b: edge_ids[to],
                    cell: grid.index(i, j),
                });
            }
        }
    }
    let chains = link(&segments);
    Contour { segments, chains }
}

fn link(segments: &[Segment]) -> Vec<Chain> {
    let mut by_start: HashMap<usize, usize> = HashMap::with_capacity(segments.len());
    let mut has_pred = vec![false; segments.len()];
    for (k, s) in segments.iter().enumerate() {
        by_start.insert(s.edge_a, k);
    }
    for s in segments {
        if let Some(&next) = by_start.get(&s.edge_b) {
            has_pred[next] = true;
        }
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    // Open chains first (they start where no segment feeds in), then loops.
    let starts: Vec<usize> =
        (0..segments.len()).filter(|&k| !has_pred[k]).chain(0..segments.len()).collect();
    for start in starts {
        if used[start] {
            continue;
        }
        let mut chain = Vec::new();
        let mut cur = start;
        let mut closed = false;
        loop {
            used[cur] = true;
            chain.push(cur);
            match by_start.get(&segments[cur].edge_b) {
                Some(&next) if next == start => {
                    closed = true;
                    break;
                }
                Some(&next) if !used[next] => cur = next,
                _ => break,
            }
        }
        chains.push(Chain { segments: chain, closed });
    }
    chains
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_corner_area_is_a_triangle() {
        // phi = 1 at the origin corner, crossings at the midpoints.
        let v = [1.0, -1.0, -3.0, -1.0];
        assert!((cell_area(&v) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn complementary_cells_sum_to_one() {
        let cases = [[1.0, -1.0, -3.0, -1.0], [0.3, 0.2, -0.5, 0.7], [1.0, -2.0, 1.5, -0.1], [1.0, -0.2, 0.5, -0.3]];
        for v in cases {
            let neg = [-v[0], -v[1], -v[2], -v[3]];
            assert!((cell_area(&v) + cell_area(&neg) - 1.0).abs() < 1e-14, "{v:?}");
        }
    }

    #[test]
    fn saddle_follows_centre_sign() {
        let joined = [1.0, -0.1, 1.0, -0.1];
        let split = [0.1, -1.0, 0.1, -1.0];
        assert_eq!(cell_segments(&joined).1, 2);
        assert!(cell_area(&joined) > 0.5);
        assert!(cell_area(&split) < 0.1);
    }

    #[test]
    fn segments_keep_the_set_on_the_left() {
        let grid = GridSpec::new(16, 16, 1.0, [0.0, 0.0]).unwrap();
        let phi: Vec<f64> = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                5.0 - ((i as f64 - 7.5).powi(2) + (j as f64 - 7.2).powi(2)).sqrt()
            })
            .collect();
        let c = extract(&grid, &phi);
        assert_eq!(c.chains.len(), 1);
        assert!(c.chains[0].closed);
        for s in &c.segments {
            let m = s.midpoint();
            let n = s.outward_normal();
            let inside = grid.interpolate(&phi, [m[0] - 0.2 * n[0], m[1] - 0.2 * n[1]]);
            assert!(inside > 0.0);
        }
        // Closed loop around a component is counter-clockwise.
        let pts = c.chain_points(&c.chains[0]);
        assert!(shoelace(&pts) > 0.0);
    }
}
