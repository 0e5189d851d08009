//! Geometric measures and set surgery on level-set fields.

use std::collections::VecDeque;

use crate::contour;
use crate::distance::redistance;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, LevelSetField};
use crate::shapes::dist;

/// Sub-cell area of `{phi > 0}`.
pub fn volume(set: &LevelSetField) -> f64 {
    contour::area(set.grid(), set.values())
}

/// Length of the marching-squares zero contour.
pub fn perimeter(set: &LevelSetField) -> Result<f64> {
    set.check_margin()?;
    Ok(contour::extract(set.grid(), set.values()).length())
}

const DENSITY_SUBDIVISIONS: usize = 8;

/// `|B_r(x) ∩ Ω| / |B_r(x)|` by sub-cell midpoint quadrature.
///
/// Both numerator and denominator use the same quadrature points, so the
/// ratio is exactly 1 (or 0) when every sample in the ball is inside (outside).
pub fn density_ratio(set: &LevelSetField, x: [f64; 2], r: f64) -> Result<f64> {
    let grid = set.grid();
    if !(r >= 2.0 * grid.h) {
        return Err(Error::Precondition(format!("radius {r} is below 2h = {}", 2.0 * grid.h)));
    }
    if !grid.contains_ball(x, r) {
        return Err(Error::OutOfDomain { x: x[0], y: x[1], r });
    }
    let lo = grid.to_grid([x[0] - r, x[1] - r]);
    let hi = grid.to_grid([x[0] + r, x[1] + r]);
    let i0 = lo[0].floor().max(0.0) as usize;
    let j0 = lo[1].floor().max(0.0) as usize;
    let i1 = (hi[0].ceil() as usize).min(grid.nx - 1);
    let j1 = (hi[1].ceil() as usize).min(grid.ny - 1);
    let n = DENSITY_SUBDIVISIONS;
    let phi = set.values();
    let (mut inside, mut total) = (0usize, 0usize);
    for j in j0..j1 {
        for i in i0..i1 {
            let k = grid.index(i, j);
            let v = [phi[k], phi[k + 1], phi[k + grid.nx], phi[k + grid.nx + 1]];
            let base = grid.point(i, j);
            for b in 0..n {
                let t = (b as f64 + 0.5) / n as f64;
                for a in 0..n {
                    let s = (a as f64 + 0.5) / n as f64;
                    let p = [base[0] + s * grid.h, base[1] + t * grid.h];
                    if dist(p, x) > r {
                        continue;
                    }
                    total += 1;
                    let val = (1.0 - t) * ((1.0 - s) * v[0] + s * v[1]) + t * ((1.0 - s) * v[2] + s * v[3]);
                    if val > 0.0 {
                        inside += 1;
                    }
                }
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { inside as f64 / total as f64 })
}

/// Connected components (4-neighbour) of the nodes where `pred` holds.
fn components(grid: &GridSpec, pred: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
    let mut label = vec![false; grid.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..grid.len() {
        if label[start] || !pred(start) {
            continue;
        }
        let mut comp = Vec::new();
        label[start] = true;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            comp.push(k);
            let (i, j) = grid.ij(k);
            let mut visit = |n: usize| {
                if !label[n] && pred(n) {
                    label[n] = true;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < grid.nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - grid.nx);
            }
            if j + 1 < grid.ny {
                visit(k + grid.nx);
            }
        }
        out.push(comp);
    }
    out
}

/// Removes specks of the set and of its complement smaller than `(3h)^2`.
pub fn representative(set: &LevelSetField) -> LevelSetField {
    let grid = set.grid();
    let phi = set.values();
    let min_nodes = 9;
    let mut out = phi.to_vec();
    let mut changed = false;
    for comp in components(grid, |k| phi[k] > 0.0) {
        if comp.len() < min_nodes {
            for k in comp {
                out[k] = -0.5 * grid.h;
            }
            changed = true;
        }
    }
    for comp in components(grid, |k| phi[k] <= 0.0) {
        if comp.len() < min_nodes {
            for k in comp {
                out[k] = 0.5 * grid.h;
            }
            changed = true;
        }
    }
    if !changed {
        return set.clone();
    }
    redistance(&LevelSetField::new(*grid, out).expect("finite"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BooleanOp {
    Union,
    Intersection,
    Difference,
}

/// Set operation on two fields over the same grid by pointwise max/min.
///
/// The result is not redistanced: keeping `min(a, ·) ≤ a` pointwise makes the
/// cut-cell interface fractions, and hence the discrete functionals, exactly
/// monotone under the inclusions produced here.
pub fn boolean(a: &LevelSetField, b: &LevelSetField, op: BooleanOp) -> Result<LevelSetField> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let combined: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| match op {
            BooleanOp::Union => x.max(y),
            BooleanOp::Intersection => x.min(y),
            BooleanOp::Difference => x.min(-y),
        })
        .collect();
    LevelSetField::new(*a.grid(), combined)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutter {
    /// Removes `B_r(center)`.
    Ball { center: [f64; 2], radius: f64 },
    /// Keeps `{x : x . direction < offset}`.
    HalfSpace { direction: [f64; 2], offset: f64 },
}

impl Cutter {
    /// Exact signed distance of the kept region's complement piece.
    fn field(&self, grid: &GridSpec) -> LevelSetField {
        match *self {
            Cutter::Ball { center, radius } => {
                LevelSetField::from_fn(*grid, |p| radius - dist(p, center)).expect("finite")
            }
            Cutter::HalfSpace { direction, offset } => {
                let n = (direction[0].powi(2) + direction[1].powi(2)).sqrt();
                let d = [direction[0] / n, direction[1] / n];
                LevelSetField::from_fn(*grid, |p| offset / n - (p[0] * d[0] + p[1] * d[1])).expect("finite")
            }
        }
    }
}

/// `Ω \ B_r` for a ball cutter, `Ω ∩ H` for a half-space cutter.
pub fn cut(set: &LevelSetField, cutter: &Cutter) -> Result<LevelSetField> {
    let c = cutter.field(set.grid());
    match cutter {
        Cutter::Ball { .. } => boolean(set, &c, BooleanOp::Difference),
        Cutter::HalfSpace { .. } => boolean(set, &c, BooleanOp::Intersection),
    }
}

/// The complementary piece of a cut: `Ω ∩ B_r` or `Ω \ H`.
pub fn cut_complement(set: &LevelSetField, cutter: &Cutter) -> Result<LevelSetField> {
    let c = cutter.field(set.grid());
    match cutter {
        Cutter::Ball { .. } => boolean(set, &c, BooleanOp::Intersection),
        Cutter::HalfSpace { .. } => boolean(set, &c, BooleanOp::Difference),
    }
}

/// Mean curvature sampled on the zero contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureSample {
    pub point: [f64; 2],
    /// Outward unit normal `-grad phi / |grad phi|`.
    pub normal: [f64; 2],
    /// Positive for convex boundary pieces (1/r on a disk of radius r).
    pub curvature: f64,
    /// Contour length represented by this sample.
    pub weight: f64,
    pub segment: usize,
}

struct NodeGeometry {
    grad: [f64; 2],
    curvature: f64,
}

fn node_geometry(grid: &GridSpec, phi: &[f64], k: usize) -> NodeGeometry {
    let h = grid.h;
    let nx = grid.nx;
    let c = phi[k];
    let (l, r, d, u) = (phi[k - 1], phi[k + 1], phi[k - nx], phi[k + nx]);
    let px = (r - l) / (2.0 * h);
    let py = (u - d) / (2.0 * h);
    let pxx = (r - 2.0 * c + l) / (h * h);
    let pyy = (u - 2.0 * c + d) / (h * h);
    let pxy = (phi[k + nx + 1] - phi[k - nx + 1] - phi[k + nx - 1] + phi[k - nx - 1]) / (4.0 * h * h);
    let g2 = px * px + py * py;
    let kappa = if g2 > 0.0 { (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / g2.powf(1.5) } else { 0.0 };
    NodeGeometry { grad: [px, py], curvature: -kappa }
}

/// Curvature `H = -div(grad phi / |grad phi|)` by central differences,
/// bilinearly interpolated to segment midpoints.
pub fn sample_curvature(set: &LevelSetField) -> Result<Vec<CurvatureSample>> {
    set.check_margin()?;
    let grid = set.grid();
    let phi = set.values();
    let c = contour::extract(grid, phi);
    let mut out = Vec::with_capacity(c.segments.len());
    for (idx, s) in c.segments.iter().enumerate() {
        if s.length <= 0.0 {
            continue;
        }
        let k = s.cell;
        let nodes = [k, k + 1, k + grid.nx, k + grid.nx + 1];
        let geo: Vec<NodeGeometry> = nodes.iter().map(|&n| node_geometry(grid, phi, n)).collect();
        let m = s.midpoint();
        for g in &geo {
            let norm = (g.grad[0].powi(2) + g.grad[1].powi(2)).sqrt();
            if norm < 0.5 {
                return Err(Error::DegenerateGradient { norm, x: m[0], y: m[1] });
            }
        }
        let base = grid.point(k % grid.nx, k / grid.nx);
        let sx = (m[0] - base[0]) / grid.h;
        let sy = (m[1] - base[1]) / grid.h;
        let w = [(1.0 - sx) * (1.0 - sy), sx * (1.0 - sy), (1.0 - sx) * sy, sx * sy];
        let mut curvature = 0.0;
        let mut grad = [0.0; 2];
        for (wk, g) in w.iter().zip(&geo) {
            curvature += wk * g.curvature;
            grad[0] += wk * g.grad[0];
            grad[1] += wk * g.grad[1];
        }
        let gn = (grad[0].powi(2) + grad[1].powi(2)).sqrt().max(f64::MIN_POSITIVE);
        out.push(CurvatureSample {
            point: m,
            normal: [-grad[0] / gn, -grad[1] / gn],
            curvature,
            weight: s.length,
            segment: idx,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::Shape;
    use std::f64::consts::PI;

    fn unit_grid(h: f64) -> GridSpec {
        GridSpec::centered([0.0, 0.0], 1.5, h).unwrap()
    }

    #[test]
    fn empty_set_measures_zero() {
        let g = unit_grid(1.0 / 16.0);
        let e = LevelSetField::from_fn(g, |_| -1.0).unwrap();
        assert_eq!(volume(&e), 0.0);
        assert_eq!(perimeter(&e).unwrap(), 0.0);
    }

    #[test]
    fn unit_square_is_nearly_exact() {
        let h = 1.0 / 64.0;
        let g = GridSpec::covering(-0.5, 1.5, -0.5, 1.5, h).unwrap();
        let sq = Shape::rectangle([0.0, 0.0], [1.0, 1.0]).rasterize(&g).unwrap();
        assert!((volume(&sq) - 1.0).abs() <= 10.0 * h * h);
        assert!((perimeter(&sq).unwrap() - 4.0).abs() <= 0.04);
    }

    #[test]
    fn unit_disk_area_and_length() {
        let h = 1.0 / 128.0;
        let d = Shape::disk([0.0, 0.0], 1.0).rasterize(&unit_grid(h)).unwrap();
        assert!((volume(&d) - PI).abs() <= 0.005 * PI);
        assert!((perimeter(&d).unwrap() - 2.0 * PI).abs() <= 0.01 * 2.0 * PI);
    }

    #[test]
    fn perimeter_rejects_margin_contact() {
        let g = unit_grid(1.0 / 16.0);
        let big = Shape::disk([0.0, 0.0], 1.49).rasterize(&g).unwrap();
        assert!(matches!(perimeter(&big), Err(Error::MarginViolation { .. })));
    }

    #[test]
    fn density_extremes_and_half_plane() {
        let h = 1.0 / 64.0;
        let g = unit_grid(h);
        let d = Shape::disk([0.0, 0.0], 1.0).rasterize(&g).unwrap();
        assert_eq!(density_ratio(&d, [0.0, 0.0], 0.2).unwrap(), 1.0);
        assert_eq!(density_ratio(&d, [1.3, 0.0], 0.1).unwrap(), 0.0);
        let hp = Shape::HalfPlane { normal: [1.0, 0.0], offset: 0.013 }.rasterize(&g).unwrap();
        let r = 0.3;
        assert!((density_ratio(&hp, [0.013, 0.1], r).unwrap() - 0.5).abs() <= 2.0 * h / r);
        assert!(matches!(density_ratio(&d, [1.4, 0.0], 0.3), Err(Error::OutOfDomain { .. })));
        assert!(density_ratio(&d, [0.0, 0.0], h).is_err());
    }

    #[test]
    fn representative_removes_specks() {
        let h = 1.0 / 32.0;
        let g = unit_grid(h);
        let disk = Shape::disk([0.0, 0.0], 0.8).rasterize(&g).unwrap();
        let mut holed = disk.values().to_vec();
        holed[g.index(g.nx / 2, g.ny / 2)] = -0.01;
        let holed = LevelSetField::new(g, holed).unwrap();
        let fixed = representative(&holed);
        assert!(fixed.inside(g.index(g.nx / 2, g.ny / 2)));

        let mut specked = disk.values().to_vec();
        specked[g.index(g.nx - 6, g.ny - 6)] = 0.01;
        let fixed = representative(&LevelSetField::new(g, specked).unwrap());
        assert!(!fixed.inside(g.index(g.nx - 6, g.ny - 6)));
        assert_eq!(fixed.interior_count(), disk.interior_count());

        let two = Shape::Union(vec![Shape::disk([-0.6, 0.0], 0.4), Shape::disk([0.6, 0.0], 0.4)])
            .rasterize(&g)
            .unwrap();
        assert_eq!(representative(&two), two);
    }

    #[test]
    fn boolean_identities() {
        let g = unit_grid(1.0 / 32.0);
        let a = Shape::disk([-0.3, 0.0], 0.5).rasterize(&g).unwrap();
        let b = Shape::disk([0.8, 0.5], 0.3).rasterize(&g).unwrap();
        let u = boolean(&a, &a, BooleanOp::Union).unwrap();
        assert!((volume(&u) - volume(&a)).abs() <= 1e-12);
        assert!((perimeter(&u).unwrap() - perimeter(&a).unwrap()).abs() <= 1e-12);
        assert!(boolean(&a, &b, BooleanOp::Intersection).unwrap().is_empty_set());
        let other = GridSpec::centered([0.0, 0.0], 1.5, 1.0 / 16.0).unwrap();
        let c = Shape::disk([0.0, 0.0], 0.5).rasterize(&other).unwrap();
        assert!(matches!(boolean(&a, &c, BooleanOp::Union), Err(Error::GridMismatch)));
    }

    #[test]
    fn cuts() {
        let h = 1.0 / 64.0;
        let g = unit_grid(h);
        let d = Shape::disk([0.0, 0.0], 1.0).rasterize(&g).unwrap();
        let far = cut(&d, &Cutter::HalfSpace { direction: [1.0, 0.0], offset: 1.3 }).unwrap();
        assert!((volume(&far) - volume(&d)).abs() <= 1e-3 * volume(&d));
        let all = cut(&d, &Cutter::Ball { center: [0.0, 0.0], radius: 1.2 }).unwrap();
        assert!(all.is_empty_set());
        let half = cut(&d, &Cutter::HalfSpace { direction: [1.0, 0.0], offset: 0.0 }).unwrap();
        assert!((volume(&half) - PI / 2.0).abs() <= 0.01 * PI / 2.0);
    }

    #[test]
    fn curvature_of_disks_and_lines() {
        let r = 0.5;
        let h = r / 64.0;
        let g = unit_grid(h);
        let mean = |s: &[CurvatureSample]| {
            s.iter().map(|c| c.curvature * c.weight).sum::<f64>() / s.iter().map(|c| c.weight).sum::<f64>()
        };
        let small = sample_curvature(&Shape::disk([0.0, 0.0], r).rasterize(&g).unwrap()).unwrap();
        for c in &small {
            assert!((c.curvature - 1.0 / r).abs() <= 0.05 / r, "H = {}", c.curvature);
        }
        let large = sample_curvature(&Shape::disk([0.0, 0.0], 2.0 * r).rasterize(&g).unwrap()).unwrap();
        assert!((mean(&large) / mean(&small) - 0.5).abs() <= 0.025);

        let cap = Shape::Intersection(vec![
            Shape::HalfPlane { normal: [0.6, 0.8], offset: 0.1 },
            Shape::disk([0.0, 0.0], 1.2),
        ])
        .rasterize(&g)
        .unwrap();
        for c in sample_curvature(&cap).unwrap() {
            let along = c.point[0] * 0.6 + c.point[1] * 0.8;
            if (along - 0.1).abs() < 1e-3 && c.point[0].hypot(c.point[1]) < 1.0 {
                assert!(c.curvature.abs() <= 2.0 * h, "H = {}", c.curvature);
            }
        }
    }

    #[test]
    fn curvature_needs_a_usable_gradient() {
        let g = unit_grid(1.0 / 32.0);
        let flat = LevelSetField::from_fn(g, |p| 0.01 * (0.5 - p[0].hypot(p[1]))).unwrap();
        assert!(matches!(sample_curvature(&flat), Err(Error::DegenerateGradient { .. })));
    }
}
