//! Analytic primitives rasterized to level-set fields (positive inside).

use crate::distance::redistance;
use crate::error::Result;
use crate::grid::{GridSpec, LevelSetField};

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disk { center: [f64; 2], radius: f64 },
    Rectangle { min: [f64; 2], max: [f64; 2] },
    /// Axis-aligned ellipse with semi-axes `a` (along x) and `b` (along y).
    Ellipse { center: [f64; 2], a: f64, b: f64 },
    Annulus { center: [f64; 2], inner: f64, outer: f64 },
    /// `{x : x . normal < offset}` with `normal` a unit vector.
    HalfPlane { normal: [f64; 2], offset: f64 },
    Union(Vec<Shape>),
    Intersection(Vec<Shape>),
    Difference(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn disk(center: [f64; 2], radius: f64) -> Self {
        Shape::Disk { center, radius }
    }

    pub fn rectangle(min: [f64; 2], max: [f64; 2]) -> Self {
        Shape::Rectangle { min, max }
    }

    pub fn ellipse(center: [f64; 2], a: f64, b: f64) -> Self {
        Shape::Ellipse { center, a, b }
    }

    /// Square of side `side` centred at `center`.
    pub fn square(center: [f64; 2], side: f64) -> Self {
        let s = side / 2.0;
        Shape::Rectangle { min: [center[0] - s, center[1] - s], max: [center[0] + s, center[1] + s] }
    }

    /// Level-set value at `p`: the signed distance for disks, rectangles,
    /// annuli and half-planes, a distance-like function otherwise.
    pub fn value(&self, p: [f64; 2]) -> f64 {
        match self {
            Shape::Disk { center, radius } => radius - dist(p, *center),
            Shape::Rectangle { min, max } => {
                let c = [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0];
                let half = [(max[0] - min[0]) / 2.0, (max[1] - min[1]) / 2.0];
                let qx = (p[0] - c[0]).abs() - half[0];
                let qy = (p[1] - c[1]).abs() - half[1];
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                -(outside + qx.max(qy).min(0.0))
            }
            Shape::Ellipse { center, a, b } => {
                let x = (p[0] - center[0]) / a;
                let y = (p[1] - center[1]) / b;
                (1.0 - (x * x + y * y).sqrt()) * a.min(*b)
            }
            Shape::Annulus { center, inner, outer } => {
                let r = dist(p, *center);
                (outer - r).min(r - inner)
            }
            Shape::HalfPlane { normal, offset } => offset - (p[0] * normal[0] + p[1] * normal[1]),
            Shape::Union(parts) => parts.iter().map(|s| s.value(p)).fold(f64::NEG_INFINITY, f64::max),
            Shape::Intersection(parts) => parts.iter().map(|s| s.value(p)).fold(f64::INFINITY, f64::min),
            Shape::Difference(a, b) => a.value(p).min(-b.value(p)),
        }
    }

    fn is_exact_distance(&self) -> bool {
        matches!(
            self,
            Shape::Disk { .. } | Shape::Rectangle { .. } | Shape::Annulus { .. } | Shape::HalfPlane { .. }
        )
    }

    /// Samples the shape on `grid`; non-distance primitives are redistanced.
    pub fn rasterize(&self, grid: &GridSpec) -> Result<LevelSetField> {
        let field = LevelSetField::from_fn(*grid, |p| self.value(p))?;
        if self.is_exact_distance() {
            Ok(field)
        } else {
            Ok(redistance(&field))
        }
    }
}

#[inline]
pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_distance_is_signed() {
        let r = Shape::rectangle([0.0, 0.0], [1.0, 1.0]);
        assert!((r.value([0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert!((r.value([0.5, 1.25]) + 0.25).abs() < 1e-15);
        assert!((r.value([1.3, 1.4]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn boolean_shapes_combine_values() {
        let a = Shape::disk([0.0, 0.0], 1.0);
        let b = Shape::disk([1.0, 0.0], 1.0);
        let u = Shape::Union(vec![a.clone(), b.clone()]);
        let d = Shape::Difference(Box::new(a), Box::new(b));
        assert!(u.value([1.5, 0.0]) > 0.0);
        assert!(d.value([0.5, 0.0]) < 0.0);
        assert!(d.value([-0.5, 0.0]) > 0.0);
    }
}
