//! Small deformations `Φ = Id + tT` and the pushed-forward set `Φ(Ω)`.

use crate::distance::redistance;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, LevelSetField};

const MAX_INVERSE_ITERATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Deformation {
    grid: GridSpec,
    field: Vec<[f64; 2]>,
    amplitude: f64,
}

impl Deformation {
    /// `T` sampled at the nodes of `grid`; rejects `|D(tT)| > 1/2`.
    pub fn new(grid: GridSpec, field: Vec<[f64; 2]>, amplitude: f64) -> Result<Self> {
        if field.len() != grid.len() {
            return Err(Error::InvalidField(format!("expected {} vectors, got {}", grid.len(), field.len())));
        }
        if !amplitude.is_finite() || field.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::InvalidField("deformation must be finite".into()));
        }
        let d = Self { grid, field, amplitude };
        let jac = d.jacobian_norm();
        if jac > 0.5 {
            return Err(Error::DeformationTooLarge(jac));
        }
        Ok(d)
    }

    pub fn from_fn(grid: GridSpec, amplitude: f64, t: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        let field = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                t(grid.point(i, j))
            })
            .collect();
        Self::new(grid, field, amplitude)
    }

    /// Rigid translation by `amplitude * c`.
    pub fn translation(grid: GridSpec, c: [f64; 2], amplitude: f64) -> Result<Self> {
        Self::from_fn(grid, amplitude, |_| c)
    }

    /// `T(x) = x - center`.
    pub fn dilation(grid: GridSpec, center: [f64; 2], amplitude: f64) -> Result<Self> {
        Self::from_fn(grid, amplitude, |p| [p[0] - center[0], p[1] - center[1]])
    }

    /// Radial bump `T(x) = (x - c) (1 - |x - c|²/R²)²` for `|x - c| < R`, zero outside.
    pub fn radial_bump(grid: GridSpec, center: [f64; 2], radius: f64, amplitude: f64) -> Result<Self> {
        Self::from_fn(grid, amplitude, |p| {
            let d = [p[0] - center[0], p[1] - center[1]];
            let s = (d[0] * d[0] + d[1] * d[1]) / (radius * radius);
            if s >= 1.0 {
                [0.0, 0.0]
            } else {
                let w = (1.0 - s).powi(2);
                [d[0] * w, d[1] * w]
            }
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Same `T` with a different amplitude.
    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        Self::new(self.grid, self.field.clone(), amplitude)
    }

    /// `tT(p)` by bilinear interpolation.
    pub fn displacement(&self, p: [f64; 2]) -> [f64; 2] {
        let (k, s, t) = self.cell(p);
        let nx = self.grid.nx;
        let f = &self.field;
        let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
        let nodes = [k, k + 1, k + nx, k + nx + 1];
        let mut out = [0.0; 2];
        for (wk, &n) in w.iter().zip(&nodes) {
            out[0] += wk * f[n][0];
            out[1] += wk * f[n][1];
        }
        [self.amplitude * out[0], self.amplitude * out[1]]
    }

    fn cell(&self, p: [f64; 2]) -> (usize, f64, f64) {
        let g = &self.grid;
        let q = g.to_grid(p);
        let x = q[0].clamp(0.0, (g.nx - 1) as f64);
        let y = q[1].clamp(0.0, (g.ny - 1) as f64);
        let i = (x.floor() as usize).min(g.nx - 2);
        let j = (y.floor() as usize).min(g.ny - 2);
        (g.index(i, j), x - i as f64, y - j as f64)
    }

    /// `sup |tT|` over the nodes.
    pub fn sup_displacement(&self) -> f64 {
        self.amplitude.abs() * self.field.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
    }

    /// `DT` at node `(i, j)` by central differences (one-sided at the border).
    fn nodal_jacobian(&self, i: usize, j: usize) -> [[f64; 2]; 2] {
        let g = &self.grid;
        let (il, ir) = (i.saturating_sub(1), (i + 1).min(g.nx - 1));
        let (jd, ju) = (j.saturating_sub(1), (j + 1).min(g.ny - 1));
        let fx = |c: usize| (self.field[g.index(ir, j)][c] - self.field[g.index(il, j)][c]) / ((ir - il) as f64 * g.h);
        let fy = |c: usize| (self.field[g.index(i, ju)][c] - self.field[g.index(i, jd)][c]) / ((ju - jd) as f64 * g.h);
        [[fx(0), fy(0)], [fx(1), fy(1)]]
    }

    /// `D(tT)(p)`, bilinear interpolation of the nodal difference quotients.
    pub fn jacobian_at(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let (k, s, t) = self.cell(p);
        let (i, j) = self.grid.ij(k);
        let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
        let corners = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
        let mut out = [[0.0; 2]; 2];
        for (wk, &(a, b)) in w.iter().zip(&corners) {
            let m = self.nodal_jacobian(a, b);
            for r in 0..2 {
                for c in 0..2 {
                    out[r][c] += self.amplitude * wk * m[r][c];
                }
            }
        }
        out
    }

    /// `sup ‖D(tT)‖₂` over the nodes.
    pub fn jacobian_norm(&self) -> f64 {
        let g = &self.grid;
        let mut sup: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                sup = sup.max(spectral_norm(self.nodal_jacobian(i, j)));
            }
        }
        self.amplitude.abs() * sup
    }

    /// `‖Φ − Id‖_{1,∞} = sup|tT| + sup‖D(tT)‖`.
    pub fn norm_1_inf(&self) -> f64 {
        self.sup_displacement() + self.jacobian_norm()
    }

    /// Solves `x + tT(x) = y` by fixed-point iteration.
    pub fn inverse(&self, y: [f64; 2]) -> std::result::Result<[f64; 2], f64> {
        let tol = 1e-10 * self.grid.h;
        let mut x = y;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            let d = self.displacement(x);
            let next = [y[0] - d[0], y[1] - d[1]];
            let step = (next[0] - x[0]).hypot(next[1] - x[1]);
            x = next;
            if step <= tol {
                return Ok(x);
            }
        }
        let d = self.displacement(x);
        Err((x[0] + d[0] - y[0]).hypot(x[1] + d[1] - y[1]))
    }
}

fn spectral_norm(m: [[f64; 2]; 2]) -> f64 {
    // Largest singular value of a 2x2 matrix.
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let c = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let tr = a + c;
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    (0.5 * (tr + disc)).max(0.0).sqrt()
}

/// `Φ(Ω)`, sampled as `phi(Φ⁻¹(y))` and redistanced.
pub fn apply_deformation(set: &LevelSetField, d: &Deformation) -> Result<LevelSetField> {
    if set.grid() != d.grid() {
        return Err(Error::GridMismatch);
    }
    if d.amplitude == 0.0 {
        return Ok(set.clone());
    }
    let g = *set.grid();
    let mut phi = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let (i, j) = g.ij(k);
        let x = d.inverse(g.point(i, j)).map_err(|residual| Error::DeformationInversion { node: k, residual })?;
        phi.push(set.interpolate(x));
    }
    Ok(redistance(&LevelSetField::new(g, phi)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::volume;
    use crate::shapes::Shape;

    fn setup() -> (GridSpec, LevelSetField) {
        let g = GridSpec::centered([0.0, 0.0], 1.6, 1.0 / 64.0).unwrap();
        let s = Shape::disk([0.0, 0.0], 0.8).rasterize(&g).unwrap();
        (g, s)
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let (g, s) = setup();
        let d = Deformation::radial_bump(g, [0.0, 0.0], 1.0, 0.0).unwrap();
        assert_eq!(apply_deformation(&s, &d).unwrap(), s);
    }

    #[test]
    fn translation_preserves_volume() {
        let (g, s) = setup();
        let d = Deformation::translation(g, [1.0, 0.5], 0.1).unwrap();
        let out = apply_deformation(&s, &d).unwrap();
        assert!((volume(&out) / volume(&s) - 1.0).abs() < 0.01);
        assert!(out.interpolate([0.1 + 0.8, 0.05]).abs() < 2.0 * g.h);
    }

    #[test]
    fn dilation_scales_volume() {
        let (g, s) = setup();
        let t = 0.05;
        let d = Deformation::dilation(g, [0.0, 0.0], t).unwrap();
        let ratio = volume(&apply_deformation(&s, &d).unwrap()) / volume(&s);
        assert!((ratio - (1.0 + t).powi(2)).abs() < 5e-3, "{ratio}");
    }

    #[test]
    fn large_jacobian_is_rejected() {
        let (g, _) = setup();
        assert!(matches!(Deformation::dilation(g, [0.0, 0.0], 0.6), Err(Error::DeformationTooLarge(_))));
    }

    #[test]
    fn norm_of_translation_is_its_length() {
        let (g, _) = setup();
        let d = Deformation::translation(g, [3.0, 4.0], 0.01).unwrap();
        assert!((d.norm_1_inf() - 0.05).abs() < 1e-12);
    }
}
